from .exceptions import SubsidenceError, EXIT_CODES
from .io import read_frame, write_frame, check_columns, file_hash
from .manifest import RunManifest
