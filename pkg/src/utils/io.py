import hashlib
import typing as tp
from pathlib import Path

import pandas as pd

from config import GeneralConfig, PathConfig
from .exceptions import SchemaError

_ID_COLUMNS = {'town_id': str, 'cell_id': str, 'region': str}


def read_frame(path: tp.Union[str, Path], required: tp.Sequence[str], source: str = None) -> pd.DataFrame:
    """
    Read a delimited text file and check its header contract.
    :param path: comma separated file with a header row
    :param required: columns that must be present
    :param source: name used in error messages, defaults to the file name
    :return: frame with identifier columns kept as strings
    """
    source = source or Path(path).name
    header = pd.read_csv(path, nrows=0).columns
    dtype = {column: kind for column, kind in _ID_COLUMNS.items() if column in header}
    frame = pd.read_csv(path, dtype=dtype)
    check_columns(frame, required, source)
    return frame


def check_columns(frame: pd.DataFrame, required: tp.Sequence[str], source: str):
    for column in required:
        if column not in frame.columns:
            raise SchemaError(source, column)


def write_frame(frame: pd.DataFrame, path: tp.Union[str, Path]) -> Path:
    path = Path(path)
    PathConfig.mkdir(path.parent)
    frame.to_csv(path, index=False, float_format=GeneralConfig.FLOAT_FORMAT, lineterminator='\n')
    return path


def file_hash(path: tp.Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 20), b''):
            digest.update(chunk)
    return digest.hexdigest()


def format_float(value: float) -> str:
    return GeneralConfig.FLOAT_FORMAT % value
