from .generator import (GeneratorConfig, Truth, SyntheticPanel, generate_panel, read_truth, town_id, TRUTH_COVARIATES,
                        FAMILIES)
from .climate import generate_climate
from .recovery import RecoveryResult, recovery_test, recovery_table
