from .base_model import BaseModel, covariate_matrix
from .design import DesignMatrix, build_design, panel_response, INTERCEPT
from .glm import Family, FittedGlm, PowerScan, fit_glm, fit_tweedie, power_scan, predict_rate, information_criteria
from .tweedie import tweedie_log_density
from .zero_inflated import ZeroInflatedFamily, ZeroInflatedModel, zi_pmf, fit_zero_inflated, zi_predict
from .tree import SplitMode, SplitNode, Split, best_split, grow_tree
from .forest import Forest, ForestParams, forest_fit, forest_predict
from .cost import (CompoundPrediction, CostPipeline, CostComparison, fit_severity, fit_total_cost, compound_predict,
                   compound_records, simulate_compound, fit_cost_pipelines, compare_cost_models)
from .serialization import save_model, load_model
from .registry import ModelSpec, model_spec, model_specs, MODEL_NAMES, COUNT_MODELS, COST_MODELS
