import argparse
import logging
import time

import numpy as np
import pandas as pd
from tqdm import tqdm

from config import PathConfig
from src.models import build_design, fit_glm, fit_severity, fit_zero_inflated
from src.synthetic import GeneratorConfig, generate_panel, recovery_test
from src.utils import write_frame

ORDER = ('zinb', 'zip', 'negbin', 'poisson')
# count block strong enough for the mixture to be identified at desk scale
ZERO_INFLATED_TRUTH = dict(family='zinb', frequency_coefficients=(-7.0, 0.8, -0.4, 0.02, 1.0, -0.1),
                           zero_coefficients=(0.5, -0.6, 0.3, 0.0, -0.8, 0.0), negbin_size=1.5)


def coefficient_recovery(n_towns: int, seed: int) -> dict:
    start = time.perf_counter()
    result = recovery_test(GeneratorConfig(seed=seed, n_towns=n_towns, family='poisson'), 'poisson')
    print(result.table.to_string(index=False))
    return {'check': 'poisson recovery', 'passed': result.passed, 'seconds': time.perf_counter() - start}


def aic_ordering(n_towns: int, seeds: range) -> dict:
    start = time.perf_counter()
    held, failed = 0, 0
    for seed in tqdm(seeds, desc='aic ordering'):
        try:
            panel = generate_panel(GeneratorConfig(seed=seed, n_towns=n_towns, **ZERO_INFLATED_TRUTH)).panel
            design = build_design(panel)
            aic = {'poisson': fit_glm(design, 'poisson').aic, 'negbin': fit_glm(design, 'negbin').aic,
                   'zip': fit_zero_inflated(design, design, 'zip').aic,
                   'zinb': fit_zero_inflated(design, design, 'zinb').aic}
            held += all(aic[a] < aic[b] for a, b in zip(ORDER, ORDER[1:]))
        except Exception:
            logging.exception(f"AIC ordering failed for seed {seed}")
            failed += 1
    share = held / max(1, len(seeds) - failed)
    return {'check': 'aic ordering', 'passed': share >= 0.9, 'share': share, 'failed': failed,
            'seconds': time.perf_counter() - start}


def severity_anchor(seed: int) -> dict:
    start = time.perf_counter()
    synthetic = generate_panel(GeneratorConfig(seed=seed, n_towns=4000, frequency_coefficients=(-5.0, 0, 0, 0, 0, 0)))
    model = fit_severity(synthetic.panel)
    claims = synthetic.panel['claims'].to_numpy(dtype=float)
    fitted = float(np.average(model.predict(synthetic.panel[claims > 0]), weights=claims[claims > 0]))
    error = abs(fitted / synthetic.truth.severity_mean - 1)
    return {'check': 'severity anchor', 'passed': error <= 0.02, 'relative_error': error, 'claims': int(claims.sum()),
            'seconds': time.perf_counter() - start}


if __name__ == '__main__':
    parser = argparse.ArgumentParser(description="Desk-scale acceptance runs on synthetic panels")
    parser.add_argument('--towns', type=int, default=30000)
    parser.add_argument('--ordering-towns', type=int, default=3000)
    parser.add_argument('--seeds', type=int, default=50)
    parser.add_argument('--seed', type=int, default=2018)
    args = parser.parse_args()
    logging.basicConfig(level=logging.WARNING)

    results = [coefficient_recovery(args.towns, args.seed),
               aic_ordering(args.ordering_towns, range(args.seed, args.seed + args.seeds)),
               severity_anchor(args.seed)]
    summary = pd.DataFrame(results)
    print(summary.to_string(index=False))
    write_frame(summary, f"{PathConfig.REPORT_PATH}/acceptance.csv")
