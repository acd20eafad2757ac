"""
A diffusion driven by fractional Brownian motion
================================================

Same vector field, but the noise is fBM with Hurst index 11/24. No closed form for
the expected signature of ``(t, B^h)`` is available, so it is estimated from exact
fBM samples (circulant embedding), only on the words the Picard expansion needs.
Responses are simulated with Davie's second-order scheme.
"""

import json
from pathlib import Path

import numpy as np

from esme import cli
from esme.estimator import fit, jacobian_D, monte_carlo_moment_covariance, standard_errors
from esme.picard import picard_expansions

config_path = Path(__file__).parent / "configs" / "fbm.json"
cfg = cli.ExperimentConfig.from_dict(json.loads(config_path.read_text()))
print("scheme:", cfg.scheme, " strong error order dt^(3h-1) =", round(cfg.dt ** (3 * cfg.hurst - 1), 4))

expansions = picard_expansions(cfg.model, cfg.r, cfg.words, y0=list(cfg.y0))
words = {w for e in expansions.values() for w in e.coefficients}
print(f"driver words needed: {len(words)} (longest {max(map(len, words))})")

equations = cli.moment_equations(cfg, None)
print("lowest terms of E^(1)(a, b):")
for exps, coef in sorted(equations[(1,)].terms.items())[:6]:
    print(f"  a^{exps[0]} b^{exps[1]}: {float(coef): .6f}")

###############################################################################
# One data set of 2000 paths
# --------------------------

seed = cfg.replication_seeds()[0]
times, responses = cli.simulate_replication(cfg, seed)
report, problem = fit(equations, cfg.params, responses, cfg.box, cfg.r, cfg.theta_true)
print("\nroots:", np.round(report.solutions, 4).tolist())

# Standard errors combine sampling noise with the spread of the Monte Carlo
# expected signature, which does not shrink as N grows.
truth = np.array([cfg.theta_true[p] for p in cfg.params])
drivers, _, _, symmetric = cli.driver_samples(cfg)
mc_cov = monte_carlo_moment_covariance(expansions, drivers, cfg.theta_true, symmetric)
D = jacobian_D(problem, truth)
print("SE, sampling only:", np.round(standard_errors(D, report.sigma, report.sample_size), 4))
print("SE, with driver MC:", np.round(standard_errors(D, report.sigma, report.sample_size, mc_cov), 4))
