"""Expected signature matching for parameter estimation in polynomial rough differential equations."""

from esme.drivers import (
    ExpectedSignature,
    SimConfig,
    empirical_expected_sig,
    expected_sig_time_bm,
    mc_expected_sig_time_fbm,
    simulate_responses,
)
from esme.estimator import (
    EstimateReport,
    EstimationProblem,
    build_system,
    empirical_moments,
    estimate,
    jacobian_D,
    normalize_estimates,
    solve_system,
)
from esme.picard import (
    PicardExpansion,
    VectorField,
    augment_time_scaled,
    expected_response_signature,
    picard_expansions,
    picard_level1,
)
from esme.polynomials import MultiPoly, parse_poly
from esme.signature import SampledPath, TruncatedSignature, chen_concat, path_signature
from esme.words import shuffle

__all__ = [
    "ExpectedSignature", "SimConfig", "empirical_expected_sig", "expected_sig_time_bm",
    "mc_expected_sig_time_fbm", "simulate_responses", "EstimateReport", "EstimationProblem",
    "build_system", "empirical_moments", "estimate", "jacobian_D", "normalize_estimates",
    "solve_system", "PicardExpansion", "VectorField", "augment_time_scaled",
    "expected_response_signature", "picard_expansions", "picard_level1", "MultiPoly",
    "parse_poly", "SampledPath", "TruncatedSignature", "chen_concat", "path_signature", "shuffle",
]
