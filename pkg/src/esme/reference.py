"""Published reference values for the two worked examples, used by ``esme selftest``."""

from __future__ import annotations

from fractions import Fraction

DIFFUSION_FIELD = [["a*(1-y)", "b*y^2"]]
DIFFUSION_STATE = ["y"]
DIFFUSION_PARAMS = ["a", "b"]
THETA_TRUE = {"a": 1.0, "b": 2.0}
HORIZON = Fraction(1, 4)
HURST = Fraction(11, 24)

# E[Y(3)^{(1)}_{0,t}] for the diffusion example, as printed. The a^3 b^2 t^4 sign
# disagrees with the Picard computation (see the decisions ledger).
FIRST_MOMENT_PRINTED = "a*t - 1/2*a^2*t^2 + 1/6*a^3*t^3 - 1/4*a^3*b^2*t^4 - 1/10*a^4*b^2*t^5"
FIRST_MOMENT_CORRECTED = "a*t - 1/2*a^2*t^2 + 1/6*a^3*t^3 + 1/4*a^3*b^2*t^4 - 1/10*a^4*b^2*t^5"

# E[2 Y(3)^{(1,1)}_{0,t}], as printed.
SECOND_MOMENT_PRINTED = (
    "a^2*t^2 - a^3*t^3 + 7/12*a^4*t^4 - 1/6*a^5*t^5 + 7/10*a^4*b^2*t^5"
    " + 1/36*a^6*t^6 - 17/20*a^5*b^2*t^6 + 191/420*a^6*b^2*t^7"
    " - 11/105*a^7*b^2*t^8 + 21/80*a^6*b^4*t^8 + 1/144*a^8*b^2*t^9 - 43/180*a^7*b^4*t^9"
    " + 33/700*a^8*b^4*t^10 + 1/50*a^8*b^6*t^11"
)

# Diffusion roots for one data set at N=2000 (b sign not identifiable).
DIFFUSION_ROOT = (0.996353, 2.12892)
DIFFUSION_NORMALIZED_COV = [[0.97172, 0.0243445], [0.0243445, 0.954654]]

# Monte Carlo fBM first moment at T=1/4, h=11/24 (depends on private draws).
FBM_FIRST_MOMENT_PRINTED = (
    "0.25*a - 0.03125*a^2 + 0.00260417*a^3 + 0.00044726*a^2*b - 0.000111815*a^3*b"
    " + 0.00000497138*a^4*b + 0.00116494*a^3*b^2 - 0.000115953*a^4*b^2"
    " + 0.00000253676*a^4*b^3"
)
DAVIE_ERROR_ORDER = 0.075
