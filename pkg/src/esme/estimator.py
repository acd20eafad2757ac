"""Expected-signature matching: moment system, root finding and asymptotics."""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from esme.picard import PicardExpansion, expected_response_signature
from esme.polynomials import MultiPoly
from esme.signature import SampledPath, batch_signature_entries, batch_signature_levels
from esme.words import Word, format_word, word_index

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_GRID = 17


class DegenerateJacobianError(np.linalg.LinAlgError):
    """D is singular at the reference point; the normalisation is undefined."""


@dataclass
class EstimationProblem:
    """The polynomial system ``E^tau_r(theta) = M^tau_N`` for ``tau`` in ``words``."""

    params: tuple[str, ...]
    words: list
    equations: dict
    targets: dict
    r: int
    sample_size: int | None = None

    def __post_init__(self):
        self.params = tuple(self.params)
        self.words = [tuple(w) for w in self.words]
        if not self.words:
            raise ValueError("the word set V is empty")
        if len(self.words) < len(self.params):
            raise ValueError(f"need at least {len(self.params)} words, got {len(self.words)}")
        for w in self.words:
            eq = self.equations[w]
            extra = set(eq.free_variables()) - set(self.params)
            if extra:
                raise ValueError(f"equation for {format_word(w)} still depends on {sorted(extra)}")
            self.equations[w] = eq.embed(self.params)
        self._compiled = None

    @property
    def square(self) -> bool:
        return len(self.words) == len(self.params)

    def _compile(self):
        if self._compiled is None:
            polys = [self.equations[w] for w in self.words]
            values = [p.to_arrays() for p in polys]
            grads = [[p.diff(v).to_arrays() for v in self.params] for p in polys]
            target = np.array([float(self.targets[w]) for w in self.words])
            self._compiled = values, grads, target
        return self._compiled

    @staticmethod
    def _eval(arrays, theta: np.ndarray) -> np.ndarray:
        exps, coefs = arrays
        if coefs.size == 0:
            return np.zeros(theta.shape[0])
        mono = np.prod(theta[:, None, :] ** exps[None, :, :], axis=2)
        return mono @ coefs

    def model(self, theta) -> np.ndarray:
        """``E_r^V(theta)`` for a batch of points ``(S, d)`` -> ``(S, |V|)``."""
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        values, _, _ = self._compile()
        return np.stack([self._eval(v, theta) for v in values], axis=1)

    def residual(self, theta) -> np.ndarray:
        _, _, target = self._compile()
        return self.model(theta) - target

    def jacobian(self, theta) -> np.ndarray:
        """``(S, |V|, d)`` derivatives of the model (rows are words)."""
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        _, grads, _ = self._compile()
        return np.stack(
            [np.stack([self._eval(g, theta) for g in row], axis=1) for row in grads], axis=1
        )


@dataclass
class EstimateReport:
    params: tuple
    words: list
    solutions: list
    residuals: list
    D: list = field(default_factory=list)
    sigma: np.ndarray | None = None
    phi: list = field(default_factory=list)
    normalized: list | None = None
    theta_ref: Mapping[str, float] | None = None
    targets: dict | None = None
    sample_size: int | None = None
    notes: list = field(default_factory=list)

    @property
    def identified(self) -> bool:
        return len(self.solutions) == 1

    def to_dict(self) -> dict:
        def arr(x):
            return None if x is None else np.asarray(x).tolist()

        return {
            "params": list(self.params),
            "words": [format_word(w) for w in self.words],
            "sample_size": self.sample_size,
            "targets": None if self.targets is None else
            {format_word(w): float(v) for w, v in self.targets.items()},
            "solutions": [arr(s) for s in self.solutions],
            "residuals": [float(r) for r in self.residuals],
            "D": [arr(d) for d in self.D],
            "Sigma": arr(self.sigma),
            "Phi": [arr(p) for p in self.phi],
            "theta_ref": None if self.theta_ref is None else dict(self.theta_ref),
            "normalized": None if self.normalized is None else [arr(z) for z in self.normalized],
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def _response_batch(responses) -> np.ndarray:
    if isinstance(responses, np.ndarray):
        arr = responses
        if arr.ndim == 2:
            arr = arr[:, :, None]
        return arr
    responses = list(responses)
    if not responses:
        raise ValueError("need at least one response path")
    values = [p.values if isinstance(p, SampledPath) else np.asarray(p) for p in responses]
    if len({v.shape for v in values}) != 1:
        raise ValueError("response paths must share their grid")
    return np.stack(values)


def empirical_moments(responses, words: Sequence[Word], level: int | None = None):
    """Average signature entries of observed responses.

    Args:
        responses: list of :class:`SampledPath` or an array ``(N, points, m)``.
        words: response words ``V``.
        level: truncation level; defaults to the longest word.

    Returns:
        ``(moments, per_path)``: ``{tau: M^tau_N}`` and the ``(N, |V|)`` matrix of
        per-path entries used for the sample covariance.
    """
    batch = _response_batch(responses)
    if batch.shape[0] == 0:
        raise ValueError("need at least one response path")
    words = [tuple(w) for w in words]
    need = max(len(w) for w in words)
    level = need if level is None else level
    if level < need:
        raise ValueError(f"level {level} too small for words of length {need}")
    m = batch.shape[2]
    levels = batch_signature_levels(np.diff(batch, axis=1), need)
    per_path = np.stack([levels[len(w)][:, word_index(w, m)] for w in words], axis=1)
    moments = dict(zip(words, per_path.mean(axis=0)))
    return moments, per_path


def theoretical_moments(
    expansions: Mapping[Word, PicardExpansion],
    driver_esig,
    y0=None,
    params: Sequence[str] | None = None,
    horizon=None,
) -> dict:
    """``{tau: E^tau_r(theta)}`` as exact polynomials in the parameters only.

    ``horizon`` replaces a symbolic time variable (``driver_esig.horizon`` when it is a
    symbol name) by its value.
    """
    words = list(expansions)
    if not words:
        raise ValueError("the word set V is empty")
    first = expansions[words[0]]
    params = tuple(params) if params is not None else tuple(
        v for v in first.variables if v not in first.initial_vars
    )
    symbol = driver_esig.horizon if isinstance(driver_esig.horizon, str) else None
    equations = {}
    for w in words:
        exp = expansions[w]
        poly = expected_response_signature(exp, driver_esig, y0 if exp.initial_vars else None)
        if symbol is not None and symbol in poly.variables:
            if horizon is None:
                raise ValueError(f"expected signature is symbolic in {symbol!r}; pass horizon")
            poly = poly.substitute({symbol: horizon})
        free = tuple(v for v in poly.free_variables() if v not in params)
        equations[tuple(w)] = poly.embed(params + free)
    return equations


def build_system(
    expansions: Mapping[Word, PicardExpansion],
    driver_esig,
    targets: Mapping[Word, float],
    y0=None,
    params: Sequence[str] | None = None,
    horizon=None,
    sample_size: int | None = None,
) -> EstimationProblem:
    """Contract each expansion with the driver expected signature and pair with targets."""
    words = [tuple(w) for w in expansions]
    if set(words) != set(tuple(w) for w in targets):
        raise ValueError("expansions and targets must cover the same words")
    first = expansions[words[0]]
    params = tuple(params) if params is not None else tuple(
        v for v in first.variables if v not in first.initial_vars
    )
    equations = theoretical_moments(expansions, driver_esig, y0, params, horizon)
    return EstimationProblem(params, words, equations, {tuple(w): v for w, v in targets.items()},
                             first.r, sample_size)


def _start_grid(box: Sequence[tuple], points: int) -> np.ndarray:
    axes = [np.linspace(lo, hi, points) for lo, hi in box]
    return np.array(list(itertools.product(*axes)))


def _newton(problem: EstimationProblem, starts: np.ndarray, least_squares: bool,
            max_iter: int = 100) -> np.ndarray:
    x = starts.copy()
    active = np.ones(len(x), dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        xa = x[idx]
        F = problem.residual(xa)
        J = problem.jacobian(xa)
        if least_squares:
            JT = np.transpose(J, (0, 2, 1))
            A = JT @ J
            g = np.einsum("sij,sj->si", JT, F)
        else:
            A, g = J, F
        cond = np.linalg.cond(A)
        ok = np.isfinite(cond) & (cond < 1e14)
        step = np.zeros_like(xa)
        if ok.any():
            step[ok] = -np.linalg.solve(A[ok], g[ok][..., None])[..., 0]
        f0 = np.linalg.norm(F, axis=1)
        # Damping: halve until the residual norm does not increase.
        lam = np.ones(len(xa))
        accepted = np.zeros(len(xa), dtype=bool)
        for _ in range(30):
            trial = xa + lam[:, None] * step
            with np.errstate(over="ignore", invalid="ignore"):
                ft = np.linalg.norm(problem.residual(trial), axis=1)
            good = np.isfinite(ft) & (ft <= f0) & ~accepted
            accepted |= good
            if accepted.all():
                break
            lam = np.where(accepted, lam, lam / 2)
        new = xa + np.where(accepted, lam, 0.0)[:, None] * step
        moved = np.max(np.abs(new - xa), axis=1)
        x[idx] = new
        scale = 1 + np.max(np.abs(new), axis=1)
        done = (~ok) | (~accepted) | (moved <= 1e-15 * scale)
        active[idx[done]] = False
    return x


def solve_system(
    problem: EstimationProblem,
    box: Sequence[tuple] | Mapping[str, tuple],
    multistart: int = DEFAULT_GRID,
    tol: float = DEFAULT_TOL,
    mode: str = "roots",
) -> list[np.ndarray]:
    """Real solutions in ``box`` by damped Newton from a grid of starting points.

    In ``roots`` mode (square systems) every returned point has residual infinity-norm
    below ``tol``. In ``least_squares`` mode the Gauss-Newton stationary points of
    ``0.5 * ||E(theta) - M||^2`` are returned. An empty list means nothing was found.
    """
    if isinstance(box, Mapping):
        box = [tuple(box[p]) for p in problem.params]
    box = [tuple(map(float, b)) for b in box]
    if len(box) != len(problem.params):
        raise ValueError(f"box has {len(box)} intervals for {len(problem.params)} parameters")
    if mode not in ("roots", "least_squares"):
        raise ValueError(f"unknown mode {mode!r}")
    least_squares = mode == "least_squares"
    if not least_squares and not problem.square:
        raise ValueError("root mode needs a square system; use mode='least_squares'")
    starts = _start_grid(box, multistart)
    x = _newton(problem, starts, least_squares)
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    finite = np.all(np.isfinite(x), axis=1)
    width = hi - lo
    inside = finite & np.all((x >= lo - 1e-9 * width) & (x <= hi + 1e-9 * width), axis=1)
    cand = x[inside]
    if cand.size == 0:
        return []
    F = problem.residual(cand)
    if least_squares:
        J = problem.jacobian(cand)
        grad = np.einsum("svd,sv->sd", J, F)
        keep = np.max(np.abs(grad), axis=1) < max(tol, 1e-12) * 1e2
    else:
        keep = np.max(np.abs(F), axis=1) < tol
    cand = cand[keep]
    found: list[np.ndarray] = []
    radius = 10 * tol * (1 + np.max(np.abs(cand), initial=0))
    radius = max(radius, 1e-7)
    for point in cand[np.lexsort(cand.T[::-1])]:
        if not any(np.max(np.abs(point - f)) <= radius for f in found):
            found.append(point)
    return found


def canonicalize(solutions: Sequence[np.ndarray], params: Sequence[str],
                 unsigned: Sequence[str], radius: float = 1e-7) -> list[np.ndarray]:
    """Map sign-unidentifiable coordinates to their nonnegative representative and dedupe."""
    idx = [list(params).index(p) for p in unsigned]
    out: list[np.ndarray] = []
    for s in solutions:
        s = np.array(s, dtype=float)
        s[idx] = np.abs(s[idx])
        if not any(np.max(np.abs(s - o)) <= radius for o in out):
            out.append(s)
    return out


def jacobian_D(problem: EstimationProblem, theta) -> np.ndarray:
    """``D[i, tau] = d E^tau_r / d theta_i`` from exact symbolic derivatives."""
    theta = np.asarray(theta, dtype=float).reshape(1, -1)
    return problem.jacobian(theta)[0].T


def sample_covariance(per_path_entries) -> np.ndarray:
    x = np.asarray(per_path_entries, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise ValueError("sample covariance needs at least two paths")
    cov = np.cov(x, rowvar=False, ddof=1)
    return np.atleast_2d(0.5 * (cov + cov.T))


def psd_sqrt(sigma) -> np.ndarray:
    """Symmetric PSD square root; eigenvalues below ``1e-12 * trace`` are clamped to 0."""
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    sym = 0.5 * (sigma + sigma.T)
    w, v = np.linalg.eigh(sym)
    w = np.where(w < 1e-12 * max(np.trace(sym), 0.0), 0.0, w)
    return (v * np.sqrt(w)) @ v.T


def asymptotic_phi(D, sigma) -> np.ndarray:
    """``Phi = (D^T)^{-1} Sigma^{1/2}`` where ``D^T`` is the usual (word x parameter) Jacobian."""
    D = np.atleast_2d(np.asarray(D, dtype=float))
    if D.shape[0] != D.shape[1]:
        # Rectangular (least squares) systems: Phi is the symmetric root of the sandwich covariance.
        jac_inv = np.linalg.pinv(D.T)
        return psd_sqrt(jac_inv @ np.asarray(sigma, dtype=float) @ jac_inv.T)
    else:
        if np.linalg.cond(D) > 1e14:
            raise DegenerateJacobianError("D is singular; the moment map is degenerate here")
        jac_inv = np.linalg.inv(D.T)
    return jac_inv @ psd_sqrt(sigma)


def monte_carlo_moment_covariance(expansions: Mapping[Word, PicardExpansion], drivers,
                                  theta: Mapping[str, float], symmetric_letters: Sequence[int] = (),
                                  chunk: int = 100) -> np.ndarray:
    """Covariance of ``E^tau_r(theta)`` due to a Monte Carlo driver expected signature.

    The theoretical moments are linear in the driver expected signature, so each driver
    path contributes ``sum_w alpha_w(theta) S(w)``; the covariance of that average over
    ``drivers`` is returned (words x words, in ``expansions`` order).

    Args:
        expansions: ``{tau: PicardExpansion}`` with numeric initial condition.
        drivers: ``(num_paths, steps + 1, n)`` paths used for the expected signature.
        theta: parameter values.
        symmetric_letters: same meaning as in
            :func:`esme.drivers.mc_expected_sig_words`; odd words are dropped per path,
            which matches the mirror-averaged estimator.
    """
    drivers = np.asarray(drivers, dtype=float)
    flip = set(symmetric_letters)
    taus = list(expansions)
    words = sorted({w for e in expansions.values() for w in e.coefficients
                    if sum(x in flip for x in w) % 2 == 0}, key=lambda w: (len(w), w))
    if any(expansions[t].initial_vars for t in taus):
        raise ValueError("expansions must have a numeric initial condition")
    alpha = np.zeros((len(words), len(taus)))
    index = {w: i for i, w in enumerate(words)}
    for j, t in enumerate(taus):
        for w, c in expansions[t].coefficients.items():
            if w in index:
                alpha[index[w], j] = c.evaluate(theta)
    values = np.concatenate([
        batch_signature_entries(np.diff(drivers[i:i + chunk], axis=1), words) @ alpha
        for i in range(0, drivers.shape[0], chunk)
    ])
    return sample_covariance(values) / values.shape[0]


def standard_errors(D, sigma, N: int, mc_cov=None) -> np.ndarray:
    """Asymptotic standard errors ``sqrt(diag(Phi Phi^T) / N)``, optionally widened.

    ``mc_cov`` adds the uncertainty of a Monte Carlo driver expected signature, which
    does not shrink with ``N``.
    """
    D = np.atleast_2d(np.asarray(D, dtype=float))
    jac_inv = np.linalg.pinv(D.T)
    cov = np.asarray(sigma, dtype=float) / N
    if mc_cov is not None:
        cov = cov + np.asarray(mc_cov, dtype=float)
    return np.sqrt(np.diag(jac_inv @ cov @ jac_inv.T))


def normalize_estimates(estimates, theta0, D, sigma, N: int) -> list[np.ndarray]:
    """``sqrt(N) Phi^{-1} (theta_hat - theta0)`` for each estimate."""
    phi = asymptotic_phi(D, sigma)
    if np.linalg.cond(phi) > 1e14:
        raise DegenerateJacobianError("Phi is singular (degenerate covariance or Jacobian)")
    phi_inv = np.linalg.inv(phi)
    theta0 = np.asarray(theta0, dtype=float)
    return [np.sqrt(N) * phi_inv @ (np.asarray(e, dtype=float) - theta0) for e in estimates]


def fit(
    equations: Mapping[Word, MultiPoly],
    params: Sequence[str],
    responses,
    box,
    r: int | None = None,
    theta_ref: Mapping[str, float] | None = None,
    multistart: int = DEFAULT_GRID,
    tol: float = DEFAULT_TOL,
    mode: str = "roots",
    unsigned: Sequence[str] = (),
    targets: Mapping[Word, float] | None = None,
) -> tuple[EstimateReport, EstimationProblem]:
    """Estimate from precomputed moment polynomials ``E^tau_r(theta)``.

    Args:
        equations: ``{tau: polynomial in params}``.
        params: parameter order.
        responses: observed response paths (list of :class:`SampledPath` or array).
        box: search box, per parameter.
        r: Picard depth, recorded in the problem.
        theta_ref: reference point for the normalised coordinates.
        targets: override the empirical moments (``Sigma`` still comes from ``responses``).

    Returns:
        ``(report, problem)``. ``report.solutions`` is empty when no root was found.
    """
    words = [tuple(w) for w in equations]
    moments, per_path = empirical_moments(responses, words)
    N = per_path.shape[0]
    if targets is not None:
        moments = {tuple(w): float(targets[tuple(w)]) for w in words}
    problem = EstimationProblem(tuple(params), words, dict(equations), moments, r, N)
    sols = solve_system(problem, box, multistart, tol, mode)
    notes = []
    if unsigned:
        sols = canonicalize(sols, problem.params, unsigned)
    if len(sols) > 1:
        notes.append(f"{len(sols)} distinct solutions in the box: parameters not identified")
    residuals = [float(np.max(np.abs(problem.residual(s)))) for s in sols]
    sigma = sample_covariance(per_path) if N >= 2 else None
    Ds, phis = [], []
    for s in sols:
        D = jacobian_D(problem, s)
        Ds.append(D)
        if sigma is not None:
            try:
                phis.append(asymptotic_phi(D, sigma))
            except np.linalg.LinAlgError:
                phis.append(None)
                notes.append("D singular at a solution")
    normalized = None
    if theta_ref is not None and sigma is not None and sols:
        t0 = np.array([theta_ref[p] for p in problem.params], dtype=float)
        D0 = jacobian_D(problem, t0)
        normalized = normalize_estimates(sols, t0, D0, sigma, N)
    report = EstimateReport(problem.params, words, sols, residuals, Ds, sigma, phis, normalized,
                            theta_ref, moments, N, notes)
    return report, problem


def estimate(
    expansions: Mapping[Word, PicardExpansion],
    driver_esig,
    responses,
    y0,
    box,
    horizon=None,
    theta_ref: Mapping[str, float] | None = None,
    multistart: int = DEFAULT_GRID,
    tol: float = DEFAULT_TOL,
    mode: str = "roots",
    unsigned: Sequence[str] = (),
) -> tuple[EstimateReport, EstimationProblem]:
    """Full pipeline: moments, system, roots, D, Sigma, Phi (and normalisation if ``theta_ref``)."""
    equations = theoretical_moments(expansions, driver_esig, y0, horizon=horizon)
    first = next(iter(expansions.values()))
    params = tuple(v for v in first.variables if v not in first.initial_vars)
    return fit(equations, params, responses, box, first.r, theta_ref, multistart, tol, mode,
               unsigned)
