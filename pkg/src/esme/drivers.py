"""Driving rough paths: expected signatures, path simulation, response simulation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg

from esme.polynomials import MultiPoly
from esme.signature import (
    SampledPath,
    TruncatedSignature,
    batch_signature_entries,
    batch_signature_levels,
)
from esme.words import Word, enumerate_words, format_word, parse_word, word_index

log = logging.getLogger(__name__)

SCHEMES = ("euler", "milstein", "davie")
CHOLESKY_MAX_POINTS = 1024


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    T: float
    dt: float
    seed: int = 0
    scheme: str = "milstein"
    hurst: float | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.dt > self.T:
            raise ValueError(f"step {self.dt} larger than horizon {self.T}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.hurst is not None and not 0.25 < self.hurst <= 1:
            raise ValueError(f"Hurst index must lie in (1/4, 1], got {self.hurst}")

    @property
    def steps(self) -> int:
        steps = int(round(self.T / self.dt))
        if not math.isclose(steps * self.dt, self.T, rel_tol=1e-9):
            raise ValueError(f"horizon {self.T} is not a multiple of dt={self.dt}")
        return steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.steps + 1)


@dataclass
class ExpectedSignature:
    """``E[X^sigma_{0,T}]`` for all driver words up to ``level``.

    Values are numbers (float or Fraction) or :class:`MultiPoly` in the time symbol.
    Words absent from ``values`` have expectation zero.
    """

    dimension: int
    level: int
    horizon: object
    values: dict
    provenance: dict = field(default_factory=dict)
    std_errors: dict | None = None
    support: frozenset | None = None

    def value(self, word: Word):
        word = tuple(word)
        if len(word) > self.level:
            raise ValueError(f"word {word} beyond expected-signature level {self.level}")
        if any(not 1 <= x <= self.dimension for x in word):
            raise ValueError(f"word {word} has letters outside 1..{self.dimension}")
        if self.support is not None and word not in self.support:
            raise KeyError(f"word {word} was not estimated (sparse expected signature)")
        return self.values.get(word, 0)

    def to_dict(self) -> dict:
        """JSON-friendly form (numeric values only)."""
        def num(v):
            if isinstance(v, MultiPoly):
                raise TypeError("symbolic expected signature is not serialised")
            return str(v) if isinstance(v, Fraction) else float(v)

        return {
            "dimension": self.dimension,
            "level": self.level,
            "horizon": self.horizon if isinstance(self.horizon, str) else float(self.horizon),
            "provenance": self.provenance,
            "values": {format_word(w): num(v) for w, v in sorted(self.values.items())},
            "std_errors": None if self.std_errors is None else
            {format_word(w): float(v) for w, v in sorted(self.std_errors.items())},
            "support": None if self.support is None else sorted(format_word(w) for w in self.support),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExpectedSignature":
        def num(v):
            return Fraction(v) if isinstance(v, str) else float(v)

        errors = data.get("std_errors")
        support = data.get("support")
        return cls(
            int(data["dimension"]), int(data["level"]), data["horizon"],
            {parse_word(k): num(v) for k, v in data["values"].items()},
            dict(data.get("provenance", {})),
            None if errors is None else {parse_word(k): float(v) for k, v in errors.items()},
            None if support is None else frozenset(parse_word(k) for k in support),
        )

    __getitem__ = value

    def to_signature(self) -> TruncatedSignature:
        """Dense float copy (numeric horizons only)."""
        n = self.dimension
        levels = [np.zeros(n**k) for k in range(self.level + 1)]
        for w, v in self.values.items():
            if isinstance(v, MultiPoly):
                raise TypeError("symbolic expected signature has no float representation")
            levels[len(w)][word_index(w, n)] = float(v)
        return TruncatedSignature(n, levels)


def _time_bm_coefficient(word: Word):
    """Decompose ``word`` into blocks (1) and (2,2); None if impossible."""
    blocks = pairs = 0
    i = 0
    while i < len(word):
        if word[i] == 1:
            i += 1
        elif i + 1 < len(word) and word[i + 1] == 2:
            pairs += 1
            i += 2
        else:
            return None
        blocks += 1
    return blocks, Fraction(1, math.factorial(blocks) * 2**pairs)


def expected_sig_time_bm(T, level: int, symbol: str | None = None) -> ExpectedSignature:
    """Expected Stratonovich signature of ``(t, W_t)`` on ``[0, T]``.

    Equals the truncated tensor exponential of ``T (e1 + e2 e2 / 2)``. With ``symbol``
    set, values are polynomials in that time symbol (``T`` is then ignored).
    """
    if level < 0:
        raise ValueError("level must be non-negative")
    if symbol is None:
        horizon = T if isinstance(T, (int, Fraction)) else Fraction(float(T))
        if horizon <= 0:
            raise ValueError("horizon must be positive")
    values = {}
    for w in enumerate_words(2, 0, level):
        dec = _time_bm_coefficient(w)
        if dec is None:
            continue
        blocks, coef = dec
        if symbol is None:
            values[w] = coef * horizon**blocks
        else:
            exps = (blocks,)
            values[w] = MultiPoly._raw((symbol,), {exps: coef})
    return ExpectedSignature(
        2, level, symbol if symbol is not None else T, values, {"kind": "analytic", "driver": "time_bm"}
    )


def path_seeds(seed: int, count: int) -> list[np.random.Generator]:
    """Independent generators, one per path; path ``i`` gets the same stream for any batching."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def fgn_autocovariance(h: float, dt: float, size: int) -> np.ndarray:
    k = np.arange(size, dtype=float)
    return 0.5 * dt ** (2 * h) * (
        np.abs(k + 1) ** (2 * h) - 2 * np.abs(k) ** (2 * h) + np.abs(k - 1) ** (2 * h)
    )


class _FGNSampler:
    """Exact fractional Gaussian noise on a regular grid."""

    def __init__(self, h: float, dt: float, steps: int):
        self.h, self.dt, self.steps = h, dt, steps
        gamma = fgn_autocovariance(h, dt, steps + 1)
        self.method = "cholesky"
        if steps + 1 >= CHOLESKY_MAX_POINTS:
            row = np.concatenate([gamma[:steps], gamma[steps:steps + 1], gamma[steps - 1:0:-1]])
            eig = np.fft.fft(row).real
            if eig.min() >= -1e-12 * eig.max():
                self.method = "circulant"
                self.sqrt_eig = np.sqrt(np.clip(eig, 0, None) / row.size)
                return
            log.info("circulant embedding not PSD (min eigenvalue %g); using Cholesky", eig.min())
        cov = scipy.linalg.toeplitz(gamma[:steps])
        try:
            self.chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise SimulationError(f"fGn covariance not positive definite for h={h}") from exc

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        if self.method == "circulant":
            size = self.sqrt_eig.size
            z = rng.standard_normal(size) + 1j * rng.standard_normal(size)
            return np.fft.fft(self.sqrt_eig * z).real[: self.steps]
        return self.chol @ rng.standard_normal(self.steps)


def sample_fbm_batch(h: float, config: SimConfig, num_paths: int, seed: int | None = None):
    """``(num_paths, steps + 1)`` array of fBM values on ``config.times``; path i uses sub-seed i."""
    if not 0.25 < h <= 1:
        raise ValueError(f"Hurst index must lie in (1/4, 1], got {h}")
    steps = config.steps
    sampler = _FGNSampler(h, config.dt, steps)
    rngs = path_seeds(config.seed if seed is None else seed, num_paths)
    out = np.zeros((num_paths, steps + 1))
    for i, rng in enumerate(rngs):
        out[i, 1:] = np.cumsum(sampler.draw(rng))
    return out


def sample_fbm(h: float, config: SimConfig) -> SampledPath:
    """One fBM path on the grid of ``config``, deterministic in ``config.seed``."""
    values = sample_fbm_batch(h, config, 1)[0]
    return SampledPath(config.times, values)


def sample_bm_batch(config: SimConfig, num_paths: int, seed: int | None = None) -> np.ndarray:
    steps = config.steps
    rngs = path_seeds(config.seed if seed is None else seed, num_paths)
    out = np.zeros((num_paths, steps + 1))
    sd = math.sqrt(config.dt)
    for i, rng in enumerate(rngs):
        out[i, 1:] = np.cumsum(sd * rng.standard_normal(steps))
    return out


def time_augmented(times: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """Stack ``(t, noise)`` into a ``(num_paths, steps + 1, 2)`` driver batch."""
    noise = np.atleast_2d(noise)
    t = np.broadcast_to(times, noise.shape)
    return np.stack([t, noise], axis=-1)


def driver_batch(config: SimConfig, num_paths: int, seed: int | None = None) -> np.ndarray:
    """Batch of ``(t, B^h_t)`` driver paths; Brownian when ``config.hurst`` is None or 1/2."""
    if config.hurst is None or config.hurst == 0.5:
        noise = sample_bm_batch(config, num_paths, seed)
    else:
        noise = sample_fbm_batch(config.hurst, config, num_paths, seed)
    return time_augmented(config.times, noise)


def time_scaled_pair(values: np.ndarray, times: np.ndarray, c: float) -> np.ndarray:
    """Append ``Z_{ct}`` to ``Z_t`` along the last axis (linear interpolation on the grid).

    Used to build the joint driver ``(X_t, X_{ct})`` and the joint response
    ``(Y_t, Y_{ct})`` for the time-scaled augmentation; needs ``0 < c <= 1``.
    """
    if not 0 < c <= 1:
        raise ValueError(f"time scale c must lie in (0, 1], got {c}")
    values = np.asarray(values, dtype=float)
    times = np.asarray(times, dtype=float)
    pos = np.interp(c * times, times, np.arange(times.size))
    lo = np.minimum(np.floor(pos).astype(int), times.size - 2)
    w = (pos - lo)[:, None]
    scaled = values[..., lo, :] * (1 - w) + values[..., lo + 1, :] * w
    return np.concatenate([values, scaled], axis=-1)


def _average_signatures(batches, level: int):
    total = None
    total_sq = None
    count = 0
    for inc in batches:
        levels = batch_signature_levels(inc, level)
        sums = [lv.sum(axis=0) for lv in levels]
        sq = [(lv**2).sum(axis=0) for lv in levels]
        total = sums if total is None else [a + b for a, b in zip(total, sums)]
        total_sq = sq if total_sq is None else [a + b for a, b in zip(total_sq, sq)]
        count += inc.shape[0]
    mean = [t / count for t in total]
    if count > 1:
        var = [np.maximum(s / count - mu**2, 0) * count / (count - 1) for s, mu in zip(total_sq, mean)]
        se = [np.sqrt(v / count) for v in var]
    else:
        se = [np.zeros_like(mu) for mu in mean]
    return mean, se, count


def _esig_from_levels(n, mean, se, horizon, provenance) -> ExpectedSignature:
    values, errors = {}, {}
    for k, (arr, err) in enumerate(zip(mean, se)):
        for idx, w in enumerate(enumerate_words(n, k, k)):
            if arr[idx] != 0.0:
                values[w] = float(arr[idx])
            errors[w] = float(err[idx])
    return ExpectedSignature(n, len(mean) - 1, horizon, values, provenance, errors)


def empirical_expected_sig(
    paths: Sequence[SampledPath], level: int, seed: int | None = None
) -> ExpectedSignature:
    """Entrywise average of the signatures of ``paths`` (with per-entry standard errors)."""
    paths = list(paths)
    if not paths:
        raise ValueError("need at least one path")
    n = paths[0].dimension
    if any(p.dimension != n for p in paths):
        raise ValueError("paths must share their dimension")
    groups: dict[int, list] = {}
    for p in paths:
        groups.setdefault(len(p.times), []).append(p.increments())
    batches = [np.stack(g) for g in groups.values()]
    mean, se, count = _average_signatures(batches, level)
    horizon = float(paths[0].times[-1] - paths[0].times[0])
    prov = {"kind": "monte_carlo", "num_paths": count, "seed": seed}
    return _esig_from_levels(n, mean, se, horizon, prov)


def mc_expected_sig_words(drivers: np.ndarray, words: Sequence[Word], horizon,
                          provenance: dict | None = None, chunk: int = 100,
                          symmetric_letters: Sequence[int] = ()) -> ExpectedSignature:
    """Monte Carlo expected signature restricted to ``words`` (plus the empty word).

    Args:
        drivers: ``(num_paths, steps + 1, n)`` sampled driver paths.
        words: driver words to estimate; other words raise ``KeyError`` on lookup.
        horizon: length of the time interval, recorded on the result.
        symmetric_letters: channels whose joint sign flip leaves the driver law
            unchanged (e.g. the noise of ``(t, B^h)``). Averaging each path with its
            mirror image sets entries with an odd count of these letters to exactly 0.
    """
    drivers = np.asarray(drivers, dtype=float)
    num_paths, _, n = drivers.shape
    words = sorted({tuple(w) for w in words} | {()}, key=lambda w: (len(w), w))
    total = np.zeros(len(words))
    total_sq = np.zeros(len(words))
    for i in range(0, num_paths, chunk):
        entries = batch_signature_entries(np.diff(drivers[i:i + chunk], axis=1), words)
        total += entries.sum(axis=0)
        total_sq += (entries**2).sum(axis=0)
    mean = total / num_paths
    if num_paths > 1:
        var = np.maximum(total_sq / num_paths - mean**2, 0) * num_paths / (num_paths - 1)
        se = np.sqrt(var / num_paths)
    else:
        se = np.zeros_like(mean)
    flip = set(symmetric_letters)
    if flip:
        odd = np.array([sum(x in flip for x in w) % 2 == 1 for w in words])
        mean[odd] = 0.0
        se[odd] = 0.0
    values = {w: float(v) for w, v in zip(words, mean) if v != 0.0}
    errors = {w: float(e) for w, e in zip(words, se)}
    prov = {"kind": "monte_carlo", "num_paths": num_paths}
    if flip:
        prov["symmetrized_letters"] = sorted(flip)
    prov.update(provenance or {})
    level = max(len(w) for w in words)
    return ExpectedSignature(n, level, horizon, values, prov, errors, frozenset(words))


def mc_expected_sig_time_fbm(
    h: float, T: float, dt: float, level: int, num_paths: int, seed: int, chunk: int = 100,
    words: Sequence[Word] | None = None,
) -> ExpectedSignature:
    """Monte Carlo expected signature of ``(t, B^h_t)`` from exact fBM samples on a grid.

    With ``words`` given only those entries are estimated (sparse; ``level`` is then
    ignored), which is far cheaper for the deep but sparse needs of a Picard expansion.
    """
    config = SimConfig(T=T, dt=dt, seed=seed, scheme="davie", hurst=h)
    drivers = driver_batch(config, num_paths)
    prov = {"driver": "time_fbm", "hurst": h, "dt": dt, "seed": seed}
    if words is not None:
        return mc_expected_sig_words(drivers, words, T, prov, chunk, symmetric_letters=(2,))
    incs = np.diff(drivers, axis=1)
    batches = (incs[i:i + chunk] for i in range(0, num_paths, chunk))
    mean, se, count = _average_signatures(batches, level)
    prov = {"kind": "monte_carlo", **prov, "num_paths": count}
    return _esig_from_levels(2, mean, se, T, prov)


def _check_scheme(config: SimConfig):
    h = config.hurst
    if config.scheme == "milstein" and h not in (None, 0.5):
        raise ValueError(f"milstein scheme needs a Brownian driver, got Hurst index {h}")
    if config.scheme == "davie" and h is None:
        raise ValueError("davie scheme needs a fractional driver (set hurst)")
    if config.scheme == "euler" and (h is None or h <= 0.5):
        # First-order steps miss the Stratonovich correction when the noise is this rough.
        raise ValueError(f"euler scheme needs a Hurst index above 1/2, got {h or 0.5}")


def simulate_responses(vf, theta: Mapping[str, float], y0, drivers: np.ndarray,
                       config: SimConfig) -> np.ndarray:
    """Solve ``dY = f(Y; theta) dX`` along a batch of sampled drivers.

    Args:
        vf: :class:`esme.picard.VectorField`.
        theta: parameter values by name.
        y0: initial condition (length m).
        drivers: ``(batch, steps + 1, n)`` driver samples.
        config: scheme selection. ``milstein``/``davie`` add the second-order term
            ``sum_{i,l} (Df_l f_i) X^{(i,l)}`` with the segment (trapezoid) iterated
            integrals ``X^{(i,l)} = dX_i dX_l / 2``; ``euler`` omits it.

    Returns:
        ``(batch, steps + 1, m)`` response samples.
    """
    _check_scheme(config)
    missing = [p for p in vf.params if p not in theta]
    if missing:
        raise ValueError(f"parameters {missing} not assigned")
    drivers = np.asarray(drivers, dtype=float)
    if drivers.ndim == 2:
        drivers = drivers[None]
    batch, points, n = drivers.shape
    if n != vf.n:
        raise ValueError(f"driver dimension {n} does not match vector field ({vf.n})")
    f = vf.numeric(theta)
    jac = vf.numeric_jacobian(theta)
    second_order = config.scheme != "euler"
    y = np.tile(np.asarray(y0, dtype=float), (batch, 1))
    out = np.empty((batch, points, vf.m))
    out[:, 0] = y
    dX = np.diff(drivers, axis=1)
    for k in range(points - 1):
        d = dX[:, k]
        F = f(y)
        step = np.einsum("bji,bi->bj", F, d)
        if second_order:
            J = jac(y)
            step += 0.5 * np.einsum("bjlp,bpi,bi,bl->bj", J, F, d, d)
        y = y + step
        if not np.all(np.isfinite(y)):
            raise SimulationError(f"response blew up at step {k + 1}")
        out[:, k + 1] = y
    return out


def simulate_response(vf, theta, y0, driver: SampledPath, config: SimConfig) -> SampledPath:
    """Single-path version of :func:`simulate_responses`."""
    values = simulate_responses(vf, theta, y0, driver.values[None], config)[0]
    return SampledPath(driver.times, values)
