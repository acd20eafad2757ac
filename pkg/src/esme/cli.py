"""Configuration-driven experiments: expand, simulate, estimate, replicate, selftest.

Exit codes: 0 ok, 2 configuration error, 3 no solution, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import glob
import hashlib
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from esme import reference
from esme.drivers import (
    ExpectedSignature,
    SimConfig,
    SimulationError,
    _check_scheme,
    driver_batch,
    expected_sig_time_bm,
    mc_expected_sig_words,
    simulate_responses,
    time_scaled_pair,
)
from esme.estimator import (
    DEFAULT_GRID,
    DEFAULT_TOL,
    canonicalize,
    fit,
    jacobian_D,
    normalize_estimates,
    theoretical_moments,
)
from esme.picard import (
    PicardExpansion,
    TruncationError,
    VectorField,
    augment_time_scaled,
    expected_response_signature,
    picard_expansions,
)
from esme.polynomials import MultiPoly, PolynomialSyntaxError, parse_poly
from esme.signature import SampledPath
from esme.words import Word, format_word, parse_word, shuffle

log = logging.getLogger("esme")

ESIG_SPAWN_KEY = 2**32 - 1

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NO_SOLUTION = 3
EXIT_NUMERIC = 4

DRIVERS = ("time_bm", "fbm", "path_files")


class ConfigError(ValueError):
    """Invalid configuration or mismatched artifacts (exit code 2)."""


class NoSolutionError(RuntimeError):
    """The moment system has no root in the box (exit code 3)."""


def _fraction(value, name: str) -> Fraction:
    try:
        return Fraction(str(value))
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"{name}: not a number: {value!r}") from exc


def _canonical_json(data) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment configuration (see README for the JSON layout)."""

    raw: dict
    model: VectorField
    driver: dict
    theta_true: dict | None
    y0: tuple
    T: Fraction
    dt: float
    N: int
    replications: int
    r: int
    words: tuple
    box: dict
    seed: int
    mode: str
    unsigned: tuple
    scheme: str
    augment: float | None
    targets: str
    multistart: int
    tol: float
    hash: str

    @classmethod
    def from_dict(cls, data: dict, seed_override: int | None = None,
                  base_dir: Path | None = None) -> "ExperimentConfig":
        data = json.loads(json.dumps(data))
        if seed_override is not None:
            data["seed"] = int(seed_override)
        try:
            return cls._build(data, base_dir or Path("."))
        except ConfigError:
            raise
        except PolynomialSyntaxError as exc:
            raise ConfigError(f"model: {exc}") from exc
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path, seed_override: int | None = None) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data, seed_override, path.parent)

    @classmethod
    def _build(cls, data: dict, base_dir: Path) -> "ExperimentConfig":
        model = data["model"]
        state, params = list(model["state"]), list(model["params"])
        field_rows = model["field"]
        for j, row in enumerate(field_rows):
            for i, text in enumerate(row):
                try:
                    parse_poly(text, state + params)
                except PolynomialSyntaxError as exc:
                    raise ConfigError(f"model.field[{j}][{i}]: {exc}") from exc
        vf = VectorField.from_strings(field_rows, state, params)

        driver = dict(data.get("driver", {"kind": "time_bm"}))
        kind = driver.get("kind")
        if kind not in DRIVERS:
            raise ConfigError(f"driver.kind must be one of {DRIVERS}, got {kind!r}")
        if kind == "fbm":
            driver["hurst"] = str(_fraction(driver["hurst"], "driver.hurst"))
        if kind == "path_files":
            pattern = driver["files"]
            driver["files"] = str(pattern if Path(pattern).is_absolute() else base_dir / pattern)

        words = tuple(parse_word(w) if isinstance(w, str) else tuple(w) for w in data.get("V", []))
        if not words:
            raise ConfigError("V (the word set) is empty")
        augment = data.get("augment")
        c = None if augment is None else float(_fraction(augment["c"], "augment.c"))
        m_joint = vf.m * (2 if c is not None else 1)
        for w in words:
            if not w or any(not 1 <= x <= m_joint for x in w):
                raise ConfigError(f"word {format_word(w)} is not a nonempty word over 1..{m_joint}")
        if len(words) < len(params):
            raise ConfigError(f"|V| = {len(words)} < number of parameters {len(params)}")

        box = {p: tuple(float(x) for x in data["box"][p]) for p in params}
        for p, (lo, hi) in box.items():
            if not lo < hi:
                raise ConfigError(f"box[{p}] must satisfy lo < hi")
        theta = data.get("theta_true")
        if theta is not None:
            missing = [p for p in params if p not in theta]
            if missing:
                raise ConfigError(f"theta_true lacks {missing}")
            theta = {p: float(theta[p]) for p in params}
        y0 = tuple(float(v) for v in data.get("y0", [0.0] * vf.m))
        if len(y0) != vf.m:
            raise ConfigError(f"y0 needs {vf.m} entries")
        mode = data.get("mode", "roots")
        if mode not in ("roots", "least_squares"):
            raise ConfigError(f"mode must be 'roots' or 'least_squares', got {mode!r}")
        unsigned = tuple(data.get("unsigned", []))
        if any(p not in params for p in unsigned):
            raise ConfigError(f"unsigned names unknown parameters: {unsigned}")
        targets = data.get("targets", "empirical")
        if targets not in ("empirical", "exact"):
            raise ConfigError("targets must be 'empirical' or 'exact'")
        if targets == "exact" and theta is None:
            raise ConfigError("targets='exact' needs theta_true")

        T = _fraction(data.get("T", "1/4"), "T")
        dt = float(_fraction(data.get("dt", "0.001"), "dt"))
        hurst = float(Fraction(driver["hurst"])) if kind == "fbm" else None
        scheme = data.get("scheme", "davie" if kind == "fbm" else "milstein")
        try:
            sim = SimConfig(float(T), dt, 0, scheme, hurst)
            sim.steps
            _check_scheme(sim)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        r = int(data.get("r", 3))
        if r < 0:
            raise ConfigError("r must be non-negative")
        N = int(data.get("N", 2000))
        reps = int(data.get("replications", 1))
        if N < 1 or reps < 1:
            raise ConfigError("N and replications must be positive")

        canonical = {
            "model": {"state": state, "params": params, "field": field_rows},
            "driver": driver, "theta_true": theta, "y0": list(y0), "T": str(T), "dt": dt,
            "N": N, "replications": reps, "r": r, "V": [format_word(w) for w in words],
            "box": {p: list(b) for p, b in box.items()}, "seed": int(data.get("seed", 0)),
            "mode": mode, "unsigned": list(unsigned), "scheme": scheme,
            "augment": None if c is None else {"c": c}, "targets": targets,
            "multistart": int(data.get("multistart", DEFAULT_GRID)),
            "tol": float(data.get("tol", DEFAULT_TOL)),
        }
        digest = hashlib.sha256(_canonical_json(canonical).encode()).hexdigest()[:16]
        return cls(canonical, vf, driver, theta, y0, T, dt, N, reps, r, words, box,
                   canonical["seed"], mode, unsigned, scheme, c, targets,
                   canonical["multistart"], canonical["tol"], digest)

    @property
    def params(self) -> tuple:
        return self.model.params

    @property
    def hurst(self) -> float | None:
        return float(Fraction(self.driver["hurst"])) if self.driver["kind"] == "fbm" else None

    def sim_config(self, seed: int) -> SimConfig:
        return SimConfig(float(self.T), self.dt, seed, self.scheme, self.hurst)

    def joint_model(self) -> VectorField:
        return self.model if self.augment is None else augment_time_scaled(self.model)

    def joint_y0(self) -> tuple:
        return self.y0 if self.augment is None else self.y0 + self.y0

    def replication_seeds(self) -> list[int]:
        children = np.random.SeedSequence(self.seed).spawn(self.replications)
        return [int(s.generate_state(1)[0]) for s in children]

    def esig_seed(self) -> int:
        key = self.driver.get("esig_seed")
        if key is not None:
            return int(key)
        # Own spawn key, so the driver expected signature does not move with the replication count.
        child = np.random.SeedSequence(self.seed, spawn_key=(ESIG_SPAWN_KEY,))
        return int(child.generate_state(1)[0])


# -- artifact bookkeeping ------------------------------------------------------

def _stamp(cfg: ExperimentConfig) -> str:
    return f"config_hash={cfg.hash}"


def _claim_output(cfg: ExperimentConfig, out: Path) -> None:
    """Create ``out`` and refuse it if it holds artifacts of another configuration."""
    out.mkdir(parents=True, exist_ok=True)
    marker = out / "config.json"
    if marker.exists():
        existing = json.loads(marker.read_text()).get("config_hash")
        if existing != cfg.hash:
            raise ConfigError(
                f"{out} holds artifacts of config {existing}, refusing to mix with {cfg.hash}"
            )
        return
    marker.write_text(json.dumps({"config_hash": cfg.hash, "config": cfg.raw}, indent=1,
                                 sort_keys=True) + "\n")


def _check_stamp(path: Path, cfg: ExperimentConfig) -> None:
    data = json.loads(path.read_text())
    if data.get("config_hash") != cfg.hash:
        raise ConfigError(f"{path} was produced by config {data.get('config_hash')}, not {cfg.hash}")


def _write_json(path: Path, data: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")


def _write_csv(path: Path, cfg: ExperimentConfig, header: Sequence[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# {_stamp(cfg)}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _word_tag(w: Word) -> str:
    return "tau-" + "_".join(map(str, w))


def _decimal_str(poly: MultiPoly, digits: int = 6) -> str:
    """Polynomial with float coefficients rounded to ``digits`` significant figures."""
    parts = []
    for exps, coef in poly.sorted_terms():
        mono = "*".join(
            v if e == 1 else f"{v}^{e}" for v, e in zip(poly.variables, exps) if e
        )
        c = f"{float(coef):.{digits}g}"
        parts.append(f"{c}*{mono}" if mono else c)
    return " + ".join(parts).replace("+ -", "- ") if parts else "0"


# -- driver expected signature -------------------------------------------------

def _driver_words(expansions) -> set:
    words = set()
    for exp in expansions.values():
        words |= set(exp.coefficients)
    return words


def _load_driver_files(cfg: ExperimentConfig) -> list[SampledPath]:
    files = sorted(glob.glob(cfg.driver["files"]))
    if not files:
        raise ConfigError(f"no driver files match {cfg.driver['files']}")
    paths = [SampledPath.from_csv(f) for f in files]
    if paths[0].dimension != cfg.model.n:
        raise ConfigError(f"driver files have dimension {paths[0].dimension}, model needs {cfg.model.n}")
    return paths


def _stack_paths(paths: Sequence[SampledPath]) -> tuple[np.ndarray, np.ndarray]:
    if len({len(p.times) for p in paths}) != 1 or any(
        not np.allclose(p.times, paths[0].times) for p in paths
    ):
        raise ConfigError("all paths of a data set must share one time grid")
    return paths[0].times, np.stack([p.values for p in paths])


def driver_expected_signature(cfg: ExperimentConfig, expansions, out: Path | None = None):
    """Expected signature of the (joint) driver; Monte Carlo results are cached under ``out``."""
    kind = cfg.driver["kind"]
    if kind == "time_bm" and cfg.augment is None:
        level = max(exp.max_word_length() for exp in expansions.values())
        return expected_sig_time_bm(None, level, symbol="t")
    cache = None if out is None else out / "expansions" / "driver_esig.json"
    if cache is not None and cache.exists():
        _check_stamp(cache, cfg)
        return ExpectedSignature.from_dict(json.loads(cache.read_text())["expected_signature"])
    words = _driver_words(expansions)
    drivers, times, prov, symmetric = driver_samples(cfg)
    started = time.perf_counter()
    esig = mc_expected_sig_words(drivers, words, float(times[-1] - times[0]), prov,
                                 symmetric_letters=symmetric)
    log.info("driver expected signature: %d words from %d paths in %.1fs", len(words),
             drivers.shape[0], time.perf_counter() - started)
    if cache is not None:
        _write_json(cache, {"config_hash": cfg.hash, "expected_signature": esig.to_dict()})
    return esig


def driver_samples(cfg: ExperimentConfig) -> tuple[np.ndarray, np.ndarray, dict, tuple]:
    """Driver paths behind the Monte Carlo expected signature.

    Returns:
        ``(drivers, times, provenance, symmetric_letters)``; deterministic given the config.
    """
    kind = cfg.driver["kind"]
    if kind == "path_files":
        times, drivers = _stack_paths(_load_driver_files(cfg))
        prov = {"driver": "path_files", "files": cfg.driver["files"]}
    else:
        num = int(cfg.driver.get("esig_paths", 1000))
        dt = float(_fraction(cfg.driver.get("esig_dt", cfg.dt), "driver.esig_dt"))
        sim = SimConfig(float(cfg.T), dt, cfg.esig_seed(), cfg.scheme, cfg.hurst)
        drivers = driver_batch(sim, num)
        times = sim.times
        prov = {"driver": kind, "hurst": cfg.driver.get("hurst"), "dt": dt, "seed": cfg.esig_seed()}
    # Synthetic drivers (t, B) are symmetric under B -> -B; recorded data may not be.
    n = cfg.model.n
    symmetric = () if kind == "path_files" else tuple(range(2, n + 1))
    if cfg.augment is not None:
        drivers = time_scaled_pair(drivers, times, cfg.augment)
        prov["time_scale"] = cfg.augment
        symmetric = symmetric + tuple(x + n for x in symmetric)
    return drivers, times, prov, symmetric


# -- subcommands ---------------------------------------------------------------

def cmd_expand(cfg: ExperimentConfig, out: Path) -> dict:
    """Write one expansion file per response word; reuses files of the same config."""
    _claim_output(cfg, out)
    directory = out / "expansions"
    directory.mkdir(exist_ok=True)
    files = {w: directory / f"{_word_tag(w)}.json" for w in cfg.words}
    if all(f.exists() for f in files.values()):
        for f in files.values():
            _check_stamp(f, cfg)
        return load_expansions(cfg, out)
    vf = cfg.joint_model()
    started = time.perf_counter()
    expansions = picard_expansions(vf, cfg.r, cfg.words, y0=list(cfg.joint_y0()))
    log.info("Picard expansions (r=%d) in %.2fs", cfg.r, time.perf_counter() - started)
    symbolic = None
    if cfg.driver["kind"] == "time_bm" and cfg.augment is None:
        symbolic = driver_expected_signature(cfg, expansions)
    for w, exp in expansions.items():
        payload = {"config_hash": cfg.hash, "expansion": exp.to_dict()}
        if symbolic is not None:
            payload["expected_moment_in_t"] = str(expected_response_signature(exp, symbolic))
        _write_json(files[w], payload)
    return expansions


def load_expansions(cfg: ExperimentConfig, out: Path) -> dict:
    result = {}
    for w in cfg.words:
        path = out / "expansions" / f"{_word_tag(w)}.json"
        if not path.exists():
            raise ConfigError(f"missing expansion cache {path}; run 'expand' first")
        _check_stamp(path, cfg)
        result[w] = PicardExpansion.from_dict(json.loads(path.read_text())["expansion"])
    return result


def moment_equations(cfg: ExperimentConfig, out: Path | None) -> dict:
    """``{tau: E^tau_r(theta)}`` for the configured experiment."""
    if out is not None:
        expansions = cmd_expand(cfg, out)
    else:
        expansions = picard_expansions(cfg.joint_model(), cfg.r, cfg.words, y0=list(cfg.joint_y0()))
    esig = driver_expected_signature(cfg, expansions, out)
    eqs = theoretical_moments(expansions, esig, params=cfg.params, horizon=cfg.T)
    if out is not None:
        _write_json(out / "expansions" / "moments.json", {
            "config_hash": cfg.hash,
            "params": list(cfg.params),
            "moments": {format_word(w): _decimal_str(p) for w, p in eqs.items()},
        })
    return eqs


def simulate_replication(cfg: ExperimentConfig, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """``(times, responses (N, points, m))`` for one replication."""
    if cfg.theta_true is None:
        raise ConfigError("simulation needs theta_true")
    if cfg.driver["kind"] == "path_files":
        times, drivers = _stack_paths(_load_driver_files(cfg))
        sim = SimConfig(float(times[-1] - times[0]), float(times[1] - times[0]), seed, cfg.scheme,
                        cfg.hurst)
    else:
        sim = cfg.sim_config(seed)
        drivers = driver_batch(sim, cfg.N, seed)
        times = sim.times
    responses = simulate_responses(cfg.model, cfg.theta_true, list(cfg.y0), drivers, sim)
    return times, responses


def cmd_simulate(cfg: ExperimentConfig, out: Path) -> Path:
    """Write ``paths/rep-XXXX/path-YYYY.csv`` for every replication plus a manifest."""
    _claim_output(cfg, out)
    seeds = cfg.replication_seeds()
    root = out / "paths"
    manifest = {
        "config_hash": cfg.hash, "scheme": cfg.scheme, "driver": cfg.driver, "seed": cfg.seed,
        "replication_seeds": seeds, "N": cfg.N, "T": str(cfg.T), "dt": cfg.dt, "files": {},
    }
    if cfg.hurst is not None:
        order = cfg.dt ** (3 * cfg.hurst - 1)
        manifest["error_order"] = {
            "formula": "dt^(3h-1)", "h": cfg.driver["hurst"], "value": order,
            "note": f"Davie scheme selected for fractional driver; strong error of order {order:.3f}",
        }
    for rep, seed in enumerate(seeds):
        times, responses = simulate_replication(cfg, seed)
        rep_dir = root / f"rep-{rep:04d}"
        rep_dir.mkdir(parents=True, exist_ok=True)
        names = []
        for i, values in enumerate(responses):
            name = f"path-{i:04d}.csv"
            SampledPath(times, values).to_csv(rep_dir / name, comment=_stamp(cfg))
            names.append(name)
        manifest["files"][f"rep-{rep:04d}"] = names
    _write_json(root / "manifest.json", manifest)
    return root


def load_dataset(cfg: ExperimentConfig, out: Path, rep: int = 0) -> tuple[np.ndarray, np.ndarray]:
    manifest = out / "paths" / "manifest.json"
    if not manifest.exists():
        raise ConfigError(f"no data set at {out / 'paths'}; run 'simulate' first")
    _check_stamp(manifest, cfg)
    rep_dir = out / "paths" / f"rep-{rep:04d}"
    files = sorted(rep_dir.glob("path-*.csv"))
    if not files:
        raise ConfigError(f"no response paths in {rep_dir}")
    for f in files:
        with open(f) as fh:
            first = fh.readline().strip()
        if first != f"# {_stamp(cfg)}":
            raise ConfigError(f"{f} does not carry config hash {cfg.hash}")
    return _stack_paths([SampledPath.from_csv(f) for f in files])


def _observed(cfg: ExperimentConfig, times: np.ndarray, responses: np.ndarray) -> np.ndarray:
    if cfg.augment is None:
        return responses
    return time_scaled_pair(responses, times, cfg.augment)


def _exact_targets(cfg: ExperimentConfig, equations: dict) -> dict:
    point = {p: cfg.theta_true[p] for p in cfg.params}
    return {w: eq.evaluate(point) for w, eq in equations.items()}


def cmd_estimate(cfg: ExperimentConfig, out: Path, rep: int = 0) -> dict:
    """Estimate from ``paths/rep-XXXX`` and write ``report.json``."""
    _claim_output(cfg, out)
    equations = moment_equations(cfg, out)
    times, responses = load_dataset(cfg, out, rep)
    targets = _exact_targets(cfg, equations) if cfg.targets == "exact" else None
    report, _ = fit(equations, cfg.params, _observed(cfg, times, responses), cfg.box, cfg.r,
                    cfg.theta_true, cfg.multistart, cfg.tol, cfg.mode, cfg.unsigned, targets)
    data = {"config_hash": cfg.hash, "replication": rep, "targets_kind": cfg.targets,
            **report.to_dict()}
    _write_json(out / "report.json", data)
    if not report.solutions:
        raise NoSolutionError(f"no solution in box {cfg.box}")
    return data


def _select(cfg: ExperimentConfig, roots: list) -> tuple[str, np.ndarray | None, list]:
    canonical = canonicalize(roots, cfg.params, cfg.unsigned) if cfg.unsigned else list(roots)
    if not canonical:
        return "no_solution", None, canonical
    if len(canonical) > 1:
        return "multiple_solutions", None, canonical
    return "ok", canonical[0], canonical


def run_replication(cfg: ExperimentConfig, equations: dict, rep: int, seed: int) -> dict:
    """Simulate, estimate and normalise one replication; never raises for numeric trouble."""
    result = {"rep": rep, "seed": seed, "status": "ok", "roots": [], "residuals": [],
              "estimate": None, "normalized": None, "message": ""}
    try:
        times, responses = simulate_replication(cfg, seed)
        targets = _exact_targets(cfg, equations) if cfg.targets == "exact" else None
        report, problem = fit(equations, cfg.params, _observed(cfg, times, responses), cfg.box,
                              cfg.r, None, cfg.multistart, cfg.tol, cfg.mode, (), targets)
        result["roots"] = [s.tolist() for s in report.solutions]
        result["residuals"] = report.residuals
        status, chosen, _ = _select(cfg, report.solutions)
        result["status"] = status
        if chosen is not None:
            result["estimate"] = chosen.tolist()
            if cfg.theta_true is not None and report.sigma is not None:
                t0 = np.array([cfg.theta_true[p] for p in cfg.params])
                z = normalize_estimates([chosen], t0, jacobian_D(problem, t0), report.sigma,
                                        report.sample_size)[0]
                result["normalized"] = z.tolist()
    except (SimulationError, np.linalg.LinAlgError, FloatingPointError) as exc:
        result["status"] = "numeric_failure"
        result["message"] = str(exc)
    return result


_WORKER: dict = {}


def _init_worker(cfg: ExperimentConfig, equations: dict) -> None:
    _WORKER["cfg"] = cfg
    _WORKER["equations"] = equations


def _worker(job: tuple[int, int]) -> dict:
    rep, seed = job
    return run_replication(_WORKER["cfg"], _WORKER["equations"], rep, seed)


def summarize(cfg: ExperimentConfig, results: Sequence[dict]) -> dict:
    ok = [r for r in results if r["status"] == "ok"]
    counts = {}
    for r in results:
        counts[r["status"]] = counts.get(r["status"], 0) + 1
    summary = {"config_hash": cfg.hash, "replications": len(results), "status_counts": counts,
               "params": list(cfg.params)}
    est = np.array([r["estimate"] for r in ok]) if ok else np.zeros((0, len(cfg.params)))
    if len(est):
        summary["estimate_mean"] = est.mean(axis=0).tolist()
        summary["estimate_median"] = np.median(est, axis=0).tolist()
    if len(est) >= 2:
        summary["estimate_covariance"] = np.atleast_2d(np.cov(est, rowvar=False)).tolist()
    z = np.array([r["normalized"] for r in ok if r["normalized"] is not None])
    if len(z) >= 2:
        summary["normalized_mean"] = z.mean(axis=0).tolist()
        summary["normalized_covariance"] = np.atleast_2d(np.cov(z, rowvar=False)).tolist()
    return summary


def cmd_replicate(cfg: ExperimentConfig, out: Path, jobs: int = 1) -> dict:
    """Run all replications; write per-replication files, then merged CSVs and plot data."""
    if cfg.replications < 2:
        raise ConfigError("replicate needs replications >= 2")
    _claim_output(cfg, out)
    equations = moment_equations(cfg, out)
    seeds = cfg.replication_seeds()
    rep_dir = out / "replications"
    rep_dir.mkdir(exist_ok=True)
    todo = []
    for rep, seed in enumerate(seeds):
        path = rep_dir / f"rep-{rep:04d}.json"
        if path.exists():
            _check_stamp(path, cfg)
        else:
            todo.append((rep, seed))

    def store(result):
        _write_json(rep_dir / f"rep-{result['rep']:04d}.json", {"config_hash": cfg.hash, **result})
        log.info("replication %d: %s %s", result["rep"], result["status"], result["estimate"])

    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(jobs, initializer=_init_worker, initargs=(cfg, equations)) as pool:
            for result in pool.map(_worker, todo):
                store(result)
    else:
        for rep, seed in todo:
            store(run_replication(cfg, equations, rep, seed))

    results = []
    for rep in range(len(seeds)):
        data = json.loads((rep_dir / f"rep-{rep:04d}.json").read_text())
        data.pop("config_hash")
        results.append(data)
    params = list(cfg.params)
    nan = [float("nan")] * len(params)
    _write_csv(out / "replications.csv", cfg,
               ["rep", "seed", "status", "n_roots"] + params + ["residual"],
               [[r["rep"], r["seed"], r["status"], len(r["roots"])] + (r["estimate"] or nan)
                + [min(r["residuals"], default=float("nan"))] for r in results])
    _write_csv(out / "roots.csv", cfg, ["rep", "root"] + params + ["residual"],
               [[r["rep"], k] + list(root) + [res]
                for r in results for k, (root, res) in enumerate(zip(r["roots"], r["residuals"]))])
    _write_csv(out / "normalized.csv", cfg, ["rep"] + [f"z_{p}" for p in params],
               [[r["rep"]] + r["normalized"] for r in results if r["normalized"] is not None])
    for i in range(len(params)):
        for j in range(i + 1, len(params)):
            tag = f"{params[i]}_{params[j]}"
            _write_csv(out / "plotdata" / f"estimates_{tag}.csv", cfg, ["x", "y"],
                       [[r["estimate"][i], r["estimate"][j]] for r in results if r["estimate"]])
            _write_csv(out / "plotdata" / f"normalized_{tag}.csv", cfg, ["x", "y"],
                       [[r["normalized"][i], r["normalized"][j]] for r in results
                        if r["normalized"] is not None])
    summary = summarize(cfg, results)
    _write_json(out / "summary.json", summary)
    return summary


# -- selftest ------------------------------------------------------------------

def selftest_rows() -> list[tuple[str, bool, str]]:
    """Symbolic checks against published values: ``(name, passed, detail)``."""
    rows = []
    got = shuffle((1, 2), (2,))
    rows.append(("shuffle (1,2) with (2)", got == {(1, 2, 2): 2, (2, 1, 2): 1}, str(dict(got))))

    vf = VectorField.from_strings(reference.DIFFUSION_FIELD, reference.DIFFUSION_STATE,
                                  reference.DIFFUSION_PARAMS)
    exps = picard_expansions(vf, 3, [(1,), (1, 1)], y0=[0])
    esig = expected_sig_time_bm(None, 14, symbol="t")
    first = expected_response_signature(exps[(1,)], esig)
    second = expected_response_signature(exps[(1, 1)], esig) * 2
    names = ("a", "b", "t")
    printed = parse_poly(reference.FIRST_MOMENT_PRINTED, names)
    corrected = parse_poly(reference.FIRST_MOMENT_CORRECTED, names)
    rows.append(("first moment, as printed", first.embed(names) == printed, str(first)))
    rows.append(("first moment, a^3 b^2 t^4 sign corrected", first.embed(names) == corrected,
                 "printed sign of a^3*b^2*t^4 is a typo (see README)"))
    second_ref = parse_poly(reference.SECOND_MOMENT_PRINTED, names)
    rows.append(("second moment (doubled), as printed", second.embed(names) == second_ref,
                 f"{len(second.terms)} terms"))
    rows.append(("Davie error order dt^(3h-1) at h=11/24, dt=1e-3",
                 abs(1e-3 ** (3 * float(reference.HURST) - 1) - reference.DAVIE_ERROR_ORDER) < 5e-4,
                 f"{1e-3 ** (3 * float(reference.HURST) - 1):.4f}"))
    return rows


def cmd_selftest() -> int:
    rows = selftest_rows()
    width = max(len(name) for name, _, _ in rows)
    for name, ok, detail in rows:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<{width}}  {detail}")
    return 0 if all(ok for _, ok, _ in rows) else 1


# -- entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="esme", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("expand", "simulate", "estimate", "replicate"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", required=True, type=Path)
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        if name == "replicate":
            p.add_argument("--jobs", type=int, default=1)
        if name == "estimate":
            p.add_argument("--rep", type=int, default=0, help="replication to estimate from")
    sub.add_parser("selftest")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "selftest":
        return cmd_selftest()
    try:
        cfg = ExperimentConfig.load(args.config, args.seed)
        if args.command == "expand":
            cmd_expand(cfg, args.out)
        elif args.command == "simulate":
            cmd_simulate(cfg, args.out)
        elif args.command == "estimate":
            report = cmd_estimate(cfg, args.out, args.rep)
            print(json.dumps({"solutions": report["solutions"]}))
        else:
            summary = cmd_replicate(cfg, args.out, args.jobs)
            print(json.dumps(summary, indent=1))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NoSolutionError as exc:
        print(f"no solution: {exc}", file=sys.stderr)
        return EXIT_NO_SOLUTION
    except (SimulationError, TruncationError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
