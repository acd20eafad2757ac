"""Symbolic Picard expansion of a polynomial RDE response.

For ``dY = f(Y; theta) dX`` with ``f`` polynomial in ``Y``, the r-th Picard
iterate anchored at time 0 satisfies

    Y(r)^tau_{0,t} = sum_sigma alpha^tau_{r,sigma}(y0; theta) X^sigma_{0,t}

with finitely many driver words ``sigma``. This module builds the coefficient
maps ``sigma -> alpha`` exactly (rational polynomials in theta and y0) and
contracts them against an expected signature of the driver.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Mapping, Sequence

from esme.polynomials import MultiPoly, parse_poly
from esme.words import EMPTY, Word, enumerate_words, format_word, parse_word, shuffle

log = logging.getLogger(__name__)


class TruncationError(ValueError):
    """The driver expected signature is not deep enough for an expansion."""


@dataclass(frozen=True)
class VectorField:
    """``f: R^m x Theta -> L(R^n, R^m)``, one polynomial per (response j, driver i).

    ``entries[j][i]`` is a polynomial over ``state + params``.
    """

    entries: tuple
    state: tuple[str, ...]
    params: tuple[str, ...]

    def __post_init__(self):
        entries = tuple(tuple(row) for row in self.entries)
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "state", tuple(self.state))
        object.__setattr__(self, "params", tuple(self.params))
        if len(entries) != len(self.state):
            raise ValueError(f"need one row per state variable, got {len(entries)} rows")
        if len({len(row) for row in entries}) != 1:
            raise ValueError("all rows must have the same number of driver columns")
        for row in entries:
            for p in row:
                if p.variables != self.variables:
                    raise ValueError("entries must be polynomials over state + params")

    @classmethod
    def from_strings(cls, rows: Sequence[Sequence[str]], state, params) -> "VectorField":
        """Build from textual entries, e.g. ``[["a*(1-y)", "b*y^2"]]``."""
        variables = tuple(state) + tuple(params)
        entries = [[parse_poly(s, variables) for s in row] for row in rows]
        return cls(entries, tuple(state), tuple(params))

    @property
    def variables(self) -> tuple[str, ...]:
        return self.state + self.params

    @property
    def m(self) -> int:
        return len(self.state)

    @property
    def n(self) -> int:
        return len(self.entries[0])

    @property
    def q(self) -> int:
        """Maximal total degree in the state variables over all entries (0 for a zero field)."""
        return max(0, max(p.degree(self.state) for row in self.entries for p in row))

    def y0_names(self) -> tuple[str, ...]:
        return tuple(f"{s}0" for s in self.state)

    def numeric(self, theta: Mapping[str, float]):
        """Float callable ``y -> (m, n)`` matrix, vectorised over a leading batch axis."""
        compiled = []
        for row in self.entries:
            compiled.append([p.substitute({k: theta[k] for k in self.params}).to_arrays() for p in row])
        m, n = self.m, self.n

        def f(y):
            import numpy as np

            y = np.atleast_2d(np.asarray(y, dtype=float))
            out = np.zeros((y.shape[0], m, n))
            for j in range(m):
                for i in range(n):
                    exps, coefs = compiled[j][i]
                    if coefs.size:
                        mono = np.prod(y[:, None, :] ** exps[None, :, :m], axis=2)
                        out[:, j, i] = mono @ coefs
            return out

        return f

    def numeric_jacobian(self, theta: Mapping[str, float]):
        """Float callable ``y -> (batch, m, n, m)`` array of ``d f_{j,i} / d y_p``."""
        rows = [
            [
                [p.diff(s).substitute({k: theta[k] for k in self.params}).to_arrays() for s in self.state]
                for p in row
            ]
            for row in self.entries
        ]
        m, n = self.m, self.n

        def jac(y):
            import numpy as np

            y = np.atleast_2d(np.asarray(y, dtype=float))
            out = np.zeros((y.shape[0], m, n, m))
            for j in range(m):
                for i in range(n):
                    for p in range(m):
                        exps, coefs = rows[j][i][p]
                        if coefs.size:
                            mono = np.prod(y[:, None, :] ** exps[None, :, :m], axis=2)
                            out[:, j, i, p] = mono @ coefs
            return out

        return jac


def augment_time_scaled(vf: VectorField, suffix: str = "c") -> VectorField:
    """Joint field for ``(Y, Y(c))`` where ``dY(c)_t = f(Y(c)_t) dX_{ct}``.

    The joint driver is ``(X_t, X_{ct})`` (dimension ``2n``) and the field is
    block diagonal. The copy's state variables are named ``<state>_<suffix>``.
    """
    copy_state = tuple(f"{s}_{suffix}" for s in vf.state)
    clash = set(copy_state) & set(vf.variables)
    if clash:
        raise ValueError(f"augmented state names {sorted(clash)} collide with existing variables")
    state = vf.state + copy_state
    variables = state + vf.params
    rename = {s: MultiPoly.variable(c, variables) for s, c in zip(vf.state, copy_state)}
    zero = MultiPoly.zero(variables)
    rows = []
    for row in vf.entries:
        rows.append([p.embed(variables) for p in row] + [zero] * vf.n)
    for row in vf.entries:
        rows.append([zero] * vf.n + [p.embed(variables).substitute(rename) for p in row])
    return VectorField(rows, state, vf.params)


@dataclass
class PicardExpansion:
    """Coefficients ``alpha^tau_{r, sigma}`` for one response word ``tau``."""

    response_word: Word
    r: int
    driver_dim: int
    variables: tuple[str, ...]
    coefficients: dict = field(default_factory=dict)
    initial_vars: tuple[str, ...] = ()

    def __len__(self):
        return len(self.coefficients)

    def max_word_length(self) -> int:
        return max((len(w) for w in self.coefficients), default=0)

    def to_dict(self) -> dict:
        return {
            "response_word": format_word(self.response_word),
            "r": self.r,
            "driver_dim": self.driver_dim,
            "variables": list(self.variables),
            "initial_vars": list(self.initial_vars),
            "coefficients": {
                format_word(w): str(self.coefficients[w])
                for w in sorted(self.coefficients, key=lambda w: (len(w), w))
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, data: dict) -> "PicardExpansion":
        variables = tuple(data["variables"])
        coefs = {parse_word(k): parse_poly(v, variables) for k, v in data["coefficients"].items()}
        return cls(parse_word(data["response_word"]), int(data["r"]), int(data["driver_dim"]),
                   variables, coefs, tuple(data.get("initial_vars", ())))


def max_driver_length(tau_len: int, q: int, r: int) -> int:
    """Longest driver word that can carry a nonzero coefficient."""
    if r == 0:
        return 0
    if q == 1:
        return tau_len * r
    return tau_len * (q**r - 1) // (q - 1)


@lru_cache(maxsize=200_000)
def _shuffle_items(u: Word, v: Word) -> tuple:
    return tuple(shuffle(u, v).items())


def _add_scaled(acc: dict, word: Word, poly_terms: dict, scale) -> None:
    slot = acc.get(word)
    if slot is None:
        slot = acc[word] = {}
    for e, c in poly_terms.items():
        v = slot.get(e)
        slot[e] = c * scale if v is None else v + c * scale


def _finalize(variables, acc: dict) -> dict:
    out = {}
    for w, terms in acc.items():
        clean = {e: c for e, c in terms.items() if c}
        if clean:
            out[w] = MultiPoly._raw(variables, clean)
    return out


def _lift_once(prefix: dict, last: dict, variables) -> dict:
    """Coefficients of ``Y^{tau}`` from those of ``Y^{tau-}`` and ``Y^{(tau_last)}``."""
    acc: dict = {}
    for s2, a2 in last.items():
        head, letter = s2[:-1], s2[-1]
        for s1, a1 in prefix.items():
            prod = (a1 * a2).terms
            if not prod:
                continue
            for w, c in _shuffle_items(s1, head):
                _add_scaled(acc, w + (letter,), prod, c)
    return _finalize(variables, acc)


def lift_to_word(level1: Sequence[PicardExpansion], tau: Word) -> PicardExpansion:
    """Expansion of ``Y^tau`` given the single-letter expansions ``level1[j-1]``.

    Products of driver iterated integrals are rewritten with the shuffle identity.
    """
    return _lift_all(level1, [tau])[tuple(tau)]


def _lift_all(level1: Sequence[PicardExpansion], taus) -> dict:
    """Expansions for every word in ``taus`` (and their prefixes), sharing work."""
    if not level1:
        raise ValueError("need at least one level-1 expansion")
    variables = level1[0].variables
    r, n = level1[0].r, level1[0].driver_dim
    for e in level1:
        if e.r != r or e.driver_dim != n or e.variables != variables:
            raise ValueError("level-1 expansions must share r, driver alphabet and variables")
    m = len(level1)
    initial = level1[0].initial_vars
    cache: dict[Word, dict] = {EMPTY: {EMPTY: MultiPoly.constant(1, variables)}}
    for j in range(1, m + 1):
        cache[(j,)] = dict(level1[j - 1].coefficients)

    def get(tau: Word) -> dict:
        if tau in cache:
            return cache[tau]
        if any(not 1 <= x <= m for x in tau):
            raise ValueError(f"response word {tau} has letters outside 1..{m}")
        coefs = _lift_once(get(tau[:-1]), cache[(tau[-1],)], variables)
        cache[tau] = coefs
        return coefs

    out = {}
    for tau in taus:
        tau = tuple(tau)
        out[tau] = PicardExpansion(tau, r, n, variables, get(tau), initial)
    return out


def expansion_variables(vf: VectorField, symbolic_y0: bool = True) -> tuple[str, ...]:
    return vf.params + (vf.y0_names() if symbolic_y0 else ())


def _taylor_table(vf: VectorField, variables, y0) -> dict:
    """``(j, i, tau) -> d_tau f_{j,i}`` at the initial condition, over ``variables``."""
    q = vf.q
    full = vf.variables + tuple(v for v in variables if v not in vf.variables)
    if y0 is None:
        at = {s: MultiPoly.variable(f"{s}0", full) for s in vf.state}
    else:
        if len(y0) != vf.m:
            raise ValueError(f"initial condition has {len(y0)} entries, expected {vf.m}")
        at = {s: Fraction(v) for s, v in zip(vf.state, y0)}
    table = {}
    for j in range(vf.m):
        for i in range(vf.n):
            base = vf.entries[j][i].embed(full)
            by_multiset: dict = {}
            for tau in enumerate_words(vf.m, 0, q):
                key = tuple(sorted(tau))
                if key not in by_multiset:
                    d = base
                    for letter in key:
                        d = d.diff(vf.state[letter - 1])
                    by_multiset[key] = d.substitute(at).embed(variables) if not d.is_zero() else None
                if by_multiset[key] is not None and not by_multiset[key].is_zero():
                    table[(j + 1, i + 1, tau)] = by_multiset[key]
    return table


def picard_level1(vf: VectorField, r: int, y0: Sequence | None = None) -> list[PicardExpansion]:
    """Single-letter expansions ``Y(r)^{(j)}``, j = 1..m, anchored at time 0.

    Args:
        vf: polynomial vector field.
        r: number of Picard iterations (``r = 0`` gives the zero expansion).
        y0: numeric initial condition to substitute up front; when ``None`` the
            coefficients keep the symbols ``<state>0``.
    """
    if r < 0:
        raise ValueError("r must be non-negative")
    variables = expansion_variables(vf, symbolic_y0=y0 is None)
    initial = vf.y0_names() if y0 is None else ()
    q = vf.q
    taus = enumerate_words(vf.m, 0, q)
    table = _taylor_table(vf, variables, y0)
    level1 = [PicardExpansion((j,), 0, vf.n, variables, {}, initial) for j in range(1, vf.m + 1)]
    for step in range(1, r + 1):
        lifted = _lift_all(level1, taus)
        new = []
        for j in range(1, vf.m + 1):
            acc: dict = {}
            for i in range(1, vf.n + 1):
                for tau in taus:
                    d = table.get((j, i, tau))
                    if d is None:
                        continue
                    for sigma, alpha in lifted[tau].coefficients.items():
                        _add_scaled(acc, sigma + (i,), (d * alpha).terms, 1)
            new.append(
                PicardExpansion((j,), step, vf.n, variables, _finalize(variables, acc), initial)
            )
        level1 = new
        log.debug("picard step %d: %s terms", step, [len(e) for e in level1])
    return level1


def picard_expansions(vf: VectorField, r: int, words: Sequence[Word], y0=None) -> dict:
    """Expansions of ``Y(r)^tau`` for every ``tau`` in ``words``."""
    level1 = picard_level1(vf, r, y0)
    return _lift_all(level1, [tuple(w) for w in words])


def expected_response_signature(
    exp: PicardExpansion, driver_esig, y0: Mapping[str, object] | Sequence | None = None
) -> MultiPoly:
    """``sum_sigma alpha_sigma E[X^sigma]`` as a polynomial in theta (and ``t`` if symbolic).

    Args:
        exp: expansion of one response word.
        driver_esig: object with ``level`` and ``value(word)``; values may be numbers
            or :class:`MultiPoly` (e.g. symbolic in ``t``).
        y0: values for the symbolic initial-condition variables, if any remain.
    """
    need = exp.max_word_length()
    if exp.coefficients and need > driver_esig.level:
        raise TruncationError(
            f"expansion of {format_word(exp.response_word)} at r={exp.r} uses driver words of "
            f"length {need}, expected signature only goes to level {driver_esig.level}"
        )
    extra: list[str] = []
    values = {}
    for sigma in exp.coefficients:
        v = driver_esig.value(sigma)
        values[sigma] = v
        if isinstance(v, MultiPoly):
            extra.extend(x for x in v.variables if x not in extra)
    variables = tuple(exp.variables) + tuple(x for x in extra if x not in exp.variables)
    total = MultiPoly.zero(variables)
    for sigma, alpha in exp.coefficients.items():
        v = values[sigma]
        if isinstance(v, MultiPoly):
            if v.is_zero():
                continue
            total = total + alpha.embed(variables) * v.embed(variables)
        elif v:
            total = total + alpha.embed(variables) * v
    if y0 is not None:
        if not isinstance(y0, Mapping):
            y0 = dict(zip(exp.initial_vars, y0))
        total = total.substitute(y0)
        variables = tuple(x for x in variables if x not in y0)
        total = total.embed(variables)
    return total


def expansion_size(expansions) -> Counter:
    """Number of nonzero coefficients per driver-word length (to gauge cost before contraction)."""
    sizes: Counter = Counter()
    for e in expansions:
        for w in e.coefficients:
            sizes[len(w)] += 1
    return sizes
