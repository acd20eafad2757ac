"""Truncated signatures of sampled (piecewise-linear) paths.

Level ``k`` of a signature is stored as a flat float64 array of ``n**k``
entries in lexicographic word order, so the entry of word ``(i1, ..., ik)``
sits at index ``sum((i_j - 1) * n**(k - j))``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from esme.words import Word, enumerate_words, format_word, parse_word, word_index


@dataclass(frozen=True)
class SampledPath:
    """Discrete observations of a path in R^n; interpreted as their linear interpolant."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if times.ndim != 1 or values.ndim != 2 or len(times) != len(values):
            raise ValueError("times must be 1-d and values (len(times), n)")
        if len(times) < 2:
            raise ValueError("a sampled path needs at least two samples")
        if np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def dimension(self) -> int:
        return self.values.shape[1]

    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=0)

    def to_csv(self, path: str | Path, comment: str | None = None) -> None:
        """Write ``t,x1,..,xn`` rows; ``comment`` becomes a leading ``# ...`` line."""
        with open(path, "w", newline="") as fh:
            if comment is not None:
                fh.write(f"# {comment}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t"] + [f"x{i + 1}" for i in range(self.dimension)])
            for t, row in zip(self.times, self.values):
                writer.writerow([repr(float(t))] + [repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path: str | Path) -> "SampledPath":
        with open(path, newline="") as fh:
            rows = list(csv.reader(line for line in fh if not line.startswith("#")))
        if not rows:
            raise ValueError(f"{path}: empty file")
        header, body = rows[0], rows[1:]
        if not header or header[0] != "t" or header[1:] != [
            f"x{i + 1}" for i in range(len(header) - 1)
        ]:
            raise ValueError(f"{path}: expected header 't,x1,...,xn', got {header}")
        data = np.array([[float(v) for v in row] for row in body])
        return cls(data[:, 0], data[:, 1:])


class TruncatedSignature:
    """All iterated integrals of a path up to ``level``, dense per level."""

    def __init__(self, dimension: int, levels: Sequence[np.ndarray]):
        self.dimension = int(dimension)
        self.levels = tuple(np.asarray(a, dtype=float).reshape(-1) for a in levels)
        for k, arr in enumerate(self.levels):
            if arr.size != self.dimension**k:
                raise ValueError(f"level {k} has {arr.size} entries, expected {dimension**k}")

    @property
    def level(self) -> int:
        return len(self.levels) - 1

    def __getitem__(self, word: Word) -> float:
        return entry(self, word)

    def words(self) -> list[Word]:
        return enumerate_words(self.dimension, 0, self.level)

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "level": self.level,
            "entries": {format_word(w): float(self[w]) for w in self.words()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, data: dict) -> "TruncatedSignature":
        n, level = int(data["dimension"]), int(data["level"])
        levels = [np.zeros(n**k) for k in range(level + 1)]
        for key, value in data["entries"].items():
            w = parse_word(key)
            levels[len(w)][word_index(w, n)] = value
        return cls(n, levels)

    def __repr__(self):
        return f"TruncatedSignature(dimension={self.dimension}, level={self.level})"


def identity_signature(dimension: int, level: int) -> TruncatedSignature:
    levels = [np.zeros(dimension**k) for k in range(level + 1)]
    levels[0][0] = 1.0
    return TruncatedSignature(dimension, levels)


def entry(sig: TruncatedSignature, word: Word) -> float:
    if len(word) > sig.level:
        raise ValueError(f"word {word} longer than truncation level {sig.level}")
    if any(not 1 <= x <= sig.dimension for x in word):
        raise ValueError(f"word {word} has letters outside 1..{sig.dimension}")
    return float(sig.levels[len(word)][word_index(word, sig.dimension)])


def segment_signature(increment, level: int) -> TruncatedSignature:
    """Signature of a straight segment: the truncated tensor exponential of ``increment``."""
    if level < 0:
        raise ValueError("level must be non-negative")
    delta = np.asarray(increment, dtype=float).reshape(-1)
    levels = [np.ones(1)]
    for k in range(1, level + 1):
        levels.append(np.multiply.outer(levels[-1], delta).reshape(-1) / k)
    return TruncatedSignature(delta.size, levels)


def chen_concat(left: TruncatedSignature, right: TruncatedSignature) -> TruncatedSignature:
    """Signature of the concatenated path (tensor product truncated at the common level)."""
    if left.dimension != right.dimension or left.level != right.level:
        raise ValueError(
            f"cannot concatenate signatures of dimension/level {left.dimension}/{left.level}"
            f" and {right.dimension}/{right.level}"
        )
    levels = []
    for k in range(left.level + 1):
        acc = np.zeros(left.dimension**k)
        for j in range(k + 1):
            acc += np.multiply.outer(left.levels[j], right.levels[k - j]).reshape(-1)
        levels.append(acc)
    return TruncatedSignature(left.dimension, levels)


def batch_signature_levels(increments: np.ndarray, level: int) -> list[np.ndarray]:
    """Signatures of many polylines at once.

    Args:
        increments: array of shape ``(batch, steps, n)`` of segment increments.
        level: truncation level.

    Returns:
        list of ``level + 1`` arrays, the k-th of shape ``(batch, n**k)``.
    """
    increments = np.asarray(increments, dtype=float)
    batch, steps, n = increments.shape
    levels = [np.ones((batch, 1))] + [np.zeros((batch, n**k)) for k in range(1, level + 1)]
    for s in range(steps):
        delta = increments[:, s, :]
        # S <- S (x) exp(delta), top level first so lower levels are still the old ones.
        for k in range(level, 0, -1):
            acc = delta / k
            for j in range(1, k):
                acc = acc + levels[j]
                acc = (acc[:, :, None] * delta[:, None, :]).reshape(batch, -1) / (k - j)
            levels[k] = acc + levels[k]
    return levels


def batch_signature_entries(increments: np.ndarray, words: Sequence[Word]) -> np.ndarray:
    """Selected signature entries of many polylines, without the dense tensor.

    Only the prefix closure of ``words`` is tracked, which is much cheaper than
    :func:`batch_signature_levels` when few long words are needed.

    Args:
        increments: array of shape ``(batch, steps, n)``.
        words: the entries to return.

    Returns:
        array ``(batch, len(words))``.
    """
    increments = np.asarray(increments, dtype=float)
    batch, steps, n = increments.shape
    words = [tuple(w) for w in words]
    for w in words:
        if any(not 1 <= x <= n for x in w):
            raise ValueError(f"word {format_word(w)} has letters outside 1..{n}")
    closure = {()}
    for w in words:
        for j in range(1, len(w) + 1):
            closure.add(w[:j])
    tracked = sorted(closure, key=lambda w: (len(w), w))
    index = {w: i for i, w in enumerate(tracked)}
    # Horner per target length L, shared along a prefix trie of the length-L words:
    #   acc(p) = (acc(parent) + S(parent)) * delta[last(p)] / (L - |p| + 1),
    #   S_new(w) = S(w) + acc(w)   for |w| = L.
    plans = []
    for L in sorted({len(w) for w in tracked if w}):
        targets = [w for w in tracked if len(w) == L]
        depth_nodes = [sorted({w[:j] for w in targets}) for j in range(L + 1)]
        stages = []
        for j in range(1, L + 1):
            prev = {p: i for i, p in enumerate(depth_nodes[j - 1])}
            nodes = depth_nodes[j]
            stages.append((
                np.array([prev[p[:-1]] for p in nodes]),
                np.array([index[p[:-1]] for p in nodes]),
                np.array([p[-1] - 1 for p in nodes]),
                1.0 / (L - j + 1),
            ))
        plans.append((np.array([index[w] for w in depth_nodes[L]]), stages))
    S = np.zeros((batch, len(tracked)))
    S[:, 0] = 1.0
    for s in range(steps):
        delta = increments[:, s, :]
        updates = []
        for out_idx, stages in plans:
            acc = np.zeros((batch, 1))
            for parent, parent_word, letter, scale in stages:
                acc = (acc[:, parent] + S[:, parent_word]) * (delta[:, letter] * scale)
            updates.append((out_idx, acc))
        for out_idx, acc in updates:
            S[:, out_idx] += acc
    return S[:, [index[w] for w in words]]


def path_signature(path: SampledPath, level: int) -> TruncatedSignature:
    """Signature of the piecewise-linear interpolant of ``path`` truncated at ``level``."""
    if not isinstance(path, SampledPath):
        path = SampledPath(np.arange(len(path)), path)
    if level < 0:
        raise ValueError("level must be non-negative")
    levels = batch_signature_levels(path.increments()[None], level)
    return TruncatedSignature(path.dimension, [lv[0] for lv in levels])


def signature_inverse(sig: TruncatedSignature) -> TruncatedSignature:
    """Inverse in the truncated tensor algebra (signature of the reversed path)."""
    n, L = sig.dimension, sig.level
    x = [np.zeros(n**k) for k in range(L + 1)]
    for k in range(1, L + 1):
        x[k] = sig.levels[k].copy()
    # (1 + x)^{-1} = sum_j (-x)^j, truncated
    result = [np.zeros(n**k) for k in range(L + 1)]
    result[0][0] = 1.0
    power = [lv.copy() for lv in result]
    for _ in range(1, L + 1):
        nxt = [np.zeros(n**k) for k in range(L + 1)]
        for k in range(1, L + 1):
            for j in range(k):
                nxt[k] += np.multiply.outer(power[j], -x[k - j]).reshape(-1)
        power = nxt
        result = [r + p for r, p in zip(result, power)]
    return TruncatedSignature(n, result)


def tensor_exponential(
    generator: Sequence[np.ndarray], dimension: int, level: int
) -> TruncatedSignature:
    """Truncated exp of a tensor series with zero scalar part.

    ``generator[k]`` holds the level-k component (``generator[0]`` is ignored).
    """
    n = dimension
    g = [np.zeros(n**k) for k in range(level + 1)]
    for k in range(1, min(level, len(generator) - 1) + 1):
        g[k] = np.asarray(generator[k], dtype=float).reshape(-1)
    result = [np.zeros(n**k) for k in range(level + 1)]
    result[0][0] = 1.0
    power = [lv.copy() for lv in result]
    for j in range(1, level + 1):
        nxt = [np.zeros(n**k) for k in range(level + 1)]
        for k in range(1, level + 1):
            for i in range(k):
                nxt[k] += np.multiply.outer(power[i], g[k - i]).reshape(-1)
        power = [p / j for p in nxt]
        result = [r + p for r, p in zip(result, power)]
    return TruncatedSignature(n, result)

