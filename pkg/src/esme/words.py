"""Words over a finite alphabet and their shuffle combinatorics.

A word is a plain tuple of 1-based integer letters; ``()`` is the empty word.
Multisets of words are :class:`collections.Counter` instances.
"""

from __future__ import annotations

import itertools
from collections import Counter
from functools import lru_cache
from typing import Iterable, Sequence

Word = tuple[int, ...]
EMPTY: Word = ()


def as_word(letters: Iterable[int], alphabet_size: int | None = None) -> Word:
    """Coerce ``letters`` to a word, validating against ``alphabet_size``."""
    word = tuple(int(x) for x in letters)
    if alphabet_size is not None:
        check_word(word, alphabet_size)
    return word


def check_word(word: Sequence[int], alphabet_size: int) -> None:
    if alphabet_size < 1:
        raise ValueError(f"alphabet size must be positive, got {alphabet_size}")
    for letter in word:
        if not 1 <= letter <= alphabet_size:
            raise ValueError(
                f"letter {letter} of word {tuple(word)} outside alphabet 1..{alphabet_size}"
            )


@lru_cache(maxsize=None)
def _interleavings(n1: int, n2: int) -> tuple[tuple[int, ...], ...]:
    # Each entry lists, for every output slot, 0 (take from w1) or 1 (take from w2).
    out = []
    for slots in itertools.combinations(range(n1 + n2), n2):
        mask = [0] * (n1 + n2)
        for s in slots:
            mask[s] = 1
        out.append(tuple(mask))
    return tuple(out)


def shuffle(w1: Word, w2: Word, alphabet_size: int | None = None) -> Counter:
    """Shuffle product of two words as a multiset.

    >>> sorted(shuffle((1, 2), (2,)).items())
    [((1, 2, 2), 2), ((2, 1, 2), 1)]
    """
    if alphabet_size is not None:
        check_word(w1, alphabet_size)
        check_word(w2, alphabet_size)
    result: Counter = Counter()
    if not w1 or not w2:
        result[tuple(w1) + tuple(w2)] = 1
        return result
    for mask in _interleavings(len(w1), len(w2)):
        i = j = 0
        word = []
        for m in mask:
            if m:
                word.append(w2[j])
                j += 1
            else:
                word.append(w1[i])
                i += 1
        result[tuple(word)] += 1
    return result


def shuffle_multisets(left: Counter, right: Counter) -> Counter:
    """Bilinear extension of :func:`shuffle` to multisets of words."""
    result: Counter = Counter()
    for u, cu in left.items():
        for v, cv in right.items():
            for w, c in shuffle(u, v).items():
                result[w] += cu * cv * c
    return result


def split_last(word: Word) -> tuple[Word, int]:
    """Split ``word`` into its prefix without the last letter and that letter."""
    if not word:
        raise ValueError("the empty word has no last letter")
    return tuple(word[:-1]), word[-1]


def enumerate_words(alphabet_size: int, min_len: int, max_len: int) -> list[Word]:
    """All words with length in ``[min_len, max_len]``, shortest first, then lexicographic."""
    if alphabet_size < 1:
        raise ValueError(f"alphabet size must be positive, got {alphabet_size}")
    if not 0 <= min_len <= max_len:
        raise ValueError(f"need 0 <= min_len <= max_len, got {min_len}, {max_len}")
    letters = range(1, alphabet_size + 1)
    words: list[Word] = []
    for k in range(min_len, max_len + 1):
        words.extend(itertools.product(letters, repeat=k))
    return words


def word_index(word: Word, alphabet_size: int) -> int:
    """Position of ``word`` among the words of its length in lexicographic order."""
    idx = 0
    for letter in word:
        idx = idx * alphabet_size + (letter - 1)
    return idx


def format_word(word: Word) -> str:
    return "(" + ",".join(str(x) for x in word) + ")"


def parse_word(text: str) -> Word:
    """Inverse of :func:`format_word`; accepts ``"(1,2,2)"`` and ``"()"``."""
    s = text.strip()
    if not (s.startswith("(") and s.endswith(")")):
        raise ValueError(f"malformed word {text!r}")
    body = s[1:-1].strip()
    if not body:
        return EMPTY
    try:
        word = tuple(int(part) for part in body.split(","))
    except ValueError:
        raise ValueError(f"malformed word {text!r}") from None
    if any(x < 1 for x in word):
        raise ValueError(f"letters are 1-based, got {text!r}")
    return word
