"""
Signatures of sampled paths
===========================

A path is summarised by its iterated integrals. For a polyline these are exact:
each straight piece contributes a tensor exponential and Chen's identity glues the
pieces together.
"""

import numpy as np

from esme.signature import SampledPath, chen_concat, entry, path_signature, segment_signature
from esme.words import format_word, shuffle

# A two-dimensional polyline: time on the first channel, a zig-zag on the second.
t = np.linspace(0.0, 1.0, 5)
x = np.array([0.0, 0.4, -0.1, 0.3, 0.2])
path = SampledPath(t, np.stack([t, x], axis=1))
sig = path_signature(path, level=3)

for word in [(1,), (2,), (1, 2), (2, 1), (2, 2)]:
    print(f"S{format_word(word):8s} = {entry(sig, word): .6f}")

# Level one is just the increment, and the symmetric part of level two is half its square.
print("increment check:", entry(sig, (2,)), x[-1] - x[0])
print("S(2,2) vs dx^2/2:", entry(sig, (2, 2)), (x[-1] - x[0]) ** 2 / 2)

###############################################################################
# Chen's identity
# ---------------
# Splitting the path at its middle point and multiplying the two signatures in the
# truncated tensor algebra gives back the whole.

left = path_signature(SampledPath(t[:3], path.values[:3]), 3)
right = path_signature(SampledPath(t[2:], path.values[2:]), 3)
glued = chen_concat(left, right)
print("max Chen mismatch:", max(np.max(np.abs(a - b)) for a, b in zip(glued.levels, sig.levels)))

###############################################################################
# Shuffles
# --------
# Products of signature entries are linear combinations of longer entries, with
# coefficients from the shuffle product of words.

u, v = (1, 2), (2,)
product = entry(sig, u) * entry(sig, v)
combo = sum(c * entry(sig, w) for w, c in shuffle(u, v).items())
print(f"shuffle {format_word(u)} x {format_word(v)} = {dict(shuffle(u, v))}")
print("product vs shuffle sum:", product, combo)

# A single straight segment has signature exp(dx): entries are dx^w / |w|!.
seg = segment_signature([0.5, -1.0], 3)
print("segment S(2,2,2):", entry(seg, (2, 2, 2)), (-1.0) ** 3 / 6)
