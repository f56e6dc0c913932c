"""Necessary condition for diagonal weights via iterated integrals.

For diag(w, 1/w) weights in the admissible class, the normalized
alternating-weight iterated integral stays pinched between positive
constants uniformly in the depth.  The constant weight collapses to the
closed form n/(2n+1) (scaled by the constant); a strongly oscillating
profile drifts, hinting at degrading comparability constants.
"""

import numpy as np

from canspec.oracles import diag_necessary_condition

print("unit weight w == 1 (closed form n/(2n+1)):")
for n in range(1, 6):
    ratio = diag_necessary_condition(lambda t: np.ones_like(t), n, 1.0)
    print(f"  n={n}: {ratio:.12f}   target {n / (2 * n + 1):.12f}")

print("\nsmooth positive profile w(t) = 1.5 + 0.3 sin(2t):")
for n in range(1, 6):
    ratio = diag_necessary_condition(lambda t: 1.5 + 0.3 * np.sin(2 * t), n, 1.0)
    print(f"  n={n}: {ratio:.8f}")

print("\nstrong oscillation w(t) = exp(2 sin(12 t)):")
for n in range(1, 6):
    ratio = diag_necessary_condition(lambda t: np.exp(2 * np.sin(12 * t)), n, 1.0)
    print(f"  n={n}: {ratio:.8f}")
