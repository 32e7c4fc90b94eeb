"""The top singular values as roots of a K x K determinant.

For small noise each of the K largest singular values of C + F G^T is a
root of det((x I - Z) S^{-1} (x I - Z^T) - R), with Z, S, R resolvent
matrices of C.  Scans the determinant along x and marks the SVD values.
"""

import numpy as np

from spikedsv import criterion_check, determinant_at, top_singular_values

rng = np.random.default_rng(0)
M, N, K = 8, 12, 2
F, _ = np.linalg.qr(rng.standard_normal((M, K)))
G = rng.standard_normal((N, K)) * 3
C = 0.3 * rng.standard_normal((M, N))

lam = top_singular_values(C + F @ G.T, K).singular_values
print("singular values:", lam)

xs = np.linspace(0.8 * lam[-1], 1.2 * lam[0], 25)
for x in xs:
    try:
        d = determinant_at(C, F, G, x)
    except ValueError:
        continue  # too close to ||C|| for the resolvent bounds
    mark = " <" if np.any(np.abs(x - lam) < (xs[1] - xs[0]) / 2) else ""
    print(f"  x = {x:8.4f}  det = {d:+.4e}{mark}")

for row in criterion_check(C, F, G):
    print(f"r={row.r}: |det| at root {abs(row.det_root):.2e}, at +5% {abs(row.det_above):.2e}, {'pass' if row.passed else 'FAIL'}")
