"""The canonical homogeneous norm and its anisotropic geometry.

A weighted dilation stretches each state component at its own rate. The
canonical homogeneous norm measures "how much dilation" is needed to
bring a point onto the unit ellipsoid; unlike a norm it scales like
e^s along dilation orbits rather than linearly along rays.
"""

import numpy as np

from homocon import (
    DilationGenerator,
    HomogeneousNormContext,
    canonical_norm,
    dilation_matrix,
    norm_gradient,
)

gen = DilationGenerator(n=2, mu=-0.2)
print("generator diagonal:", gen.diag_entries)

P = np.array([[0.0020, 0.0005], [0.0005, 0.0012]])
ctx = HomogeneousNormContext(gen, P)

x = np.array([-2.0, 1.0])
r = canonical_norm(ctx, x)
print("\n||x||_d =", r)

# the defining equation: dilating by -ln r lands on the unit ellipsoid
y = dilation_matrix(gen, -np.log(r)) @ x
print("||d(-ln r) x||_P =", np.sqrt(y @ P @ y))

# degree-1 homogeneity along orbits (not along rays)
for s in (-1.0, 0.5, 2.0):
    xs = dilation_matrix(gen, s) @ x
    print(f"s={s:+.1f}: ||d(s)x||_d / ||x||_d = {canonical_norm(ctx, xs) / r:.6f}"
          f"  (e^s = {np.exp(s):.6f})")

# plain scaling does NOT multiply the homogeneous norm linearly
print("\n||2x||_d / ||x||_d =", canonical_norm(ctx, 2 * x) / r, "(not 2)")

g = norm_gradient(ctx, x)
h = 1e-6
fd = [(canonical_norm(ctx, x + h * e) - canonical_norm(ctx, x - h * e)) / (2 * h)
      for e in np.eye(2)]
print("\ngradient:", g)
print("finite differences:", np.array(fd))
