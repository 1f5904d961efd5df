"""Weighted dilations and the canonical homogeneous norm.

A dilation d(s) = exp(s*G) scales state space non-uniformly; here G is
always diagonal with entries r_k = 1 - mu*(n-k), the generator matched
to the integrator chain. The canonical homogeneous norm of x is exp(s*)
where s* solves ||d(-s*) x||_P = 1; it is the degree-1 homogeneous
surrogate for a norm that all protocols and cones in this package are
built on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._linalg import is_positive_definite, symmetrize


class OriginNotDifferentiable(Exception):
    """The homogeneous norm has no gradient at x = 0."""


@dataclass(frozen=True)
class DilationGenerator:
    """Diagonal dilation generator for an n-dimensional integrator chain.

    Entries are r_k = 1 - mu*(n-k), k = 1..n, all positive whenever
    mu < 1/(n-1); the last entry is exactly 1.
    """

    n: int
    mu: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("state dimension must be >= 1")
        if self.n > 1 and not self.mu < 1.0 / (self.n - 1):
            raise ValueError(f"mu must be < 1/(n-1) = {1.0 / (self.n - 1):g}")
        k = np.arange(1, self.n + 1, dtype=float)
        rk = 1.0 - self.mu * (self.n - k)
        rk.setflags(write=False)
        object.__setattr__(self, "_rk", rk)

    @property
    def diag_entries(self) -> np.ndarray:
        return self._rk

    def matrix(self) -> np.ndarray:
        return np.diag(self.diag_entries)


def dilation_matrix(gen: DilationGenerator, s: float) -> np.ndarray:
    """d(s) = exp(s*G), diagonal and exact for diagonal generators."""
    return np.diag(np.exp(s * gen.diag_entries))


def check_generator_relations(
    gen: DilationGenerator, A: np.ndarray, B: np.ndarray
) -> tuple[float, float]:
    """Residuals of the generator equations A G = (mu I + G) A and G B = B.

    Both vanish (to rounding) for the diagonal generator paired with the
    canonical chain matrices.
    """
    G = gen.matrix()
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float).reshape(gen.n, -1)
    r1 = np.linalg.norm(A @ G - (gen.mu * np.eye(gen.n) + G) @ A)
    r2 = np.linalg.norm(G @ B - B)
    return float(r1), float(r2)


@dataclass(frozen=True, eq=False)
class HomogeneousNormContext:
    """Dilation generator plus SPD shape matrix P defining ||.||_d.

    Construction checks P > 0 and the monotonicity condition
    P G + G P > 0, which makes s -> ||d(s)x|| strictly increasing and
    the implicit norm equation uniquely solvable.
    """

    gen: DilationGenerator
    P: np.ndarray

    def __post_init__(self):
        P = symmetrize(np.array(self.P, dtype=float))
        n = self.gen.n
        if P.shape != (n, n):
            raise ValueError(f"P must be ({n}, {n})")
        if not is_positive_definite(P):
            raise ValueError("P must be positive definite")
        G = self.gen.matrix()
        if not is_positive_definite(P @ G + G @ P):
            raise ValueError("monotonicity condition P G + G P > 0 fails")
        P.setflags(write=False)
        object.__setattr__(self, "P", P)

    def weighted_norm(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return float(np.sqrt(x @ self.P @ x))


_ZERO_FLOOR = 1e-300  # below this weighted norm, x is treated as the origin


def canonical_norm_many(
    ctx: HomogeneousNormContext,
    X: np.ndarray,
    warm_log: np.ndarray | None = None,
    tol: float = 1e-13,
    max_iter: int = 120,
) -> tuple[np.ndarray, np.ndarray]:
    """Canonical homogeneous norms of the rows of X.

    Solves F(s) = log ||d(-s) x||_P = 0 per row with a bracketed Newton
    iteration (F is smooth and strictly decreasing). ``warm_log`` seeds
    s from a previous call, which typically cuts the solve to one or two
    iterations along a trajectory.

    Returns (norms, log_norms); rows at the origin get norm 0 and log
    norm -inf.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    P = ctx.P
    rk = ctx.gen.diag_entries
    m = X.shape[0]

    absmax = np.max(np.abs(X), axis=1)
    nz = absmax > _ZERO_FLOOR
    pn2 = np.einsum("ij,jk,ik->i", X, P, X)
    r = np.zeros(m)
    s = np.where(nz, 0.5 * np.log(np.maximum(pn2, 1e-308)), 0.0)
    if warm_log is not None:
        w = np.asarray(warm_log, dtype=float)
        s = np.where(np.isfinite(w), w, s)

    # squared norms outside the comfortably representable range go
    # straight to the exponent-shifted scalar solver
    extreme = nz & ((pn2 < 1e-280) | (pn2 > 1e280) | ~np.isfinite(pn2))
    for i in np.nonzero(extreme)[0]:
        ri = _canonical_norm_scalar(ctx, X[i])
        r[i] = ri
        s[i] = np.log(ri) if ri > 0 else 0.0

    big = 1e300
    lo = np.full(m, -big)
    hi = np.full(m, big)
    active = nz & ~extreme
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for _ in range(max_iter):
            if not active.any():
                break
            Y = X * np.exp(-np.outer(s, rk))
            PY = Y @ P
            q2 = np.einsum("ij,ij->i", PY, Y)
            bad = active & (~np.isfinite(q2) | (q2 <= 0))
            if bad.any():
                # over/underflow during bracketing: robust scalar fallback
                for i in np.nonzero(bad)[0]:
                    ri = _canonical_norm_scalar(ctx, X[i])
                    r[i] = ri
                    s[i] = np.log(ri) if ri > 0 else 0.0
                    active[i] = False
                if not active.any():
                    break
                q2 = np.where(bad, 1.0, q2)
            F = 0.5 * np.log(np.maximum(q2, 1e-308))
            dF = -np.einsum("ij,ij->i", PY, Y * rk) / np.maximum(q2, 1e-308)
            conv = active & (np.abs(F) <= tol)
            active &= ~conv
            if not active.any():
                break
            # maintain the bracket: F > 0 means s too small (F is decreasing)
            lo = np.where(active & (F > 0), np.maximum(lo, s), lo)
            hi = np.where(active & (F < 0), np.minimum(hi, s), hi)
            step = np.where(dF < 0, F / dF, 0.0)
            cand = s - step
            inside = (cand > lo) & (cand < hi) & np.isfinite(cand)
            have_lo = lo > -big
            have_hi = hi < big
            mid = np.where(
                have_lo & have_hi,
                0.5 * (lo + hi),
                np.where(
                    have_lo,
                    np.where(have_lo, lo, 0.0) + 1.0 + np.abs(np.where(have_lo, lo, 0.0)),
                    np.where(have_hi, hi, 0.0) - 1.0 - np.abs(np.where(have_hi, hi, 0.0)),
                ),
            )
            s = np.where(active, np.where(inside, cand, mid), s)

    r = np.where(nz, np.exp(s), 0.0)
    logr = np.where(nz, s, -np.inf)
    return r, logr


def _canonical_norm_scalar(ctx: HomogeneousNormContext, x: np.ndarray) -> float:
    """Overflow-safe scalar solve, working with component exponents."""
    P = ctx.P
    rk = ctx.gen.diag_entries
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    if not np.any(ax > 0):
        return 0.0
    sign = np.sign(x)
    with np.errstate(divide="ignore"):
        lx = np.where(ax > 0, np.log(np.maximum(ax, 1e-308)), -np.inf)

    def logq(s: float) -> float:
        xi = lx - s * rk
        t = np.max(xi[np.isfinite(xi)])
        y = np.where(np.isfinite(xi), sign * np.exp(np.minimum(xi - t, 700.0)), 0.0)
        q2 = float(y @ P @ y)
        return t + 0.5 * np.log(max(q2, 1e-308))

    # bracket the root of logq(s) = 0 (strictly decreasing)
    s = float(np.max(lx[np.isfinite(lx)]))
    step = 1.0
    lo, hi = -np.inf, np.inf
    for _ in range(400):
        v = logq(s)
        if v > 0:
            lo = s
            if np.isfinite(hi):
                break
            s += step
        else:
            hi = s
            if np.isfinite(lo):
                break
            s -= step
        step *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if logq(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * max(1.0, abs(mid)):
            break
    return float(np.exp(0.5 * (lo + hi)))


def canonical_norm(ctx: HomogeneousNormContext, x: np.ndarray) -> float:
    """Canonical homogeneous norm ||x||_d induced by ||.||_P.

    Total function: returns 0 at the origin, otherwise exp(s*) with
    ||d(-s*) x||_P = 1 resolved to relative tolerance 1e-12.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    r, _ = canonical_norm_many(ctx, x[None, :])
    return float(r[0])


def norm_gradient(ctx: HomogeneousNormContext, x: np.ndarray) -> np.ndarray:
    """Row gradient of the canonical homogeneous norm at x != 0.

    Closed form: with z = d(-ln r) x on the unit P-sphere,
    grad = r * z' P d(-ln r) / (z' P G z); the denominator is positive
    by the monotonicity condition.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    r = canonical_norm(ctx, x)
    if r == 0.0:
        raise OriginNotDifferentiable("gradient undefined at the origin")
    rk = ctx.gen.diag_entries
    dinv = np.exp(-np.log(r) * rk)
    z = x * dinv
    Pz = ctx.P @ z
    denom = float(Pz @ (rk * z))
    return r * (Pz * dinv) / denom


def unit_sphere_max(ctx: HomogeneousNormContext, row: np.ndarray) -> float:
    """max |row . z| over the unit P-sphere, i.e. sqrt(row P^{-1} row')."""
    row = np.asarray(row, dtype=float).reshape(-1)
    sol = np.linalg.solve(ctx.P, row)
    return float(np.sqrt(max(row @ sol, 0.0)))
