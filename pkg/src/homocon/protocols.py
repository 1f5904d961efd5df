"""Consensus control laws for integrator-chain agents.

Three protocol kinds share one evaluation point, the transmitted vector
v_i (equal to the consensus error e_i at the distributed fixed point):

* linear:        u = -K v
* consensus:     u = -||v||_d^(1+mu) K d(-ln ||v||_d) v, K from the
                 design certificate
* non-overshoot: same scaling law with the pole-placement gain K_lin,
                 paired with a safety cone
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .homogeneity import (
    HomogeneousNormContext,
    canonical_norm_many,
    unit_sphere_max,
)


class DimensionMismatch(Exception):
    pass


@dataclass(frozen=True)
class IntegratorChain:
    """Canonical chain of n integrators: A the upper shift, B the last
    basis vector."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")

    @property
    def A(self) -> np.ndarray:
        return np.diag(np.ones(self.n - 1), k=1) if self.n > 1 else np.zeros((1, 1))

    @property
    def B(self) -> np.ndarray:
        b = np.zeros((self.n, 1))
        b[-1, 0] = 1.0
        return b


def linear_gain(n: int, lam: float) -> np.ndarray:
    """Pole-placement row gain: the first row of (A + lam*I)^n.

    The closed loop A - B*K has all eigenvalues at -lam.
    """
    if n < 1 or lam <= 0:
        raise ValueError("need n >= 1 and lam > 0")
    chain = IntegratorChain(n)
    M = np.linalg.matrix_power(chain.A + lam * np.eye(n), n)
    return M[0].copy()


class ProtocolKind(enum.Enum):
    LINEAR = "linear"
    HOMOGENEOUS_CONSENSUS = "homogeneous_consensus"
    HOMOGENEOUS_NONOVERSHOOT = "homogeneous_nonovershoot"


@dataclass(frozen=True, eq=False)
class ProtocolSpec:
    """Validated controller parameters.

    ``gain`` is the 1xn row applied inside the law; homogeneous kinds
    carry the norm context whose P certifies them. Use the factory
    functions below rather than constructing directly.
    """

    kind: ProtocolKind
    n: int
    gain: np.ndarray
    mu: float = 0.0
    lam: float | None = None
    norm_ctx: HomogeneousNormContext | None = None

    def __post_init__(self):
        gain = np.asarray(self.gain, dtype=float).reshape(-1)
        if gain.shape != (self.n,):
            raise DimensionMismatch(f"gain must have {self.n} entries")
        gain.setflags(write=False)
        object.__setattr__(self, "gain", gain)
        if self.kind is ProtocolKind.LINEAR:
            if self.mu != 0.0:
                raise ValueError("linear protocol has mu = 0")
            return
        if self.norm_ctx is None:
            raise ValueError("homogeneous protocols require a norm context")
        if self.norm_ctx.gen.n != self.n:
            raise DimensionMismatch("norm context dimension mismatch")
        if self.norm_ctx.gen.mu != self.mu:
            raise ValueError("norm context was built for a different mu")
        if self.kind is ProtocolKind.HOMOGENEOUS_NONOVERSHOOT:
            if not (-1.0 <= self.mu < 0.0):
                raise ValueError("non-overshooting protocol needs mu in [-1, 0)")
        else:
            hi_ok = self.n == 1 or self.mu < 1.0 / (self.n - 1)
            if not (self.mu >= -1.0 and hi_ok):
                raise ValueError("consensus protocol needs mu in [-1, 1/(n-1))")

    @property
    def is_homogeneous(self) -> bool:
        return self.kind is not ProtocolKind.LINEAR

    def sphere_gain_bound(self) -> float:
        """max |gain . z| over the unit P-sphere (control magnitude on the
        sphere; also the amplitude of the mu = -1 law near the origin)."""
        if self.norm_ctx is None:
            return float(np.linalg.norm(self.gain))
        return unit_sphere_max(self.norm_ctx, self.gain)


def linear_protocol(n: int, lam: float) -> ProtocolSpec:
    return ProtocolSpec(ProtocolKind.LINEAR, n, linear_gain(n, lam), 0.0, lam)


def consensus_protocol(gain: np.ndarray, norm_ctx: HomogeneousNormContext) -> ProtocolSpec:
    """Homogeneous consensus law from a designed gain and its certified
    norm context (typically K = Y X^{-1}, P = X^{-1})."""
    return ProtocolSpec(
        ProtocolKind.HOMOGENEOUS_CONSENSUS,
        norm_ctx.gen.n,
        gain,
        norm_ctx.gen.mu,
        None,
        norm_ctx,
    )


def nonovershoot_protocol(lam: float, norm_ctx: HomogeneousNormContext) -> ProtocolSpec:
    """Homogeneous non-overshooting law: pole-placement gain scaled by the
    dilation, certified by the norm context's P."""
    n = norm_ctx.gen.n
    return ProtocolSpec(
        ProtocolKind.HOMOGENEOUS_NONOVERSHOOT,
        n,
        linear_gain(n, lam),
        norm_ctx.gen.mu,
        lam,
        norm_ctx,
    )


def control_input_many(
    spec: ProtocolSpec,
    V: np.ndarray,
    warm_log: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Control inputs for a batch of transmitted vectors (rows of V).

    Returns (u, log_norms); log norms are -inf at the origin, where the
    law returns 0 for every kind.
    """
    V = np.atleast_2d(np.asarray(V, dtype=float))
    if V.shape[1] != spec.n:
        raise DimensionMismatch(f"vectors must have {spec.n} components")
    if spec.kind is ProtocolKind.LINEAR:
        return -(V @ spec.gain), np.full(V.shape[0], -np.inf)
    r, logr = canonical_norm_many(spec.norm_ctx, V, warm_log=warm_log)
    rk = spec.norm_ctx.gen.diag_entries
    with np.errstate(over="ignore", invalid="ignore"):
        Z = V * np.exp(-np.outer(logr, rk))
        u = -np.exp((1.0 + spec.mu) * logr) * (Z @ spec.gain)
    u = np.where(r > 0.0, u, 0.0)
    return u, logr


def control_input(spec: ProtocolSpec, v: np.ndarray) -> float:
    """Scalar control input for one transmitted vector.

    Linear: -K v. Homogeneous: -r^(1+mu) K d(-ln r) v with r = ||v||_d,
    and 0 at v = 0. For mu = -1 the r^(1+mu) factor is identically 1,
    leaving the bounded discontinuous law with no special casing.
    """
    u, _ = control_input_many(spec, np.asarray(v, dtype=float)[None, :])
    return float(u[0])


def error_field(
    system: IntegratorChain,
    specs,
    e: np.ndarray,
    q: np.ndarray | None = None,
) -> np.ndarray:
    """Block-decoupled closed-loop error field.

    ``e`` stacks N follower errors of dimension n; block i evolves as
    A e_i + B u_i(e_i) + q_i, with the transmitted vector resolved
    algebraically to e_i. ``specs`` is a single ProtocolSpec shared by
    all followers or a list of N of them.
    """
    n = system.n
    e = np.asarray(e, dtype=float).reshape(-1)
    if e.size % n != 0:
        raise DimensionMismatch(f"stacked error length {e.size} not a multiple of n={n}")
    N = e.size // n
    E = e.reshape(N, n)
    if q is None:
        Q = np.zeros((N, n))
    else:
        q = np.asarray(q, dtype=float).reshape(-1)
        if q.size != e.size:
            raise DimensionMismatch("disturbance must match the stacked error")
        Q = q.reshape(N, n)

    spec_list = list(specs) if isinstance(specs, (list, tuple)) else [specs] * N
    if len(spec_list) != N:
        raise DimensionMismatch(f"need {N} protocol specs, got {len(spec_list)}")

    out = E @ system.A.T + Q
    b = system.B.reshape(-1)
    if all(s is spec_list[0] for s in spec_list):
        u, _ = control_input_many(spec_list[0], E)
        out += np.outer(u, b)
    else:
        for i, s in enumerate(spec_list):
            out[i] += b * control_input(s, E[i])
    return out.reshape(-1)
