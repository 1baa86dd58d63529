"""Selfish mining as a discrete-time Markov chain on the attacker's lead.

One step is one mined block. States are ``0`` (no lead), ``0'`` (two
competing branches of length one), and ``n >= 1`` (private lead of ``n``
blocks). The lead is truncated at ``n_max`` with a reflecting self-loop;
the stationary tail decays like ``(q/p)**n`` so the truncation error is
bounded a priori and checked a posteriori.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import analytic
from .domain import MinerParams, validate, ProtocolParams

MIN_N_MAX = 10
DEFAULT_MASS_TOL = 1e-13


class TruncationError(ValueError):
    """The truncated chain cannot meet the requested tail-mass tolerance."""


@dataclass(frozen=True)
class ChainSpec:
    """Truncated transition kernel. Index 0 is state ``0``, 1 is ``0'``, and ``n + 1`` is lead ``n``."""

    params: MinerParams
    n_max: int
    P: np.ndarray
    mass_tol: float

    @property
    def labels(self) -> list[str]:
        return ["0", "0'"] + [str(n) for n in range(1, self.n_max + 1)]

    def index(self, state) -> int:
        if state == "0'":
            return 1
        n = int(state)
        if not 0 <= n <= self.n_max:
            raise KeyError(state)
        return 0 if n == 0 else n + 1


def required_n_max(q: float, mass_tol: float = DEFAULT_MASS_TOL) -> int:
    """Smallest truncation with geometric tail bound ``(q/p)**(n_max-2)`` below ``mass_tol``."""
    rho = q / (1.0 - q)
    n = 2 + math.ceil(math.log(mass_tol) / math.log(rho))
    return max(MIN_N_MAX, n)


def build_chain(params: MinerParams, n_max: int | None = None,
                mass_tol: float = DEFAULT_MASS_TOL) -> ChainSpec:
    validate(params, ProtocolParams())
    q, p = params.q, params.p
    need = required_n_max(q, mass_tol)
    if n_max is None:
        n_max = need
    if n_max < MIN_N_MAX:
        raise TruncationError(f"n_max must be >= {MIN_N_MAX}")
    if n_max < need:
        raise TruncationError(f"n_max={n_max} too small for tail mass {mass_tol:g} at q={q}; need >= {need}")
    m = n_max + 2
    P = np.zeros((m, m))
    P[0, 0], P[0, 2] = p, q
    P[1, 0] = 1.0
    P[2, 3], P[2, 1] = q, p
    # lead 2 meeting an honest block: publish everything, cycle ends
    P[3, 0] = p
    for n in range(2, n_max + 1):
        i = n + 1
        if n >= 3:
            P[i, i - 1] = p
        if n < n_max:
            P[i, i + 1] = q
        else:
            P[i, i] += q
    return ChainSpec(params, n_max, P, mass_tol)


@dataclass(frozen=True)
class StationaryResult:
    chain: ChainSpec
    pi: np.ndarray
    expected_return_time: float
    r_pool: float
    r_others: float

    @property
    def pi0(self) -> float:
        return float(self.pi[0])

    @property
    def apparent_hashrate(self) -> float:
        """Attacker share of official blocks."""
        return self.r_pool / (self.r_pool + self.r_others)

    @property
    def drift(self) -> float:
        """Mined blocks per official block."""
        return 1.0 / (self.r_pool + self.r_others)

    @property
    def tail_mass(self) -> float:
        return float(self.pi[-1])


def _stationary_vector(P: np.ndarray) -> np.ndarray:
    m = P.shape[0]
    A = P.T - np.eye(m)
    A[-1, :] = 1.0
    rhs = np.zeros(m)
    rhs[-1] = 1.0
    return linalg.solve(A, rhs)


def _return_time(P: np.ndarray, target: int = 0) -> float:
    """Mean return time to ``target`` from the hitting-time equations."""
    m = P.shape[0]
    others = np.array([i for i in range(m) if i != target])
    Q = P[np.ix_(others, others)]
    h = linalg.solve(np.eye(m - 1) - Q, np.ones(m - 1))
    return float(1.0 + P[target, others] @ h)


def stationary(chain: ChainSpec) -> StationaryResult:
    q, p, g = chain.params.q, chain.params.p, chain.params.gamma
    pi = _stationary_vector(chain.P)
    if np.any(pi < -1e-15):
        raise linalg.LinAlgError("stationary vector has negative entries")
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    if pi[-1] >= chain.mass_tol:
        raise TruncationError(f"stationary mass {pi[-1]:.3g} at n_max={chain.n_max} exceeds {chain.mass_tol:g}")
    pi0, pi0p, pi2 = pi[0], pi[1], pi[3]
    deep = pi[4:].sum()
    # official blocks credited per step, by who receives them
    r_pool = pi0p * (2 * q + g * p) + 2 * p * pi2 + p * deep
    r_others = p * pi0 + pi0p * (g * p + 2 * (1 - g) * p)
    return StationaryResult(chain, pi, _return_time(chain.P), float(r_pool), float(r_others))


def pi0_closed_form(q: float) -> float:
    return (1 - 2 * q) / (1 - 4 * q**2 + 2 * q**3)


@dataclass(frozen=True)
class Equivalence:
    """Absolute differences between Markov and closed-form statistics."""

    q: float
    gamma: float
    return_time: float
    pi0: float
    apparent_hashrate: float
    drift: float

    def max_error(self) -> float:
        return max(self.return_time, self.pi0, self.apparent_hashrate, self.drift)


def equivalence(params: MinerParams, n_max: int | None = None) -> Equivalence:
    res = stationary(build_chain(params, n_max))
    proto = analytic.DEFAULT_PROTO
    st = analytic.sm_cycle_stats(params, proto)
    return Equivalence(
        params.q, params.gamma,
        abs(res.expected_return_time - st.expected_duration / proto.tau0),
        abs(res.pi0 - pi0_closed_form(params.q)),
        abs(res.apparent_hashrate - analytic.sm_apparent_hashrate(params)),
        abs(res.drift - analytic.sm_difficulty_drift(params)),
    )
