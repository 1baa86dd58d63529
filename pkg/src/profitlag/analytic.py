"""Closed-form profitability of honest, selfish, intermittent selfish and
alternate-network mining.

Revenues are in reward units (multiples of ``b``), durations in seconds.
The private ``_*`` helpers accept floats or numpy arrays so that sweeps can
evaluate whole grids at once; the public functions take validated
parameter objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import (
    NEVER_PROFITABLE,
    Breakpoint,
    CycleStats,
    DeltaTrajectory,
    MinerParams,
    PhasedCycle,
    ProfitLag,
    ProtocolParams,
    Strategy,
    validate,
)

DEFAULT_PROTO = ProtocolParams()


# ---------------------------------------------------------------------------
# array-friendly formulas
# ---------------------------------------------------------------------------

def _cycle_time(q):
    """E[T]/tau0 for one selfish-mining cycle."""
    p = 1 - q
    return ((1 + p * q) * (p - q) + p * q) / (p - q)


def _cycle_progress(q):
    """E[L], official blocks added per selfish-mining cycle."""
    p = 1 - q
    return (p * p * q + p - q) / (p - q)


def _cycle_revenue(q, gamma):
    """E[R]/b for one selfish-mining cycle."""
    p = 1 - q
    return _cycle_time(q) * q - (1 - gamma) * p * p * q


def _drift(q):
    """Expected first difficulty adjustment factor under selfish mining."""
    p = 1 - q
    return (p - q + p * q * (p - q) + p * q) / (p * p * q + p - q)


def _q_prime(q, gamma):
    p = 1 - q
    num = ((1 + p * q) * (p - q) + p * q) * q - (1 - gamma) * p * p * q * (p - q)
    return num / (p * p * q + p - q)


def _q_second(q, gamma):
    d = _drift(q)
    return (q + _q_prime(q, gamma)) / (d + 1 / d)


def _q_second_poly(q, gamma):
    """Expanded rational form of the ISM apparent hashrate."""
    num = q * (1 - 4 * q**2 + 2 * q**3) * (
        1 + gamma + (3 - 4 * gamma) * q + (5 * gamma - 11) * q**2 + (5 - 2 * gamma) * q**3
    )
    den = 2 - 2 * q - 11 * q**2 + 10 * q**3 + 18 * q**4 - 20 * q**5 + 5 * q**6
    return num / den


def _anm_drift(q):
    return 1 / (1 - q)


def _anm_factor(q):
    d = _anm_drift(q)
    return (1 + d) / (d + 1 / d)


def _ratio(strategy: Strategy, q, gamma):
    """Long-run revenue ratio in units of b/tau0."""
    if strategy is Strategy.HM:
        return q * np.ones_like(gamma * 1.0) if isinstance(gamma, np.ndarray) else q
    if strategy is Strategy.SM:
        return _q_prime(q, gamma)
    if strategy is Strategy.ISM:
        return _q_second(q, gamma)
    if strategy is Strategy.ANM:
        r = q * _anm_factor(q)
        return r * np.ones_like(gamma * 1.0) if isinstance(gamma, np.ndarray) else r
    raise ValueError(strategy)


# ---------------------------------------------------------------------------
# selfish mining
# ---------------------------------------------------------------------------

def sm_cycle_stats(params: MinerParams, proto: ProtocolParams = DEFAULT_PROTO) -> CycleStats:
    validate(params, proto)
    q, g = params.q, params.gamma
    return CycleStats(
        expected_revenue=_cycle_revenue(q, g) * proto.b,
        expected_duration=_cycle_time(q) * proto.tau0,
        expected_progress=_cycle_progress(q),
    )


def sm_difficulty_drift(params: MinerParams) -> float:
    """E[delta]: mean duration of the first period relative to its target n0*tau0."""
    return _drift(params.q)


def sm_first_period_duration(params: MinerParams, proto: ProtocolParams = DEFAULT_PROTO) -> float:
    """E[S~_n0] in seconds: wall time to the first retarget under selfish mining."""
    return _drift(params.q) * proto.period


def sm_apparent_hashrate(params: MinerParams) -> float:
    """q': long-run share of official blocks owned by the selfish miner."""
    return _q_prime(params.q, params.gamma)


def sm_pre_adjustment_ratio(params: MinerParams, proto: ProtocolParams = DEFAULT_PROTO) -> float:
    """E[R]/E[T] before the first retarget (reward units per second)."""
    c = sm_cycle_stats(params, proto)
    return c.expected_revenue / c.expected_duration


def sm_lag_multiple(params: MinerParams) -> float:
    """t0 / (n0 tau0) = (q E[delta] - q') / (q' - q)."""
    q, qp = params.q, sm_apparent_hashrate(params)
    return (q * _drift(q) - qp) / (qp - q)


def sm_profit_lag(params: MinerParams, proto: ProtocolParams = DEFAULT_PROTO) -> ProfitLag:
    """Expected date after which selfish mining stays ahead of honest mining.

    Returns ``NEVER_PROFITABLE`` when q' <= q.
    """
    validate(params, proto)
    q, qp = params.q, sm_apparent_hashrate(params)
    if qp <= q:
        return NEVER_PROFITABLE
    k = sm_lag_multiple(params)
    # after the first retarget blocks arrive every tau0, so progress and time agree
    return ProfitLag((_drift(q) + k) * proto.period, 1.0 + k)


def sm_delta_trajectory(params: MinerParams, proto: ProtocolParams = DEFAULT_PROTO,
                        horizon_periods: int = 10) -> DeltaTrajectory:
    validate(params, proto)
    if horizon_periods < 1:
        raise ValueError("horizon_periods must be >= 1")
    q, qp, d = params.q, sm_apparent_hashrate(params), _drift(params.q)
    n0, b, P = proto.n0, proto.b, proto.period
    bps = [Breakpoint(0.0, 0.0, 0.0)]
    t1 = d * P
    # period 1 at rate q'/d against q, over d*n0*tau0 seconds
    delta = (qp / d - q) * d * n0 * b
    bps.append(Breakpoint(t1, float(n0), delta))
    for k in range(2, horizon_periods + 1):
        delta += (qp - q) * n0 * b
        bps.append(Breakpoint(t1 + (k - 1) * P, float(k * n0), delta))
    return DeltaTrajectory(tuple(bps), Strategy.SM, params, proto)


# ---------------------------------------------------------------------------
# intermittent selfish mining
# ---------------------------------------------------------------------------

def _ism_phases(params: MinerParams, proto: ProtocolParams):
    q, qp, d = params.q, sm_apparent_hashrate(params), _drift(params.q)
    durations = (d * proto.period, proto.period / d)
    ratios = (qp / d * proto.b / proto.tau0, q * d * proto.b / proto.tau0)
    return durations, ratios


def ism_cycle_stats(params: MinerParams, proto: ProtocolParams = DEFAULT_PROTO) -> PhasedCycle:
    """One selfish period followed by one honest period."""
    validate(params, proto)
    q, qp, d = params.q, sm_apparent_hashrate(params), _drift(params.q)
    durations, ratios = _ism_phases(params, proto)
    return PhasedCycle(
        expected_revenue=(qp + q) * proto.n0 * proto.b,
        expected_duration=(d + 1 / d) * proto.period,
        expected_progress=2.0 * proto.n0,
        phase_durations=durations,
        phase_ratios=ratios,
    )


def ism_apparent_hashrate(params: MinerParams) -> float:
    """q'' = (q + q') / (E[delta] + 1/E[delta])."""
    return _q_second(params.q, params.gamma)


def ism_apparent_hashrate_poly(params: MinerParams) -> float:
    return _q_second_poly(params.q, params.gamma)


def ism_delta_trajectory(params: MinerParams, proto: ProtocolParams = DEFAULT_PROTO,
                         horizon_periods: int = 20) -> DeltaTrajectory:
    """Sawtooth advantage: falls during each selfish period, rises during each honest one."""
    validate(params, proto)
    if horizon_periods < 2:
        raise ValueError("horizon_periods must be >= 2")
    (d_sm, d_hm), (r_sm, r_hm) = _ism_phases(params, proto)
    base = params.q * proto.b / proto.tau0
    t = delta = 0.0
    bps = [Breakpoint(0.0, 0.0, 0.0)]
    for k in range(1, horizon_periods + 1):
        dur, rate = (d_sm, r_sm) if k % 2 else (d_hm, r_hm)
        t += dur
        delta += (rate - base) * dur
        bps.append(Breakpoint(t, float(k * proto.n0), delta))
    return DeltaTrajectory(tuple(bps), Strategy.ISM, params, proto)


def ism_profit_lag(params: MinerParams, proto: ProtocolParams = DEFAULT_PROTO) -> ProfitLag:
    """Last zero crossing of the expected ISM trajectory.

    The dips at the end of selfish periods grow by the per-cycle gain, so the
    horizon is chosen two cycles past the last negative dip.
    """
    validate(params, proto)
    q, qp, qs, d = params.q, sm_apparent_hashrate(params), ism_apparent_hashrate(params), _drift(params.q)
    if qs <= q:
        return NEVER_PROFITABLE
    gain = (qs - q) * (d + 1 / d)
    dip = q * d - qp
    cycles = max(1, math.ceil(dip / gain)) + 2
    return ism_delta_trajectory(params, proto, 2 * cycles).last_crossing()


# ---------------------------------------------------------------------------
# alternate network mining
# ---------------------------------------------------------------------------

def anm_cycle(params: MinerParams, proto: ProtocolParams = DEFAULT_PROTO) -> PhasedCycle:
    """Phase 1 on the alternate chain, phase 2 back on the main chain.

    Only honest miners extend the main chain during phase 1, so the
    retarget factor is 1/p.
    """
    validate(params, proto)
    d = _anm_drift(params.q)
    rho = params.q * proto.b / proto.tau0
    durations = (d * proto.period, proto.period / d)
    ratios = (rho, rho * d)
    revenue = ratios[0] * durations[0] + ratios[1] * durations[1]
    return PhasedCycle(
        expected_revenue=revenue,
        expected_duration=durations[0] + durations[1],
        expected_progress=2.0 * proto.n0,
        phase_durations=durations,
        phase_ratios=ratios,
    )


def anm_factor(params: MinerParams) -> float:
    """(1 + delta)/(delta + 1/delta) with delta = 1/p."""
    return _anm_factor(params.q)


def anm_revenue_ratio(params: MinerParams, proto: ProtocolParams = DEFAULT_PROTO) -> float:
    validate(params, proto)
    return params.q * proto.b / proto.tau0 * _anm_factor(params.q)


def anm_delta_trajectory(params: MinerParams, proto: ProtocolParams = DEFAULT_PROTO,
                         horizon_cycles: int = 5) -> DeltaTrajectory:
    validate(params, proto)
    if horizon_cycles < 1:
        raise ValueError("horizon_cycles must be >= 1")
    c = anm_cycle(params, proto)
    base = params.q * proto.b / proto.tau0
    t = delta = 0.0
    bps = [Breakpoint(0.0, 0.0, 0.0)]
    for k in range(1, 2 * horizon_cycles + 1):
        i = (k - 1) % 2
        dur = c.phase_durations[i]
        t += dur
        # phase 1 earns the same ratio elsewhere, so delta is flat by assumption
        if i == 1:
            delta += (c.phase_ratios[1] - base) * dur
        bps.append(Breakpoint(t, float(k * proto.n0), delta))
    return DeltaTrajectory(tuple(bps), Strategy.ANM, params, proto)


def anm_profit_lag(params: MinerParams, proto: ProtocolParams = DEFAULT_PROTO) -> ProfitLag:
    """End of the first phase: delta is zero before it and positive after."""
    return anm_delta_trajectory(params, proto, 1).last_crossing()


# ---------------------------------------------------------------------------
# comparisons
# ---------------------------------------------------------------------------

def revenue_ratio(strategy: Strategy | str, params: MinerParams,
                  proto: ProtocolParams = DEFAULT_PROTO) -> float:
    """Long-run revenue per second after difficulty has settled."""
    validate(params, proto)
    s = Strategy.parse(strategy)
    return float(_ratio(s, params.q, params.gamma)) * proto.b / proto.tau0


def apparent_hashrate(strategy: Strategy | str, params: MinerParams) -> float:
    """Revenue ratio in units of b/tau0."""
    return float(_ratio(Strategy.parse(strategy), params.q, params.gamma))


def delta_trajectory(strategy: Strategy | str, params: MinerParams,
                     proto: ProtocolParams = DEFAULT_PROTO, horizon_periods: int = 20) -> DeltaTrajectory:
    s = Strategy.parse(strategy)
    if s is Strategy.SM:
        return sm_delta_trajectory(params, proto, horizon_periods)
    if s is Strategy.ISM:
        return ism_delta_trajectory(params, proto, max(2, horizon_periods))
    if s is Strategy.ANM:
        return anm_delta_trajectory(params, proto, max(1, (horizon_periods + 1) // 2))
    validate(params, proto)
    bps = [Breakpoint(0.0, 0.0, 0.0)] + [
        Breakpoint(k * proto.period, float(k * proto.n0), 0.0) for k in range(1, horizon_periods + 1)
    ]
    return DeltaTrajectory(tuple(bps), Strategy.HM, params, proto)


def profit_lag(strategy: Strategy | str, params: MinerParams,
               proto: ProtocolParams = DEFAULT_PROTO) -> ProfitLag | None:
    """Expected profit lag; ``None`` for honest mining, which is the reference itself."""
    s = Strategy.parse(strategy)
    if s is Strategy.SM:
        return sm_profit_lag(params, proto)
    if s is Strategy.ISM:
        return ism_profit_lag(params, proto)
    if s is Strategy.ANM:
        return anm_profit_lag(params, proto)
    return None


class NoSignChange(ValueError):
    """The revenue-ratio difference keeps one sign on the search interval."""

    def __init__(self, pair, gamma, dominant: Strategy):
        super().__init__(f"no sign change for {pair[0].value}/{pair[1].value} at gamma={gamma}; "
                         f"{dominant.value} dominates on the whole interval")
        self.pair = pair
        self.gamma = gamma
        self.dominant = dominant


@dataclass(frozen=True)
class ThresholdResult:
    q_star: float
    gamma: float
    pair: tuple[Strategy, Strategy]
    bracket_width: float


def bisect_root(f, lo: float, hi: float, tol: float, max_iter: int = 200):
    """Bisection on a sign change of ``f`` in [lo, hi]. Returns (lo, hi)."""
    flo = f(lo)
    if np.sign(flo) == np.sign(f(hi)):
        raise ValueError("no sign change on bracket")
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0:
            return mid, mid
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
    return lo, hi


def threshold(pair, gamma: float, tol: float = 1e-6, eps: float = 1e-6) -> ThresholdResult:
    """Hashrate q* in (eps, 0.5-eps) where two strategies have equal revenue ratio."""
    a, b = (Strategy.parse(s) for s in pair)
    MinerParams(0.25, gamma)

    def f(q):
        return float(_ratio(a, q, gamma) - _ratio(b, q, gamma))

    lo, hi = eps, 0.5 - eps
    flo, fhi = f(lo), f(hi)
    if np.sign(flo) == np.sign(fhi) or flo == 0 or fhi == 0:
        dominant = a if (fhi if fhi != 0 else flo) > 0 else b
        raise NoSignChange((a, b), gamma, dominant)
    lo, hi = bisect_root(f, lo, hi, tol)
    return ThresholdResult(0.5 * (lo + hi), gamma, (a, b), hi - lo)


STRATEGY_ORDER = (Strategy.HM, Strategy.SM, Strategy.ISM, Strategy.ANM)
BOUNDARY_PAIRS = ((Strategy.SM, Strategy.HM), (Strategy.ISM, Strategy.HM), (Strategy.SM, Strategy.ISM))


@dataclass(frozen=True)
class DominanceMap:
    """Revenue ratios on a (gamma, q) grid; arrays are indexed [gamma, q].

    ``best`` is the argmax over all four strategies, ``best_single_network``
    over HM, SM and ISM only. Ratios are in units of b/tau0.
    """

    q: np.ndarray
    gamma: np.ndarray
    ratios: dict
    best: np.ndarray
    best_single_network: np.ndarray
    boundaries: dict

    def strategy_at(self, i_gamma: int, i_q: int) -> Strategy:
        return STRATEGY_ORDER[int(self.best[i_gamma, i_q])]


def default_q_grid() -> np.ndarray:
    return np.round(np.arange(1, 100) * 0.005, 10)


def default_gamma_grid() -> np.ndarray:
    return np.round(np.arange(0, 101) * 0.01, 10)


def dominance_map(q_grid=None, gamma_grid=None, tol: float = 1e-6) -> DominanceMap:
    qs = default_q_grid() if q_grid is None else np.asarray(q_grid, dtype=float)
    gs = default_gamma_grid() if gamma_grid is None else np.asarray(gamma_grid, dtype=float)
    if qs.size == 0 or gs.size == 0:
        raise ValueError("empty grid")
    if np.any((qs <= 0) | (qs >= 0.5)) or np.any((gs < 0) | (gs > 1)):
        raise ValueError("grid outside (0, 0.5) x [0, 1]")
    G, Q = np.meshgrid(gs, qs, indexing="ij")
    ratios = {s: np.asarray(_ratio(s, Q, G), dtype=float) for s in STRATEGY_ORDER}
    stack = np.stack([ratios[s] for s in STRATEGY_ORDER])
    best = np.argmax(stack, axis=0)
    best3 = np.argmax(stack[:3], axis=0)
    boundaries = {}
    for pair in BOUNDARY_PAIRS:
        line = []
        for g in gs:
            try:
                line.append((threshold(pair, float(g), tol).q_star, float(g)))
            except NoSignChange:
                pass
        boundaries[pair] = line
    return DominanceMap(qs, gs, ratios, best, best3, boundaries)
