"""Discrete-event Monte Carlo simulation of mining strategies.

Blocks arrive as a Poisson stream whose rate follows the current difficulty;
each block belongs to the attacker with probability ``q``. The strategy
automata, retargeting and revenue accounting run inside
:mod:`profitlag._kernel`; this module prepares buffers, derives one
independent seed per run and turns per-run arrays into estimates.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernel as K
from . import analytic
from .domain import (
    Breakpoint,
    DeltaTrajectory,
    Estimate,
    EventLog,
    LagSummary,
    MinerParams,
    ParameterError,
    ProfitLag,
    ProtocolParams,
    SimOutcome,
    Strategy,
    validate,
)

_CODES = {Strategy.HM: K.HM, Strategy.SM: K.SM, Strategy.ISM: K.ISM, Strategy.ANM: K.ANM}
TIMESTAMP_MODES = ("publication", "mining")
ALT_CHAIN_MODES = ("continuous", "discrete")


class HorizonTooShort(RuntimeError):
    """Mean advantage is still negative at the end of the simulated horizon."""


class EventCapExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo run configuration.

    ``timestamps`` selects which time an SM burst uses for retargeting:
    its publication time or the mining time of the boundary block.
    ``alt_chain`` chooses continuous revenue accrual on the alternate
    network during ANM phase 1 or discrete Poisson blocks there.
    """

    params: MinerParams
    proto: ProtocolParams = field(default_factory=ProtocolParams)
    strategy: Strategy = Strategy.SM
    n_periods: int = 20
    n_runs: int = 1000
    seed: int = 0
    record_delta: bool = True
    samples_per_period: int = 16
    timestamps: str = "publication"
    alt_chain: str = "continuous"
    record_events: bool = False
    max_events: int = 10**9

    def __post_init__(self):
        validate(self.params, self.proto)
        object.__setattr__(self, "strategy", Strategy.parse(self.strategy))
        for name in ("n_periods", "n_runs", "samples_per_period"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ParameterError(name, f"{name} must be an integer >= 1")
        if not isinstance(self.seed, int) or self.seed < 0 or self.seed >= 2**64:
            raise ParameterError("seed", "seed must be an integer in [0, 2**64)")
        if self.timestamps not in TIMESTAMP_MODES:
            raise ParameterError("timestamps", f"timestamps must be one of {TIMESTAMP_MODES}")
        if self.alt_chain not in ALT_CHAIN_MODES:
            raise ParameterError("alt_chain", f"alt_chain must be one of {ALT_CHAIN_MODES}")
        if self.max_events < 1:
            raise ParameterError("max_events", "max_events must be >= 1")


def run_seed(seed: int, run_index: int) -> int:
    """32-bit seed of run ``run_index``, hashed from the master seed."""
    return int(np.random.SeedSequence([seed, run_index]).generate_state(1)[0])


# ---------------------------------------------------------------------------
# single selfish-mining cycles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CycleOutcome:
    revenue: float
    duration: float
    official: int
    attacker_orphans: int
    honest_orphans: int
    blocks: str

    @property
    def orphans(self) -> int:
        return self.attacker_orphans + self.honest_orphans


def _finish(out, a, h, b, duration, blocks):
    ra, ro, oa, oh = K.outcome_counts(out, a, h)
    return CycleOutcome(ra * b, duration, ro, oa, oh, blocks)


def sm_cycle_automaton(rng: np.random.Generator, params: MinerParams,
                       proto: ProtocolParams = analytic.DEFAULT_PROTO) -> CycleOutcome:
    """Draw one selfish-mining attack cycle at difficulty 1."""
    lead, tie, a, h = 0, False, 0, 0
    t = 0.0
    blocks = []
    while True:
        t += rng.exponential(proto.tau0)
        u = rng.random()
        blocks.append("S" if u < params.q else "H")
        lead, tie, a, h, out = K.sm_step(lead, tie, a, h, u, params.q, params.gamma)
        if out != K.CONTINUE:
            return _finish(out, a, h, proto.b, t, "".join(blocks))


def replay_sm_cycle(sequence: str, b: float = 1.0) -> CycleOutcome:
    """Feed a scripted block sequence to the selfish-mining automaton.

    ``S`` is an attacker block, ``H`` an honest block on the honest branch
    and ``G`` an honest block on the attacker's branch (same as ``H`` outside
    a tie). ``duration`` is the number of blocks consumed.
    """
    # with q = 0.5, gamma = 0.5 these draws land in the three branches of sm_step
    draws = {"S": 0.0, "G": 0.6, "H": 0.9}
    lead, tie, a, h = 0, False, 0, 0
    for i, c in enumerate(sequence):
        lead, tie, a, h, out = K.sm_step(lead, tie, a, h, draws[c], 0.5, 0.5)
        if out != K.CONTINUE:
            if i != len(sequence) - 1:
                raise ValueError(f"cycle ended after {i + 1} blocks of {sequence!r}")
            return _finish(out, a, h, b, float(i + 1), sequence)
    raise ValueError(f"sequence {sequence!r} does not end a cycle")


@dataclass(frozen=True)
class CycleSample:
    revenue: np.ndarray
    duration: np.ndarray
    official: np.ndarray
    attacker_orphans: np.ndarray
    honest_orphans: np.ndarray

    def mean(self, name: str) -> Estimate:
        return _mean_estimate(getattr(self, name))


def simulate_sm_cycles(params: MinerParams, proto: ProtocolParams = analytic.DEFAULT_PROTO,
                       n_cycles: int = 10_000, seed: int = 0) -> CycleSample:
    validate(params, proto)
    rev = np.empty(n_cycles)
    dur = np.empty(n_cycles)
    off = np.empty(n_cycles, np.int64)
    oa = np.empty(n_cycles, np.int64)
    oh = np.empty(n_cycles, np.int64)
    K.sample_sm_cycles(params.q, params.gamma, proto.tau0, run_seed(seed, 0), rev, dur, off, oa, oh)
    return CycleSample(rev * proto.b, dur, off, oa, oh)


# ---------------------------------------------------------------------------
# full runs
# ---------------------------------------------------------------------------

@dataclass
class RunArrays:
    """Per-run raw output of :func:`simulate_paths`, indexed [run, ...]."""

    config: SimConfig
    period_time: np.ndarray
    period_revenue: np.ndarray
    period_official: np.ndarray
    period_attacker: np.ndarray
    period_cycles: np.ndarray
    period_cycle_official: np.ndarray
    period_cycle_attacker: np.ndarray
    period_difficulty: np.ndarray
    sample_height: np.ndarray
    sample_time: np.ndarray
    sample_delta: np.ndarray
    total_time: np.ndarray
    final_delta: np.ndarray
    lag_time: np.ndarray
    lag_height: np.ndarray
    cycles: np.ndarray
    attacker_orphans: np.ndarray
    final_difficulty: np.ndarray
    events: EventLog | None = None


def simulate_paths(config: SimConfig) -> RunArrays:
    c = config
    n0, R, N = c.proto.n0, c.n_runs, c.n_periods
    spp = c.samples_per_period
    n_samples = N * spp + 1
    shape = (R, N)
    pt, prev, poff, patt = np.zeros(shape), np.zeros(shape), np.zeros(shape, np.int64), np.zeros(shape, np.int64)
    pcyc, pcoff, pcatt = np.zeros(shape, np.int64), np.zeros(shape, np.int64), np.zeros(shape, np.int64)
    pdiff = np.zeros(shape)
    st, sd = np.zeros((R, n_samples)), np.zeros((R, n_samples))
    scal = {k: np.zeros(R) for k in ("total_time", "final_delta", "lag_time", "lag_height",
                                     "cycles", "attacker_orphans", "final_difficulty")}
    log_cap = (3 * N * n0 + 64) if c.record_events else 0
    logs = []
    for r in range(R):
        seed = run_seed(c.seed, r)
        while True:
            lt, lp = np.empty(log_cap), np.empty(log_cap, np.int8)
            ld, lh, lf = np.empty(log_cap, np.int8), np.empty(log_cap, np.int64), np.empty(log_cap)
            row = [a[r] for a in (pt, prev, poff, patt, pcyc, pcoff, pcatt, pdiff)]
            for a in row:
                a[:] = 0
            res = K.run_path(_CODES[c.strategy], c.params.q, c.params.gamma, c.proto.tau0, n0,
                             c.proto.b, N, seed, n0 / spp, c.timestamps == "mining",
                             c.alt_chain == "discrete", c.max_events, *row, st[r], sd[r],
                             lt, lp, ld, lh, lf)
            status, n_events, t, delta, _rev, _height, lag_t, lag_h, cycles, att_orph, _ho, n_log, d = res
            if not c.record_events or n_log <= log_cap:
                break
            log_cap = n_log
        if status == K.STATUS_EVENT_CAP:
            raise EventCapExceeded(f"run {r} hit the cap of {c.max_events} events at t={t:.6g}s "
                                   f"after {int(pcyc[r].sum())} cycles; check parameters")
        if c.record_events:
            logs.append((np.full(n_log, r, np.int64), lt[:n_log].copy(), lp[:n_log].copy(),
                         ld[:n_log].copy(), lh[:n_log].copy(), lf[:n_log].copy()))
        reached = delta >= 0
        scal["total_time"][r] = t
        scal["final_delta"][r] = delta
        scal["lag_time"][r] = lag_t if reached else math.nan
        scal["lag_height"][r] = lag_h if reached else math.nan
        scal["cycles"][r] = cycles
        scal["attacker_orphans"][r] = att_orph
        scal["final_difficulty"][r] = d
    events = None
    if c.record_events:
        cols = [np.concatenate([x[i] for x in logs]) for i in range(6)]
        events = EventLog(*cols)
    return RunArrays(c, pt, prev, poff, patt, pcyc, pcoff, pcatt, pdiff,
                     np.arange(n_samples) * (n0 / spp), st, sd, events=events, **scal)


def _mean_estimate(x) -> Estimate:
    x = np.asarray(x, dtype=float)
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else math.nan
    return Estimate(float(x.mean()), se)


def _ratio_estimate(num, den) -> Estimate:
    """Ratio of sums with a delta-method standard error over i.i.d. runs."""
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    r = float(num.sum() / den.sum())
    if num.size < 2:
        return Estimate(r, math.nan)
    resid = num - r * den
    return Estimate(r, float(resid.std(ddof=1) / math.sqrt(num.size) / den.mean()))


def _sm_periods(strategy: Strategy, n_periods: int) -> np.ndarray:
    idx = np.arange(n_periods)
    if strategy is Strategy.SM:
        return idx
    if strategy is Strategy.ISM:
        return idx[idx % 2 == 0]
    return idx[:0]


def _ratio_window(strategy: Strategy, n_periods: int) -> np.ndarray:
    """Periods used for the long-run revenue ratio.

    SM drops its first (pre-adjustment) period, ISM and ANM keep only whole
    two-period cycles.
    """
    idx = np.arange(n_periods)
    if strategy is Strategy.SM:
        return idx[1:] if n_periods > 1 else idx
    if strategy in (Strategy.ISM, Strategy.ANM):
        return idx[: 2 * (n_periods // 2)] if n_periods > 1 else idx
    return idx


@dataclass(frozen=True)
class DeltaPaths:
    """Sampled advantage paths: one row per run, one column per chain height."""

    heights: np.ndarray
    times: np.ndarray
    deltas: np.ndarray
    lag_time: np.ndarray
    lag_height: np.ndarray
    strategy: Strategy
    params: MinerParams
    proto: ProtocolParams

    def mean_trajectory(self) -> tuple[DeltaTrajectory, np.ndarray]:
        t = self.times.mean(axis=0)
        dl = self.deltas.mean(axis=0)
        se = (self.deltas.std(axis=0, ddof=1) / math.sqrt(self.deltas.shape[0])
              if self.deltas.shape[0] > 1 else np.full(dl.shape, math.nan))
        bps, ses = [Breakpoint(0.0, 0.0, 0.0)], [0.0]
        for k in range(1, t.size):
            # single-run bursts can give several heights the same timestamp
            if t[k] <= bps[-1].time:
                if len(bps) > 1:
                    bps[-1] = Breakpoint(bps[-1].time, float(self.heights[k]), float(dl[k]))
                    ses[-1] = float(se[k])
                continue
            bps.append(Breakpoint(float(t[k]), float(self.heights[k]), float(dl[k])))
            ses.append(float(se[k]))
        return DeltaTrajectory(tuple(bps), self.strategy, self.params, self.proto), np.array(ses)


def delta_paths(arrays: RunArrays) -> DeltaPaths:
    c = arrays.config
    return DeltaPaths(arrays.sample_height, arrays.sample_time, arrays.sample_delta,
                      arrays.lag_time, arrays.lag_height, c.strategy, c.params, c.proto)


def estimate_profit_lag(paths: DeltaPaths) -> LagSummary:
    """Per-path last negative time and the mean path's last zero crossing.

    Raises :class:`HorizonTooShort` when the mean advantage at the horizon
    is negative.
    """
    traj, _ = paths.mean_trajectory()
    if traj.breakpoints[-1].delta < 0:
        raise HorizonTooShort(f"mean delta at horizon is {traj.breakpoints[-1].delta:.6g}; extend n_periods")
    mean_path = traj.last_crossing()
    if not mean_path.reached:
        mean_path = ProfitLag(0.0, 0.0)
    lags = paths.lag_time[np.isfinite(paths.lag_time)]
    if lags.size:
        qs = np.quantile(lags, [0.05, 0.25, 0.5, 0.75, 0.95])
        quant = {k: float(v) for k, v in zip(("q05", "q25", "q50", "q75", "q95"), qs)}
        mean, median = float(lags.mean()), float(np.median(lags))
    else:
        quant = {k: math.nan for k in ("q05", "q25", "q50", "q75", "q95")}
        mean = median = math.nan
    return LagSummary(mean_path, mean, median, quant, lags.size / paths.lag_time.size)


def run(config: SimConfig) -> SimOutcome:
    """Simulate ``config.n_runs`` independent paths and summarize them."""
    arr = simulate_paths(config)
    c = config
    s, N = c.strategy, c.n_periods
    official = arr.period_official.sum(axis=1)
    attacker = arr.period_attacker.sum(axis=1)
    block_share = _ratio_estimate(attacker, official)

    win = _ratio_window(s, N)
    ratio = _ratio_estimate(arr.period_revenue[:, win].sum(axis=1), arr.period_time[:, win].sum(axis=1))
    if s is Strategy.HM:
        apparent = block_share
    elif s is Strategy.SM:
        # counted when cycles resolve, so a burst cut off by the horizon does not bias it
        apparent = _ratio_estimate(arr.period_cycle_attacker.sum(axis=1), arr.period_cycle_official.sum(axis=1))
    else:
        f = c.proto.tau0 / c.proto.b
        apparent = Estimate(ratio.value * f, ratio.stderr * f)

    smp = _sm_periods(s, N)
    if smp.size:
        cycles_first = _mean_estimate(arr.period_cycles[:, 0])
        per_cycle = _ratio_estimate(arr.period_cycle_official[:, smp].sum(axis=1),
                                    arr.period_cycles[:, smp].sum(axis=1))
        orphans = _ratio_estimate(arr.attacker_orphans, arr.cycles)
    else:
        cycles_first = per_cycle = orphans = None
    cycle_dur = _mean_estimate(arr.period_time[:, :2].sum(axis=1)) if N >= 2 else None

    extras = {}
    if s is Strategy.SM:
        extras["pre_adjustment_ratio"] = _ratio_estimate(arr.period_revenue[:, 0], arr.period_time[:, 0])
    if s is Strategy.ANM:
        f = 1.0 / (c.params.q * c.proto.b / c.proto.tau0)
        extras["anm_factor"] = Estimate(ratio.value * f, ratio.stderr * f)
    if s in (Strategy.ISM, Strategy.ANM) and c.record_delta:
        spp = c.samples_per_period
        extras["delta_after_cycles"] = [
            _mean_estimate(arr.sample_delta[:, 2 * k * spp]) for k in range(1, N // 2 + 1)
        ]

    traj = ses = lag = None
    if c.record_delta:
        paths = delta_paths(arr)
        traj, ses = paths.mean_trajectory()
        if s is not Strategy.HM:
            try:
                lag = estimate_profit_lag(paths)
            except HorizonTooShort:
                lag = None
    return SimOutcome(
        strategy=s, params=c.params, proto=c.proto, n_runs=c.n_runs, n_periods=N, seed=c.seed,
        apparent_hashrate_hat=apparent, block_share_hat=block_share, revenue_ratio_hat=ratio,
        first_period_duration_hat=_mean_estimate(arr.period_time[:, 0]),
        cycle_duration_hat=cycle_dur, cycles_per_first_period_hat=cycles_first,
        official_per_cycle_hat=per_cycle, attacker_orphans_per_cycle_hat=orphans,
        final_difficulty_hat=_mean_estimate(arr.final_difficulty),
        delta_path=traj, delta_stderr=None if ses is None else tuple(float(x) for x in ses),
        profit_lag_hat=lag, extras=extras, events=arr.events,
    )


def write_event_csv(log: EventLog, fh) -> None:
    """Write the event log with columns run_id,time_s,producer,disposition,height,difficulty."""
    producers = ("attacker", "honest")
    dispositions = ("official", "orphaned")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(EventLog.COLUMNS)
    for r, t, p, dsp, h, d in zip(log.run_id, log.time_s, log.producer, log.disposition,
                                  log.height, log.difficulty):
        w.writerow((int(r), repr(float(t)), producers[p], dispositions[dsp], int(h), repr(float(d))))


# ---------------------------------------------------------------------------
# thresholds from simulation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimThreshold:
    lo: float
    hi: float
    evaluations: tuple[tuple[float, Estimate], ...]


def simulated_threshold(strategy: Strategy | str, gamma: float, lo: float, hi: float,
                        n_runs: int = 2000, seed: int = 0, tol: float = 0.005,
                        proto: ProtocolParams = analytic.DEFAULT_PROTO) -> SimThreshold:
    """Bracket the q where a strategy's simulated apparent hashrate equals q.

    The honest reference is exact (revenue ratio q*b/tau0), so only the
    deviant strategy is simulated. ISM uses one full two-period cycle per
    run, SM the block share over one period.
    """
    s = Strategy.parse(strategy)
    periods = 2 if s in (Strategy.ISM, Strategy.ANM) else 1
    evals = []

    def gap(q):
        cfg = SimConfig(MinerParams(q, gamma), proto, s, periods, n_runs, seed, record_delta=False)
        est = run(cfg).apparent_hashrate_hat
        evals.append((q, est))
        return est.value - q

    glo, ghi = gap(lo), gap(hi)
    if np.sign(glo) == np.sign(ghi):
        raise ValueError(f"simulated gap has the same sign at q={lo} and q={hi}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        gm = gap(mid)
        if np.sign(gm) == np.sign(glo):
            lo, glo = mid, gm
        else:
            hi = mid
    return SimThreshold(lo, hi, tuple(evals))
