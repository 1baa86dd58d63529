"""Parameter and result types shared by the analytic, Markov and simulation layers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import ClassVar, NamedTuple

import numpy as np

WEEK = 7 * 86400.0
DAY = 86400.0


class ParameterError(ValueError):
    """Raised when a parameter violates its domain invariant."""

    def __init__(self, field_name: str, message: str):
        super().__init__(message)
        self.field = field_name


class Strategy(str, Enum):
    HM = "hm"
    SM = "sm"
    ISM = "ism"
    ANM = "anm"

    @classmethod
    def parse(cls, value: "Strategy | str") -> "Strategy":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ParameterError("strategy", f"unknown strategy {value!r}") from None


def _is_real(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


@dataclass(frozen=True)
class MinerParams:
    """Attacker hashrate share ``q`` and tie connectivity ``gamma``."""

    q: float
    gamma: float = 0.0

    def __post_init__(self):
        if not _is_real(self.q) or not 0.0 < self.q < 0.5:
            raise ParameterError("q", "q must lie in (0, 0.5)")
        if not _is_real(self.gamma) or not 0.0 <= self.gamma <= 1.0:
            raise ParameterError("gamma", "gamma must lie in [0,1]")

    @property
    def p(self) -> float:
        return 1.0 - self.q


@dataclass(frozen=True)
class ProtocolParams:
    """Block time ``tau0`` (s), retarget period ``n0`` (blocks), block reward ``b``."""

    tau0: float = 600.0
    n0: int = 2016
    b: float = 1.0

    def __post_init__(self):
        if not _is_real(self.tau0) or self.tau0 <= 0:
            raise ParameterError("tau0", "tau0 must be > 0")
        if not isinstance(self.n0, int) or isinstance(self.n0, bool) or self.n0 < 1:
            raise ParameterError("n0", "n0 must be an integer >= 1")
        if not _is_real(self.b) or self.b <= 0:
            raise ParameterError("b", "b must be > 0")

    @property
    def period(self) -> float:
        """Target duration of one difficulty period, n0 * tau0 seconds."""
        return self.n0 * self.tau0


def validate(params: MinerParams, proto: ProtocolParams) -> tuple[MinerParams, ProtocolParams]:
    """Re-check both parameter sets and return them unchanged.

    The dataclasses validate on construction; this guards against objects
    mutated through ``object.__setattr__`` or duck-typed stand-ins.
    """
    MinerParams(params.q, params.gamma)
    ProtocolParams(proto.tau0, proto.n0, proto.b)
    return params, proto


@dataclass(frozen=True)
class CycleStats:
    """Expected revenue (reward units), duration (s) and official progress (blocks) of one attack cycle."""

    expected_revenue: float
    expected_duration: float
    expected_progress: float


@dataclass(frozen=True)
class PhasedCycle(CycleStats):
    """A two-phase cycle (ISM, ANM) with per-phase durations and revenue ratios."""

    phase_durations: tuple[float, float] = (0.0, 0.0)
    phase_ratios: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class ProfitLag:
    """Expected time after which the advantage over honest mining stays positive.

    ``seconds`` is wall-clock time since the start of the strategy and
    ``periods`` the official chain progress at that moment in difficulty
    periods. Both are infinite when the strategy is never profitable.
    """

    seconds: float
    periods: float

    @classmethod
    def never(cls) -> "ProfitLag":
        return cls(math.inf, math.inf)

    @property
    def reached(self) -> bool:
        return math.isfinite(self.seconds)

    @property
    def weeks(self) -> float:
        return self.seconds / WEEK


NEVER_PROFITABLE = ProfitLag.never()


class Breakpoint(NamedTuple):
    time: float
    chain_height: float
    delta: float


@dataclass(frozen=True)
class DeltaTrajectory:
    """Piecewise-linear advantage over honest mining, ``delta`` in reward units.

    Between consecutive breakpoints both ``time`` and ``chain_height`` are
    linear, so the curve is linear in either axis.
    """

    breakpoints: tuple[Breakpoint, ...]
    strategy: Strategy
    params: MinerParams
    proto: ProtocolParams

    def __post_init__(self):
        times = [bp.time for bp in self.breakpoints]
        if not times or times[0] != 0.0 or self.breakpoints[0].delta != 0.0:
            raise ValueError("trajectory must start at time 0 with delta 0")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("breakpoint times must be strictly increasing")

    @property
    def times(self) -> list[float]:
        return [bp.time for bp in self.breakpoints]

    @property
    def heights(self) -> list[float]:
        return [bp.chain_height for bp in self.breakpoints]

    @property
    def deltas(self) -> list[float]:
        return [bp.delta for bp in self.breakpoints]

    def periods(self) -> list[float]:
        """Chain progress of each breakpoint in difficulty periods."""
        return [bp.chain_height / self.proto.n0 for bp in self.breakpoints]

    def at_height(self, height: float) -> float:
        """Linear interpolation of delta at chain height ``height``."""
        bps = self.breakpoints
        if height <= bps[0].chain_height:
            return bps[0].delta
        for a, b in zip(bps, bps[1:]):
            if a.chain_height <= height <= b.chain_height:
                if b.chain_height == a.chain_height:
                    return b.delta
                w = (height - a.chain_height) / (b.chain_height - a.chain_height)
                return a.delta + w * (b.delta - a.delta)
        raise ValueError(f"height {height} beyond trajectory horizon")

    def last_crossing(self) -> ProfitLag:
        """Time after which delta stays strictly positive up to the horizon.

        If the final breakpoint is not positive the horizon is too short and
        the never-profitable marker is returned.
        """
        bps = self.breakpoints
        if bps[-1].delta <= 0:
            return NEVER_PROFITABLE
        i = max(k for k, bp in enumerate(bps) if bp.delta <= 0)
        a, b = bps[i], bps[i + 1]
        w = -a.delta / (b.delta - a.delta)
        t = a.time + w * (b.time - a.time)
        h = a.chain_height + w * (b.chain_height - a.chain_height)
        return ProfitLag(t, h / self.proto.n0)


@dataclass(frozen=True)
class Estimate:
    """A Monte Carlo estimate with its standard error."""

    value: float
    stderr: float

    def z(self, expected: float) -> float:
        if self.stderr == 0:
            return 0.0 if self.value == expected else math.copysign(math.inf, self.value - expected)
        return (self.value - expected) / self.stderr


@dataclass(frozen=True)
class LagSummary:
    """Empirical profit-lag statistics over sample paths.

    Per-path lags are the last time the path's advantage was negative;
    ``mean_path`` is the last zero crossing of the run-averaged trajectory.
    """

    mean_path: ProfitLag
    mean: float
    median: float
    quantiles: dict[str, float]
    fraction_reached: float


@dataclass(frozen=True)
class EventLog:
    """One row per mined main-chain block, in mining order within each run.

    ``height`` is the block's official height, or for an orphan the height
    it competed for; ``difficulty`` is the multiplier in force when mined.
    """

    run_id: np.ndarray
    time_s: np.ndarray
    producer: np.ndarray
    disposition: np.ndarray
    height: np.ndarray
    difficulty: np.ndarray

    COLUMNS: ClassVar[tuple[str, ...]] = ("run_id", "time_s", "producer", "disposition", "height", "difficulty")

    def __len__(self):
        return int(self.run_id.shape[0])


@dataclass(frozen=True)
class SimOutcome:
    strategy: Strategy
    params: MinerParams
    proto: ProtocolParams
    n_runs: int
    n_periods: int
    seed: int
    apparent_hashrate_hat: Estimate
    block_share_hat: Estimate
    revenue_ratio_hat: Estimate
    first_period_duration_hat: Estimate
    cycle_duration_hat: Estimate | None
    cycles_per_first_period_hat: Estimate | None
    official_per_cycle_hat: Estimate | None
    attacker_orphans_per_cycle_hat: Estimate | None
    final_difficulty_hat: Estimate
    delta_path: DeltaTrajectory | None
    delta_stderr: tuple[float, ...] | None
    profit_lag_hat: LagSummary | None
    extras: dict = field(default_factory=dict)
    events: EventLog | None = None
