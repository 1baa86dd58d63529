"""Serialization and plotting for the command-line front end.

JSON numbers are rounded to 9 significant digits and non-finite values
become ``null``; files are written atomically so a crashed command never
leaves a half-written output behind.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import fields, is_dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from . import analytic
from .domain import DAY, DeltaTrajectory, Estimate, MinerParams, ProfitLag, ProtocolParams, Strategy

SIG_DIGITS = 9
CURVE_COLUMNS = ("chain_progress_periods", "delta_coinbase_units")
SWEEP_COLUMNS = ("q", "gamma", "best_strategy", "ratio_hm", "ratio_sm", "ratio_ism", "ratio_anm")


def sig(x, digits: int = SIG_DIGITS):
    x = float(x)
    if not math.isfinite(x):
        return None
    return float(f"{x:.{digits}g}")


def jsonable(obj):
    """Convert dataclasses, enums and numpy values to JSON-ready structures."""
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return sig(obj)
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if is_dataclass(obj):
        return {f.name: jsonable(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, dict):
        return {str(jsonable(k)): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, allow_nan=False) + "\n"


def atomic_write(path: str | Path, data: str | bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        kw = {} if mode == "wb" else {"encoding": "utf-8", "newline": ""}
        with os.fdopen(fd, mode, **kw) as fh:
            fh.write(data)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def params_dict(params: MinerParams, proto: ProtocolParams) -> dict:
    return {"q": params.q, "gamma": params.gamma, "tau0": proto.tau0, "n0": proto.n0, "b": proto.b}


def lag_dict(lag: ProfitLag | None, proto: ProtocolParams) -> dict:
    if lag is None:
        return {"status": "baseline", "seconds": None, "weeks": None, "days": None, "periods": None}
    if not lag.reached:
        return {"status": "never profitable", "seconds": None, "weeks": None, "days": None, "periods": None}
    return {"status": "profitable", "seconds": lag.seconds, "weeks": lag.weeks, "days": lag.seconds / DAY,
            "periods": lag.periods, "time_periods": lag.seconds / proto.period}


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------

def analyze_report(strategy: Strategy, params: MinerParams, proto: ProtocolParams) -> dict:
    s = Strategy.parse(strategy)
    out = {"strategy": s.value, "parameters": params_dict(params, proto)}
    if s is Strategy.SM:
        st = analytic.sm_cycle_stats(params, proto)
        out["cycle"] = {"expected_duration_s": st.expected_duration, "expected_revenue": st.expected_revenue,
                        "expected_official_blocks": st.expected_progress}
        out["difficulty_drift"] = analytic.sm_difficulty_drift(params)
        out["first_period_duration_s"] = analytic.sm_first_period_duration(params, proto)
        out["pre_adjustment_ratio"] = analytic.sm_pre_adjustment_ratio(params, proto)
        out["lag_multiple"] = analytic.sm_lag_multiple(params)
    elif s in (Strategy.ISM, Strategy.ANM):
        st = analytic.ism_cycle_stats(params, proto) if s is Strategy.ISM else analytic.anm_cycle(params, proto)
        out["cycle"] = {"expected_duration_s": st.expected_duration, "expected_revenue": st.expected_revenue,
                        "expected_official_blocks": st.expected_progress,
                        "phase_durations_s": list(st.phase_durations),
                        "phase_revenue_ratios": list(st.phase_ratios)}
        out["difficulty_drift"] = (analytic.sm_difficulty_drift(params) if s is Strategy.ISM
                                   else 1.0 / params.p)
        if s is Strategy.ANM:
            out["anm_factor"] = analytic.anm_factor(params)
    out["apparent_hashrate"] = analytic.apparent_hashrate(s, params)
    out["revenue_ratio"] = analytic.revenue_ratio(s, params, proto)
    out["revenue_ratio_hm"] = analytic.revenue_ratio(Strategy.HM, params, proto)
    lag = analytic.profit_lag(s, params, proto)
    out["profit_lag"] = lag_dict(lag, proto)
    out["profit_lag_weeks"] = lag.weeks if lag is not None and lag.reached else None
    return out


# ---------------------------------------------------------------------------
# curves and sweeps
# ---------------------------------------------------------------------------

def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x) -> str:
    return repr(sig(x)) if math.isfinite(x) else ""


def curve_csv(traj: DeltaTrajectory) -> str:
    rows = [(_fmt(p), _fmt(d)) for p, d in zip(traj.periods(), traj.deltas)]
    return _csv_text(CURVE_COLUMNS, rows)


def sweep_csv(dmap: analytic.DominanceMap) -> str:
    rows = []
    for i, g in enumerate(dmap.gamma):
        for j, q in enumerate(dmap.q):
            rows.append((_fmt(q), _fmt(g), dmap.strategy_at(i, j).value,
                         *(_fmt(dmap.ratios[s][i, j]) for s in analytic.STRATEGY_ORDER)))
    return _csv_text(SWEEP_COLUMNS, rows)


def _figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "profitlag"
    matplotlib.rcParams["svg.fonttype"] = "none"
    return plt


def _svg(fig, plt) -> str:
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


def curve_svg(traj: DeltaTrajectory, title: str | None = None) -> str:
    plt = _figure()
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(traj.periods(), traj.deltas, lw=1.2, color="tab:blue")
    ax.axhline(0.0, color="black", lw=0.8)
    ax.set_xlabel("official chain progress (difficulty periods)")
    ax.set_ylabel("advantage over honest mining (coinbase units)")
    p = traj.params
    ax.set_title(title or f"{traj.strategy.value.upper()}  q={p.q:g}  gamma={p.gamma:g}")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return _svg(fig, plt)


def dominance_svg(dmap: analytic.DominanceMap) -> str:
    from matplotlib.colors import ListedColormap

    plt = _figure()
    fig, ax = plt.subplots(figsize=(7, 5))
    cmap = ListedColormap(["#d9d9d9", "#fdae61", "#abd9e9"])
    dq = float(dmap.q[1] - dmap.q[0]) / 2 if dmap.q.size > 1 else 0.0025
    dg = float(dmap.gamma[1] - dmap.gamma[0]) / 2 if dmap.gamma.size > 1 else 0.005
    extent = (dmap.q[0] - dq, dmap.q[-1] + dq, dmap.gamma[0] - dg, dmap.gamma[-1] + dg)
    ax.imshow(dmap.best_single_network, cmap=cmap, vmin=-0.5, vmax=2.5, origin="lower",
              extent=extent, aspect="auto", interpolation="nearest")
    styles = {(Strategy.SM, Strategy.HM): ("k-", "SM/HM"), (Strategy.ISM, Strategy.HM): ("k--", "ISM/HM"),
              (Strategy.SM, Strategy.ISM): ("k:", "SM/ISM")}
    for pair, line in dmap.boundaries.items():
        if line:
            qs, gs = zip(*line)
            ax.plot(qs, gs, styles[pair][0], lw=1.2, label=styles[pair][1])
    for k, name in enumerate(("HM", "SM", "ISM")):
        ax.plot([], [], "s", color=cmap(k), label=f"{name} best")
    ax.set_xlabel("q (attacker hashrate share)")
    ax.set_ylabel("gamma (connectivity)")
    ax.set_xlim(extent[0], extent[1])
    ax.set_ylim(extent[2], extent[3])
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    return _svg(fig, plt)


# ---------------------------------------------------------------------------
# simulation reports
# ---------------------------------------------------------------------------

def _cmp(est: Estimate | None, expected: float | None) -> dict | None:
    if est is None:
        return None
    out = {"value": est.value, "stderr": est.stderr}
    if expected is not None:
        out["analytic"] = expected
        z = est.z(expected)
        out["z"] = z if math.isfinite(z) else None
    return out


def analytic_predictions(strategy: Strategy, params: MinerParams, proto: ProtocolParams) -> dict:
    """Closed-form counterparts of the simulated statistics, where they exist."""
    s = Strategy.parse(strategy)
    q, p = params.q, params.p
    pred = {"apparent_hashrate": analytic.apparent_hashrate(s, params),
            "revenue_ratio": analytic.revenue_ratio(s, params, proto)}
    if s is Strategy.HM:
        pred.update(block_share=q, first_period_duration=proto.period, cycle_duration=2 * proto.period)
    elif s in (Strategy.SM, Strategy.ISM):
        st = analytic.sm_cycle_stats(params, proto)
        pred.update(first_period_duration=analytic.sm_first_period_duration(params, proto),
                    official_per_cycle=st.expected_progress,
                    cycles_per_first_period=proto.n0 / st.expected_progress,
                    attacker_orphans_per_cycle=(1 - params.gamma) * p * p * q)
        if s is Strategy.SM:
            pred.update(block_share=analytic.sm_apparent_hashrate(params),
                        pre_adjustment_ratio=analytic.sm_pre_adjustment_ratio(params, proto))
        else:
            pred["cycle_duration"] = analytic.ism_cycle_stats(params, proto).expected_duration
    else:
        cyc = analytic.anm_cycle(params, proto)
        pred.update(first_period_duration=cyc.phase_durations[0], cycle_duration=cyc.expected_duration,
                    anm_factor=analytic.anm_factor(params))
    return pred


def simulate_report(outcome, config) -> dict:
    s = outcome.strategy
    pred = analytic_predictions(s, outcome.params, outcome.proto)
    est = {
        "apparent_hashrate": outcome.apparent_hashrate_hat,
        "block_share": outcome.block_share_hat,
        "revenue_ratio": outcome.revenue_ratio_hat,
        "first_period_duration": outcome.first_period_duration_hat,
        "cycle_duration": outcome.cycle_duration_hat,
        "cycles_per_first_period": outcome.cycles_per_first_period_hat,
        "official_per_cycle": outcome.official_per_cycle_hat,
        "attacker_orphans_per_cycle": outcome.attacker_orphans_per_cycle_hat,
        "final_difficulty": outcome.final_difficulty_hat,
    }
    for k in ("pre_adjustment_ratio", "anm_factor"):
        if k in outcome.extras:
            est[k] = outcome.extras[k]
    stats = {k: _cmp(v, pred.get(k)) for k, v in est.items() if v is not None}
    if "delta_after_cycles" in outcome.extras:
        traj = analytic.delta_trajectory(s, outcome.params, outcome.proto, 2 * len(outcome.extras["delta_after_cycles"]))
        stats["delta_after_cycles"] = [
            _cmp(e, traj.at_height(2 * (k + 1) * outcome.proto.n0))
            for k, e in enumerate(outcome.extras["delta_after_cycles"])
        ]
    report = {
        "strategy": s.value,
        "parameters": params_dict(outcome.params, outcome.proto),
        "config": {"n_runs": config.n_runs, "n_periods": config.n_periods, "seed": config.seed,
                   "samples_per_period": config.samples_per_period, "timestamps": config.timestamps,
                   "alt_chain": config.alt_chain},
        "statistics": stats,
    }
    lag = outcome.profit_lag_hat
    analytic_lag = lag_dict(analytic.profit_lag(s, outcome.params, outcome.proto), outcome.proto)
    if s is Strategy.HM:
        report["profit_lag"] = {"analytic": analytic_lag, "empirical": {"status": "baseline"}}
    elif lag is None:
        status = "not recorded" if not config.record_delta else "horizon too short"
        report["profit_lag"] = {"analytic": analytic_lag, "empirical": {"status": status}}
    else:
        emp = lag_dict(lag.mean_path, outcome.proto)
        emp.update(per_path_mean_s=lag.mean, per_path_median_s=lag.median,
                   per_path_quantiles_s=lag.quantiles, fraction_reached=lag.fraction_reached)
        report["profit_lag"] = {"analytic": analytic_lag, "empirical_mean_path": emp}
    return report
