"""Compiled event loops for the Monte Carlo simulator.

Every function here is numba-jitted and works on plain arrays; the Python
wrappers in :mod:`profitlag.sim` allocate buffers and aggregate results.
Randomness comes from numba's per-process Mersenne Twister, reseeded at the
start of each run so a run depends only on its own seed.
"""

import numpy as np
from numba import njit

HM, SM, ISM, ANM = 0, 1, 2, 3
ATTACKER, HONEST = 0, 1
OFFICIAL, ORPHANED = 0, 1

CONTINUE = 0
HONEST_FIRST = 1
TIE_ATTACKER = 2
TIE_HONEST_ON_ATTACKER = 3
TIE_HONEST = 4
ATTACKER_WINS = 5

STATUS_OK = 0
STATUS_EVENT_CAP = 1


@njit(cache=True)
def sm_step(lead, tie, a, h, u, q, gamma):
    """Advance the selfish-mining automaton by one mined block.

    ``u`` is a uniform draw: the block is the attacker's when ``u < q``; in a
    tie an honest block lands on the attacker's branch when
    ``q <= u < q + gamma * (1 - q)``. ``a`` and ``h`` count attacker and
    honest blocks mined since the cycle started.

    Returns the new ``(lead, tie, a, h, outcome)``; any outcome other than
    ``CONTINUE`` ends the cycle.
    """
    attacker = u < q
    if tie:
        if attacker:
            return 0, False, a + 1, h, TIE_ATTACKER
        if u < q + gamma * (1.0 - q):
            return 0, False, a, h + 1, TIE_HONEST_ON_ATTACKER
        return 0, False, a, h + 1, TIE_HONEST
    if lead == 0:
        if attacker:
            return 1, False, 1, 0, CONTINUE
        return 0, False, 0, 1, HONEST_FIRST
    if lead == 1:
        if attacker:
            return 2, False, a + 1, h, CONTINUE
        return 1, True, a, h + 1, CONTINUE
    if attacker:
        return lead + 1, False, a + 1, h, CONTINUE
    if lead == 2:
        return 0, False, a, h + 1, ATTACKER_WINS
    return lead - 1, False, a, h + 1, CONTINUE


@njit(cache=True)
def outcome_counts(outcome, a, h):
    """(attacker official, official, attacker orphans, honest orphans) of a finished cycle."""
    if outcome == HONEST_FIRST:
        return 0, 1, 0, 0
    if outcome == TIE_ATTACKER:
        return 2, 2, 0, 1
    if outcome == TIE_HONEST_ON_ATTACKER:
        return 1, 2, 0, 1
    if outcome == TIE_HONEST:
        return 0, 2, 1, 0
    return a, a, 0, h


@njit(cache=True)
def sample_sm_cycles(q, gamma, tau0, seed, revenue, duration, official, att_orphans, hon_orphans):
    """Fill the output arrays with i.i.d. selfish-mining cycles at difficulty 1."""
    np.random.seed(seed)
    for i in range(revenue.shape[0]):
        lead, tie, a, h = 0, False, 0, 0
        t = 0.0
        while True:
            t += np.random.exponential(tau0)
            lead, tie, a, h, out = sm_step(lead, tie, a, h, np.random.random(), q, gamma)
            if out != CONTINUE:
                break
        ra, ro, oa, oh = outcome_counts(out, a, h)
        revenue[i] = ra
        duration[i] = t
        official[i] = ro
        att_orphans[i] = oa
        hon_orphans[i] = oh


@njit(cache=True)
def _grow(arr):
    out = np.empty(2 * arr.shape[0], arr.dtype)
    out[: arr.shape[0]] = arr
    return out


@njit(cache=True)
def run_path(strategy, q, gamma, tau0, n0, b, n_periods, seed, sample_step,
             mining_stamps, bch_discrete, max_events,
             period_time, period_revenue, period_official, period_attacker,
             period_cycles, period_cycle_official, period_cycle_attacker, period_difficulty, sample_time, sample_delta,
             log_time, log_producer, log_disposition, log_height, log_difficulty):
    """Simulate one path until ``n_periods`` retargets have happened.

    Difficulty ``d`` scales expected block time to ``tau0 * d`` at full
    hashpower; after each ``n0`` official blocks it is multiplied by
    ``n0 * tau0 / elapsed``. ``delta`` is attacker revenue minus the honest
    baseline ``q * b * t / tau0``.
    """
    np.random.seed(seed)
    p = 1.0 - q
    base = q * b / tau0
    n_samples = sample_time.shape[0]
    log_cap = log_time.shape[0]

    t = 0.0
    d = 1.0
    height = 0
    period = 0
    period_start = 0.0
    delta = 0.0
    revenue = 0.0
    lag_time = 0.0
    lag_height = 0
    lag_pending = False
    n_events = 0
    n_log = 0
    cycles = 0
    att_orph = 0
    hon_orph = 0
    sample_time[0] = 0.0
    sample_delta[0] = 0.0
    next_sample = 1

    cap = 64
    c_prod = np.empty(cap, np.int8)
    c_time = np.empty(cap)
    c_diff = np.empty(cap)
    c_disp = np.empty(cap, np.int8)
    c_oheight = np.empty(cap, np.int64)
    nc = 0
    lead, tie, a, h = 0, False, 0, 0

    done = False
    while not done:
        if n_events >= max_events:
            return (STATUS_EVENT_CAP, n_events, t, delta, revenue, height, lag_time,
                    lag_height, cycles, att_orph, hon_orph, n_log, d)
        if strategy == SM:
            mode = SM
        elif strategy == ISM:
            mode = SM if period % 2 == 0 else HM
        elif strategy == ANM:
            mode = ANM if period % 2 == 0 else HM
        else:
            mode = HM

        if nc == cap:
            c_prod = _grow(c_prod)
            c_time = _grow(c_time)
            c_diff = _grow(c_diff)
            c_disp = _grow(c_disp)
            c_oheight = _grow(c_oheight)
            cap *= 2

        resolved = False
        n_events += 1
        if mode == ANM:
            # attacker is on the alternate chain; only honest miners extend this one
            rate_main = p / (tau0 * d)
            if bch_discrete:
                rate_alt = q / tau0
                dt = np.random.exponential(1.0 / (rate_main + rate_alt))
                t += dt
                delta -= base * dt
                if delta < 0.0:
                    lag_time = t
                    lag_pending = True
                if np.random.random() * (rate_main + rate_alt) < rate_alt:
                    revenue += b
                    delta += b
                    period_revenue[period] += b
                    if lag_pending:
                        lag_height = height
                        lag_pending = False
                    continue
            else:
                dt = np.random.exponential(1.0 / rate_main)
                t += dt
                # equal revenue ratios on both chains: accrual cancels the baseline
                revenue += base * dt
                period_revenue[period] += base * dt
                if delta < 0.0:
                    lag_time = t
                    lag_pending = True
            c_prod[0] = HONEST
            c_time[0] = t
            c_diff[0] = d
            c_disp[0] = OFFICIAL
            nc = 1
            resolved = True
        else:
            dt = np.random.exponential(tau0 * d)
            t += dt
            delta -= base * dt
            if delta < 0.0:
                lag_time = t
                lag_pending = True
            u = np.random.random()
            c_prod[nc] = ATTACKER if u < q else HONEST
            c_time[nc] = t
            c_diff[nc] = d
            nc += 1
            if mode == HM:
                c_disp[0] = OFFICIAL
                resolved = True
            else:
                lead, tie, a, h, out = sm_step(lead, tie, a, h, u, q, gamma)
                if out != CONTINUE:
                    resolved = True
                    cycles += 1
                    period_cycles[period] += 1
                    ra, ro, oa, oh = outcome_counts(out, a, h)
                    period_cycle_official[period] += ro
                    period_cycle_attacker[period] += ra
                    att_orph += oa
                    hon_orph += oh
                    if out == HONEST_FIRST:
                        c_disp[0] = OFFICIAL
                    elif out == TIE_HONEST:
                        c_disp[0] = ORPHANED
                        c_oheight[0] = height + 1
                        c_disp[1] = OFFICIAL
                        c_disp[2] = OFFICIAL
                    elif out == TIE_ATTACKER or out == TIE_HONEST_ON_ATTACKER:
                        c_disp[0] = OFFICIAL
                        c_disp[1] = ORPHANED
                        c_oheight[1] = height + 1
                        c_disp[2] = OFFICIAL
                    else:
                        k = 0
                        for i in range(nc):
                            if c_prod[i] == ATTACKER:
                                c_disp[i] = OFFICIAL
                            else:
                                k += 1
                                c_disp[i] = ORPHANED
                                c_oheight[i] = height + k
                    lead, tie, a, h = 0, False, 0, 0

        if not resolved:
            continue

        for i in range(nc):
            if c_disp[i] == ORPHANED:
                if n_log < log_cap:
                    log_time[n_log] = c_time[i]
                    log_producer[n_log] = c_prod[i]
                    log_disposition[n_log] = ORPHANED
                    log_height[n_log] = c_oheight[i]
                    log_difficulty[n_log] = c_diff[i]
                n_log += 1
                continue
            height += 1
            if n_log < log_cap:
                log_time[n_log] = c_time[i]
                log_producer[n_log] = c_prod[i]
                log_disposition[n_log] = OFFICIAL
                log_height[n_log] = height
                log_difficulty[n_log] = c_diff[i]
            n_log += 1
            period_official[period] += 1
            if c_prod[i] == ATTACKER:
                revenue += b
                delta += b
                period_attacker[period] += 1
                period_revenue[period] += b
            while next_sample < n_samples and next_sample * sample_step <= height + 1e-9:
                sample_time[next_sample] = t
                sample_delta[next_sample] = delta
                next_sample += 1
            if height % n0 == 0:
                stamp = c_time[i] if mining_stamps else t
                elapsed = stamp - period_start
                period_time[period] = elapsed
                period_difficulty[period] = d
                if elapsed > 0.0:
                    d = d * n0 * tau0 / elapsed
                period_start = stamp
                period += 1
                if period >= n_periods:
                    done = True
                    break
        nc = 0
        if lag_pending:
            lag_height = height
            lag_pending = False

    return (STATUS_OK, n_events, t, delta, revenue, height, lag_time,
            lag_height, cycles, att_orph, hon_orph, n_log, d)
