import numpy as np
import pytest

from profitlag import analytic as A
from profitlag import markov as M
from profitlag.domain import MinerParams

GRID = [round(0.05 * k, 2) for k in range(1, 10)]


def test_kernel_rows_and_structure():
    c = M.build_chain(MinerParams(0.2, 0.3))
    assert np.allclose(c.P.sum(axis=1), 1.0, atol=1e-12)
    i = c.index
    assert c.P[i(0), i(1)] == pytest.approx(0.2) and c.P[i(0), i(0)] == pytest.approx(0.8)
    assert c.P[i(1), i("0'")] == pytest.approx(0.8)
    assert c.P[i("0'"), i(0)] == 1.0
    assert c.P[i(2), i(0)] == pytest.approx(0.8)
    assert c.P[i(5), i(4)] == pytest.approx(0.8) and c.P[i(5), i(6)] == pytest.approx(0.2)
    assert c.P[i(c.n_max), i(c.n_max)] == pytest.approx(0.2)
    assert c.labels[:4] == ["0", "0'", "1", "2"]


def test_truncation_errors():
    with pytest.raises(M.TruncationError):
        M.build_chain(MinerParams(0.1), n_max=5)
    with pytest.raises(M.TruncationError):
        M.build_chain(MinerParams(0.45), n_max=40)
    assert M.required_n_max(0.01) == M.MIN_N_MAX


def test_pi0_example():
    r = M.stationary(M.build_chain(MinerParams(0.1, 0.9)))
    assert r.pi0 == pytest.approx(0.8 / 0.962, abs=1e-10)
    assert r.expected_return_time == pytest.approx(1.2025, abs=1e-10)
    assert r.drift == pytest.approx(A.sm_difficulty_drift(MinerParams(0.1, 0.9)), abs=1e-10)


def test_small_q_stays_home():
    r = M.stationary(M.build_chain(MinerParams(1e-6)))
    assert r.pi0 == pytest.approx(1.0, abs=1e-5)


@pytest.mark.parametrize("q", GRID)
@pytest.mark.parametrize("gamma", [0.0, 0.37, 1.0])
def test_equivalence(q, gamma):
    e = M.equivalence(MinerParams(q, gamma))
    assert e.max_error() < 1e-10
    r = M.stationary(M.build_chain(MinerParams(q, gamma)))
    assert r.pi.min() >= 0 and abs(r.pi.sum() - 1) < 1e-10
    assert abs(r.expected_return_time * r.pi0 - 1) < 1e-10
    assert r.tail_mass < 1e-12


@pytest.mark.parametrize("q", [0.1, 0.3, 0.45])
def test_truncation_stability(q):
    p = MinerParams(q, 0.5)
    c = M.build_chain(p)
    a = M.stationary(c)
    b = M.stationary(M.build_chain(p, 2 * c.n_max))
    for name in ("expected_return_time", "r_pool", "r_others", "pi0", "apparent_hashrate", "drift"):
        assert abs(getattr(a, name) - getattr(b, name)) < 1e-10
