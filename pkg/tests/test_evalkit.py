import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fibbeam.beamcore import measure_rss
from fibbeam.evalkit import (
    OverheadConfig,
    TrialResult,
    effective_se,
    genie_baseline,
    misalignment_probability,
    overhead_factor,
    pair_spectral_efficiency,
    snr_from_rss,
    snr_of,
    top_n_accuracy,
    top_n_hits,
    top_n_se,
)

CFG = OverheadConfig()


def random_rss(rng, shape=(4, 5)):
    return rng.exponential(1e-9, size=shape)


# ---------------------------------------------------------------- misalignment


def test_misalignment_all_correct():
    rng = np.random.default_rng(0)
    trials = []
    for _ in range(10):
        r = random_rss(rng)
        trials.append(TrialResult(r, tuple(int(x) for x in np.unravel_index(np.argmax(r), r.shape)), 1))
    assert misalignment_probability(trials) == 0.0


def test_misalignment_three_of_ten():
    rng = np.random.default_rng(1)
    trials = []
    for t in range(10):
        r = random_rss(rng)
        best = tuple(int(x) for x in np.unravel_index(np.argmax(r), r.shape))
        worst = tuple(int(x) for x in np.unravel_index(np.argmin(r), r.shape))
        trials.append(TrialResult(r, worst if t < 3 else best, 1))
    assert misalignment_probability(trials) == pytest.approx(0.3)


def test_tied_optimum_counts_as_aligned():
    r = np.array([[1.0, 2.0], [2.0, 0.5]])
    assert not TrialResult(r, (0, 1), 1).misaligned
    assert not TrialResult(r, (1, 0), 1).misaligned
    assert TrialResult(r, (0, 0), 1).misaligned


def test_misalignment_errors():
    with pytest.raises(ValueError):
        misalignment_probability([])
    with pytest.raises(ValueError):
        TrialResult(np.ones((2, 2)), (2, 0), 1)


# ---------------------------------------------------------------- SNR


def test_snr_examples():
    H = np.array([[2.0 + 0j]])
    assert snr_of(H, [1.0], [1.0], power=1.0, noise_var=0.5) == pytest.approx(8.0)
    assert snr_from_rss(3.0, 1.5) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        snr_of(H, [1.0], [1.0], 1.0, 0.0)
    with pytest.raises(ValueError):
        snr_from_rss(1.0, 0.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 100.0))
def test_snr_linear_in_power_and_matches_rss(seed, scale):
    rng = np.random.default_rng(seed)
    H = rng.normal(size=(3, 4)) + 1j * rng.normal(size=(3, 4))
    u = rng.normal(size=4) + 1j * rng.normal(size=4)
    v = rng.normal(size=3) + 1j * rng.normal(size=3)
    s1 = snr_of(H, u, v, 1.0, 0.1)
    assert snr_of(H, u, v, scale, 0.1) == pytest.approx(scale * s1, rel=1e-12)
    assert s1 == pytest.approx(measure_rss(H, u, v, 1.0, 0.0) / 0.1, rel=1e-12)


# ---------------------------------------------------------------- effective SE


def test_effective_se_examples():
    assert overhead_factor(5, CFG) == pytest.approx(0.975)
    assert effective_se(1023.0, 5, CFG) == pytest.approx(9.75)
    assert effective_se(1023.0, 200, CFG) == pytest.approx(0.0, abs=1e-12)
    assert overhead_factor(1, CFG) == pytest.approx(0.995)
    assert CFG.max_list_size() == 200
    with pytest.raises(ValueError):
        effective_se(10.0, 0, CFG)
    with pytest.raises(ValueError):
        effective_se(10.0, 201, CFG)
    with pytest.raises(ValueError):
        OverheadConfig(frame_duration=0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1e6), st.integers(1, 199))
def test_effective_se_monotone_and_bounded(snr, n_b):
    assert effective_se(snr, n_b + 1, CFG) <= effective_se(snr, n_b, CFG)
    assert 0 <= effective_se(snr, n_b, CFG) <= math.log2(1 + snr)


def test_genie_dominates():
    rng = np.random.default_rng(2)
    for _ in range(200):
        r = random_rss(rng, (8, 20))
        pair, g = genie_baseline(r, 1e-11)
        assert r[pair] == r.max()
        for n_b in (1, 5, 20):
            sel = tuple(int(x) for x in rng.integers(0, [8, 20]))
            assert effective_se(snr_from_rss(r[sel], 1e-11), n_b, CFG) <= g


# ---------------------------------------------------------------- Top-n


def test_top_n_full_codebook_is_one():
    rng = np.random.default_rng(3)
    p = rng.dirichlet(np.ones(12), size=30).reshape(30, 3, 4)
    truth = [tuple(int(x) for x in rng.integers(0, [3, 4])) for _ in range(30)]
    assert top_n_accuracy(p, truth, 12) == 1.0
    with pytest.raises(ValueError):
        top_n_accuracy(p, truth, 0)


def test_top_n_oracle_predictor():
    rng = np.random.default_rng(4)
    truth = [tuple(int(x) for x in rng.integers(0, [3, 4])) for _ in range(30)]
    p = np.zeros((30, 3, 4))
    for b, (i, j) in enumerate(truth):
        p[b, i, j] = 1.0
    assert top_n_accuracy(p, truth, 1) == 1.0


def test_top_n_uniform_random_predictor():
    rng = np.random.default_rng(5)
    m, total = 20_000, 20
    p = rng.random((m, 4, 5))
    truth = [tuple(int(x) for x in rng.integers(0, [4, 5])) for _ in range(m)]
    for n in (1, 5, 10):
        assert abs(top_n_accuracy(p, truth, n) - n / total) < 4 * math.sqrt((n / total) * (1 - n / total) / m)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_top_n_monotone(seed):
    rng = np.random.default_rng(seed)
    p = rng.random((25, 3, 4))
    truth = [tuple(int(x) for x in rng.integers(0, [3, 4])) for _ in range(25)]
    accs = [top_n_accuracy(p, truth, n) for n in range(1, 13)]
    assert all(a <= b for a, b in zip(accs, accs[1:]))
    hits = [top_n_hits(p, truth, n) for n in (1, 5)]
    assert np.all(hits[0] <= hits[1])


def test_top_n_se_bounds():
    rng = np.random.default_rng(6)
    p = rng.random((40, 3, 4))
    se = rng.random((40, 3, 4)) * 10
    genie = float(np.mean(se.reshape(40, -1).max(axis=1)))
    vals = [top_n_se(p, se, n) for n in range(1, 13)]
    assert vals[-1] == pytest.approx(genie)
    assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))


def test_pair_se_single_path_spot():
    rng = np.random.default_rng(7)
    n_ap, n_ut, k = 4, 2, 3
    ap = np.fft.fft(np.eye(n_ap)) / 2
    ut = np.fft.fft(np.eye(n_ut)) / math.sqrt(2)
    H = rng.normal(size=(k, n_ut, n_ap)) + 1j * rng.normal(size=(k, n_ut, n_ap))
    se = pair_spectral_efficiency(H, ap, ut, snr=5.0)
    assert se.shape == (n_ap, n_ut)
    i, j = 2, 1
    direct = sum(math.log2(1 + 5.0 * abs(np.vdot(ut[j], H[kk] @ ap[i])) ** 2) for kk in range(k))
    assert se[i, j] == pytest.approx(direct, rel=1e-12)
    assert pair_spectral_efficiency(H[0], ap, ut, 5.0)[i, j] == pytest.approx(
        math.log2(1 + 5.0 * abs(np.vdot(ut[j], H[0] @ ap[i])) ** 2), rel=1e-12)
