import numpy as np
import pytest
from hypothesis import given
from scipy import stats
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from papr_green.errors import InputError, UndefinedPaprError
from papr_green.signal_core import (CcdfCurve, OfdmGrid, TimeSignal, analytic_papr_quantile_db,
                                    ccdf_analytic_equal_power, ccdf_estimate, constellation,
                                    map_bits, ofdm_modulate, papr_db, papr_db_batch,
                                    random_symbols, spectrum, synthesize)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
grids = st.integers(1, 40).flatmap(
    lambda n: st.tuples(arrays(np.float64, n, elements=finite), arrays(np.float64, n, elements=finite)))


def naive_waveform(x, oversampling):
    """Direct sum over subcarriers; frequencies follow FFT order (i < ceil(N/2) positive)."""
    n = x.size
    freqs = np.array([i if i < (n + 1) // 2 else i - n for i in range(n)])
    t = np.arange(oversampling * n)
    return np.exp(2j * np.pi * np.outer(t, freqs) / (oversampling * n)) @ x / np.sqrt(n)


@pytest.mark.parametrize("name,size", [("qpsk", 4), ("QAM16", 16)])
def test_constellation_unit_power(name, size):
    pts = constellation(name).points
    assert pts.size == size
    assert abs(np.mean(np.abs(pts) ** 2) - 1.0) < 1e-12


def test_unknown_constellation():
    with pytest.raises(InputError):
        constellation("8psk")


def test_map_bits_gray_corner_and_empty():
    qpsk = constellation("qpsk")
    assert map_bits([0, 0], qpsk)[0] == pytest.approx((1 + 1j) / np.sqrt(2))
    assert map_bits([], qpsk).size == 0
    with pytest.raises(InputError):
        map_bits([0, 1, 1], qpsk)


def test_map_bits_qam16_average_power(rng):
    sym = map_bits(rng.integers(0, 2, 4000), constellation("qam16"))
    assert sym.size == 1000
    assert abs(np.mean(np.abs(sym) ** 2) - 1.0) < 0.1


def test_map_bits_gray_neighbours_differ_by_one_bit():
    spec = constellation("qam16")
    words = [tuple(int(b) for b in np.binary_repr(i, 4)) for i in range(16)]
    pts = np.array([map_bits(list(w), spec)[0] for w in words])
    dmin = np.min([abs(a - b) for i, a in enumerate(pts) for b in pts[i + 1:]])
    for i in range(16):
        for j in range(i + 1, 16):
            if abs(abs(pts[i] - pts[j]) - dmin) < 1e-9:
                assert sum(a != b for a, b in zip(words[i], words[j])) == 1


def test_single_tone_is_constant_envelope():
    x = np.zeros(8, dtype=complex)
    x[3] = 1.0
    assert papr_db(ofdm_modulate(OfdmGrid(x), 4)) == pytest.approx(0.0, abs=1e-9)


def test_all_ones_grid_is_an_impulse():
    assert papr_db(ofdm_modulate(OfdmGrid(np.ones(128)), 1)) == pytest.approx(10 * np.log10(128))


def test_qpsk_papr_matches_naive_dft_oracle():
    # Oracle: direct oversampled sum, PAPR frozen from that evaluation.
    rng = np.random.default_rng(7)
    b = rng.integers(0, 2, (128, 2))
    x = ((1 - 2 * b[:, 0]) + 1j * (1 - 2 * b[:, 1])) / np.sqrt(2)
    sig = ofdm_modulate(OfdmGrid(x), 4)
    np.testing.assert_allclose(sig.samples, naive_waveform(x, 4), atol=1e-10)
    assert papr_db(sig) == pytest.approx(7.7372895201981775, abs=1e-9)


def test_papr_simple_values_and_zero():
    assert papr_db(np.array([0, 0, 1, 0])) == pytest.approx(10 * np.log10(4))
    assert papr_db(np.exp(1j * np.linspace(0, 5, 17))) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(UndefinedPaprError):
        papr_db(np.zeros(4))


def test_papr_batch_matches_reversed_scan(rng):
    w = synthesize(random_symbols(rng, (50, 64), constellation("qpsk")), 4)
    rev = w[:, ::-1]
    ref = 10 * np.log10(np.max(np.abs(rev) ** 2, axis=1) / np.mean(np.abs(rev) ** 2, axis=1))
    np.testing.assert_allclose(papr_db_batch(w), ref, rtol=0, atol=1e-12)


def test_ccdf_counting():
    c = ccdf_estimate([5, 5, 5], [4, 5, 6])
    np.testing.assert_array_equal(c.probabilities, [1.0, 0.0, 0.0])
    assert ccdf_estimate([1, 2, 3, 4], [2.5]).probabilities[0] == 0.5
    with pytest.raises(InputError):
        ccdf_estimate([], [1.0])


def test_level_at_interpolates():
    c = CcdfCurve(np.array([0.0, 1.0, 2.0]), np.array([1.0, 0.5, 0.0]))
    assert c.level_at(0.25) == pytest.approx(1.5)


def test_analytic_ccdf_values():
    assert ccdf_analytic_equal_power(128, 8.0) == pytest.approx(0.20786188281296591, rel=1e-9)
    np.testing.assert_allclose(ccdf_analytic_equal_power(128, [-60.0, 60.0]), [1.0, 0.0], atol=1e-12)
    q = analytic_papr_quantile_db(128, 1e-3)
    assert ccdf_analytic_equal_power(128, q) == pytest.approx(1e-3, rel=1e-6)


def test_estimator_converges_on_analytic_model_samples():
    # Inverse-transform draws from 1 - (1 - e^-g)^N, so the estimator alone is under test.
    rng = np.random.default_rng(3)
    trials, n = 20000, 128
    u = rng.random(trials)
    gamma_db = 10 * np.log10(-np.log(1 - u ** (1 / n)))
    grid = np.linspace(4, 14, 401)
    emp = ccdf_estimate(gamma_db, grid).probabilities
    ks = np.max(np.abs(emp - ccdf_analytic_equal_power(n, grid)))
    ref = stats.kstest(10 ** (gamma_db / 10), lambda g: (1 - np.exp(-g)) ** n).statistic
    assert ks <= ref + 1e-12  # a grid can only under-estimate the supremum
    assert ref < 3 / np.sqrt(trials)


def test_ofdm_tail_tracks_analytic_at_nyquist():
    rng = np.random.default_rng(4)
    papr = papr_db_batch(synthesize(random_symbols(rng, (20000, 128), constellation("qpsk")), 1))
    emp = float(np.quantile(papr, 1 - 1e-2))
    assert abs(emp - analytic_papr_quantile_db(128, 1e-2)) < 0.2


@given(grids, st.integers(1, 5))
def test_energy_consistency_and_roundtrip(parts, oversampling):
    x = parts[0] + 1j * parts[1]
    w = synthesize(x, oversampling)
    assert w.size == oversampling * x.size
    assert np.mean(np.abs(w) ** 2) == pytest.approx(np.sum(np.abs(x) ** 2) / x.size, rel=1e-9, abs=1e-12)
    np.testing.assert_allclose(spectrum(w, x.size), x, atol=1e-9)


@given(grids)
def test_oversampled_papr_not_below_nyquist(parts):
    x = parts[0] + 1j * parts[1]
    if not np.any(np.abs(x) > 1e-6):
        return
    assert papr_db(ofdm_modulate(OfdmGrid(x), 4)) >= papr_db(ofdm_modulate(OfdmGrid(x), 1)) - 1e-9
    assert papr_db(ofdm_modulate(OfdmGrid(x), 1)) >= 0.0


@given(arrays(np.float64, st.integers(1, 60), elements=st.floats(0, 20)))
def test_ccdf_non_increasing(samples):
    c = ccdf_estimate(samples, np.linspace(-1, 21, 50))
    assert np.all(np.diff(c.probabilities) <= 0)
    assert c.probabilities[0] == 1.0 and c.probabilities[-1] == 0.0


def test_timesignal_rejects_bad_oversampling():
    with pytest.raises(InputError):
        TimeSignal(np.ones(4), 0)
