import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import crandn
from papr_green.channel_env import (ChannelTensor, Geometry, StackedOperator, build_stacked_operator,
                                    dump_channels_csv, generate_channels, place_nodes,
                                    rayleigh_channels, tap_profile)
from papr_green.errors import InputError, RankDeficientError

dims = st.tuples(st.integers(1, 6), st.integers(1, 4), st.integers(1, 8), st.integers(1, 4))


def test_place_nodes_contained_and_deterministic():
    g = place_nodes(40, 50, 2000.0, seed=5)
    pts = np.vstack([g.rrh_positions, g.ms_positions])
    assert pts.shape == (90, 2)
    assert np.all(np.hypot(pts[:, 0], pts[:, 1]) <= 2000.0)
    g2 = place_nodes(40, 50, 2000.0, seed=5)
    np.testing.assert_array_equal(g.rrh_positions, g2.rrh_positions)
    np.testing.assert_array_equal(g.ms_positions, g2.ms_positions)
    one = place_nodes(1, 1, 10.0, seed=0)
    assert np.hypot(*one.rrh_positions[0]) <= 10.0


def test_place_nodes_rejects_bad_input():
    with pytest.raises(InputError):
        place_nodes(1, 1, 0.0, seed=0)
    with pytest.raises(InputError):
        place_nodes(0, 1, 1.0, seed=0)


@given(st.integers(1, 10), st.integers(1, 10), st.integers(0, 2**32 - 1))
def test_rrh_placement_nests_across_counts(m, extra, seed):
    small = place_nodes(m, 3, 100.0, seed)
    big = place_nodes(m + extra, 3, 100.0, seed)
    np.testing.assert_array_equal(big.rrh_positions[:m], small.rrh_positions)
    np.testing.assert_array_equal(big.ms_positions, small.ms_positions)


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_antenna_draws_nest(m, extra, seed):
    a = rayleigh_channels(m, 3, 8, 4, seed=seed)
    b = rayleigh_channels(m + extra, 3, 8, 4, seed=seed)
    np.testing.assert_array_equal(b[:m], a)


def test_tap_profile():
    p = tap_profile(6)
    assert p.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(p[1:] / p[:-1], 10 ** -0.3)
    with pytest.raises(InputError):
        tap_profile(0)


def test_single_tap_is_flat():
    h = rayleigh_channels(3, 2, 16, n_taps=1, seed=1)
    np.testing.assert_allclose(np.abs(h), np.abs(h[..., :1]) * np.ones(16), rtol=1e-12)


def test_unit_distance_mean_power():
    geo = Geometry(10.0, np.zeros((100, 2)), np.tile([[1.0, 0.0]], (100, 1)))
    ch = generate_channels(geo, 16, n_taps=6, pathloss_exponent=0.0, seed=2)
    link_power = np.mean(np.abs(ch.gains) ** 2, axis=2)  # Parseval: sum of tap powers
    assert link_power.size == 10000
    assert abs(link_power.mean() - 1.0) < 0.05


def test_subcarrier_autocorrelation_follows_tap_profile():
    n, taps = 128, 6
    h = rayleigh_channels(100, 100, n, n_taps=taps, seed=3).reshape(-1, n)
    prof = tap_profile(taps)
    for d in (1, 5, 20):
        emp = np.mean(h[:, :-d] * np.conj(h[:, d:]))
        pred = np.sum(prof * np.exp(2j * np.pi * np.arange(taps) * d / n))
        assert abs(emp - pred) < 0.03


def test_distance_clamp_is_flagged():
    geo = Geometry(10.0, np.zeros((1, 2)), np.array([[0.0, 0.0], [3.0, 4.0]]))
    ch = generate_channels(geo, 8, n_taps=1, seed=4)
    assert ch.metadata["clamped_links"] == 1
    assert np.all(np.isfinite(ch.gains))


def test_generate_channels_deterministic():
    geo = place_nodes(3, 4, 500.0, seed=1)
    a = generate_channels(geo, 16, seed=9)
    b = generate_channels(geo, 16, seed=9)
    np.testing.assert_array_equal(a.gains, b.gains)


def test_channel_tensor_validation():
    with pytest.raises(InputError):
        ChannelTensor(np.ones((2, 2)))
    with pytest.raises(InputError):
        ChannelTensor(np.full((1, 1, 1), np.nan))


def test_scalar_operator_is_identity():
    op = StackedOperator(np.ones((1, 1, 1)))
    assert op.forward(np.array([[2.5 - 1j]]))[0, 0] == pytest.approx(2.5 - 1j)


def test_two_by_two_composition():
    # Hand composition: per-antenna impulses at t=0 and t=1, unitary 2-point DFT,
    # then H_0 = [1, 2], H_1 = [j, -1].
    h = np.array([[[1.0, 2.0]], [[1j, -1.0]]])
    op = StackedOperator(h)
    x = np.array([[1.0, 0.0], [0.0, 1.0]])
    np.testing.assert_allclose(op.forward(x), [[3 / np.sqrt(2), (1 + 1j) / np.sqrt(2)]], atol=1e-12)


def test_build_from_tensor_matches_manual_transpose(rng):
    ch = ChannelTensor(crandn(rng, 5, 2, 4))
    op = build_stacked_operator(ch)
    assert op.input_shape == (5, 4) and op.output_shape == (2, 4)
    x = crandn(rng, 5, 4)
    freq = np.fft.fft(x, axis=1, norm="ortho")
    manual = np.stack([ch.gains[:, :, w].T @ freq[:, w] for w in range(4)], axis=1)
    np.testing.assert_allclose(op.forward(x), manual, atol=1e-12)


@given(dims, st.integers(0, 2**32 - 1))
def test_adjoint_identity_and_linearity(d, seed):
    nt, extra, nc, ov = d
    mr = max(1, nt - extra)
    r = np.random.default_rng(seed)
    op = StackedOperator(crandn(r, nc, mr, nt), oversampling=ov)
    x, x2 = crandn(r, *op.input_shape), crandn(r, *op.input_shape)
    s, o = crandn(r, *op.output_shape), crandn(r, *op.out_of_band_shape)
    lhs = np.vdot(s, op.forward(x))
    assert abs(lhs - np.vdot(op.adjoint(s), x)) <= 1e-10 * max(1.0, abs(lhs))
    res, oob = op.residuals(x, np.zeros(op.output_shape))
    both = np.vdot(s, res) + np.vdot(o, oob)
    assert abs(both - np.vdot(op.residual_adjoint(s, o), x)) <= 1e-10 * max(1.0, abs(both))
    a, b = 0.7 - 0.2j, -1.3
    lin = op.forward(a * x + b * x2) - a * op.forward(x) - b * op.forward(x2)
    assert np.linalg.norm(lin) <= 1e-10 * max(1.0, np.linalg.norm(op.forward(x)))


def test_critically_sampled_operator_has_no_out_of_band(rng):
    op = StackedOperator(crandn(rng, 4, 2, 3), oversampling=1)
    assert op.out_of_band_shape == (3, 0)


def test_oversampled_inband_matches_critical(rng):
    h = crandn(rng, 8, 2, 3)
    crit, over = StackedOperator(h), StackedOperator(h, oversampling=4)
    x = crandn(rng, 3, 8)
    freq = np.fft.fft(x, axis=1, norm="ortho")
    padded = np.zeros((3, 32), dtype=complex)
    padded[:, over.inband] = freq
    np.testing.assert_allclose(over.forward(np.fft.ifft(padded, axis=1, norm="ortho")), crit.forward(x),
                               atol=1e-12)


def test_rank_deficiency_raises():
    h = np.ones((2, 2, 3))
    with pytest.raises(RankDeficientError):
        StackedOperator(h)


def test_channel_dump(tmp_path):
    ch = ChannelTensor(np.arange(8, dtype=complex).reshape(2, 2, 2) * (1 + 1j))
    path = tmp_path / "ch.csv"
    dump_channels_csv(ch, path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["m", "k", "n", "re", "im"]
    assert len(rows) == 9
    assert rows[-1] == ["1", "1", "1", "7.0", "7.0"]
