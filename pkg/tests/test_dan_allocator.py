from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import crandn
from oracles import GRID_REFERENCE, grid_scenario, random_dan_instance
from papr_green.channel_env import ChannelTensor, generate_channels, place_nodes, rayleigh_channels
from papr_green.dan_allocator import (DanScenario, DinkelbachParams, SdmaGrouping, SubcarrierAssignment,
                                      _slope, _waterfill, assign_subcarriers, dump_solution_csv,
                                      effective_gains, evaluate_allocation,
                                      evaluate_constant_eta_baseline, greedy_group, marginal_rates,
                                      optimize_allocation, waterfill_antenna, zf_weights)
from papr_green.errors import InputError
from papr_green.pa_energy import PaModel, calibrate_c2

NOISE = 10 ** (-20.4) * 15e3


@pytest.mark.parametrize("seed", [0, 4, 8, 11])
def test_two_rrh_two_subcarrier_matches_grid_search(seed):
    sol = optimize_allocation(grid_scenario(seed))
    assert sol.converged
    assert sol.report.efficiency_bits_per_joule >= GRID_REFERENCE[seed] * (1 - 1e-4)


def test_single_link_matches_scalar_optimum():
    # One RRH, one user, one subcarrier: the spread moment is p (P_T - p), so
    # EE(p) = df log2(1 + a p) / (p / (c1 + s p (1 - p)) + P_r) with a = 1e7 and
    # s = 0.3 * 12 / (128^2 - 1). Bounded scalar minimisation gives the frozen optimum.
    h = np.full((1, 1, 1), np.sqrt(1e7 * NOISE))
    sc = DanScenario(ChannelTensor(h), noise_w_per_sc=NOISE, static_power_w=0.1, site_power_w=0.1)
    sol = optimize_allocation(sc, DinkelbachParams(tol=1e-12))
    assert sol.power.p[0, 0] == pytest.approx(0.0011923187809869862, rel=1e-5)
    assert sol.report.efficiency_bits_per_joule == pytest.approx(907426.6377364608, rel=1e-9)


@settings(max_examples=25)
@given(st.integers(1, 12), st.integers(1, 3), st.floats(-3, 3), st.integers(0, 2**32 - 1))
def test_waterfill_kkt(n, g, shift, seed):
    r = np.random.default_rng(seed)
    price = r.random(n) * 10 ** shift
    amp = r.random((n, g)) * (r.random((n, g)) < 0.5)
    c = r.random((n, g)) * 30
    row, nu = _waterfill(price, amp, c, 1.0, 200)
    excess = marginal_rates(row, amp, c) - price  # must equal the budget multiplier where p > 0
    assert np.all(row >= 0) and row.sum() <= 1.0 + 1e-9
    assert nu >= 0
    on = row > 1e-10
    binding = row.sum() > 1.0 - 1e-6
    level = excess[on].min() if on.any() else nu
    if not binding:
        assert level == pytest.approx(0.0, abs=1e-6 * (1 + price.max()))
    np.testing.assert_allclose(excess[on], level, rtol=1e-5, atol=1e-8)
    assert level >= -1e-8
    assert np.all(excess[~on] <= level + 1e-6 * (1 + abs(level)))


def test_slope_at_zero():
    assert _slope(0.0, np.array([0.0]), np.array([2.0])) == pytest.approx(4.0 / np.log(2.0))
    assert _slope(0.0, np.array([1.0]), np.array([2.0])) == np.inf


def test_waterfill_antenna_keeps_budget(rng):
    gains = rng.random((2, 8, 1)) * 1e-10
    p = np.full((2, 8), 1 / 8)
    row, nu, price = waterfill_antenna(0, p, 1e3, gains, NOISE, PaModel(c2=calibrate_c2(n_subcarriers=8)))
    assert row.shape == (8,) and price.shape == (8,)
    assert np.all(row >= 0) and row.sum() <= 1 + 1e-9


def test_zf_weights_null_other_users(rng):
    ch = ChannelTensor(crandn(rng, 5, 3, 4))
    w = zf_weights(ch, [0, 2], 1)
    h = ch.gains[:, [0, 2], 1].T
    cross = h @ w
    np.testing.assert_allclose(np.linalg.norm(w, axis=0), 1.0)
    assert abs(cross[0, 1]) < 1e-12 and abs(cross[1, 0]) < 1e-12
    with pytest.raises(InputError):
        zf_weights(ChannelTensor(crandn(rng, 1, 2, 1)), [0, 1], 0)


def test_greedy_grouping_reference_trace():
    # Users 0 and 1 share a direction, user 2 is orthogonal and weakest, user 3
    # is orthogonal to everyone. Visit order by energy: 0, 1, 3, 2.
    g = np.zeros((3, 4, 1), dtype=complex)
    g[:, 0, 0] = [2.0, 0, 0]
    g[:, 1, 0] = [1.5, 0, 0]
    g[:, 2, 0] = [0, 0.5, 0]
    g[:, 3, 0] = [0, 0, 1.0]
    ch = ChannelTensor(g)
    assert greedy_group(ch, 3).groups == ((0, 1), (3,), (2,))
    # With two groups allowed user 2 joins its best (tied, first) group.
    assert greedy_group(ch, 2).groups == ((0, 1, 2), (3,))
    with pytest.raises(InputError):
        greedy_group(ch, 0)


def test_grouping_validation():
    with pytest.raises(InputError):
        SdmaGrouping(((0, 1), (1,)))
    with pytest.raises(InputError):
        SdmaGrouping(((0,), ()))
    with pytest.raises(InputError):
        SdmaGrouping(((0,), (2,))).check(2)
    with pytest.raises(InputError):
        SdmaGrouping(((0,), (1,))).check(2, n_rrh=1)
    with pytest.raises(InputError):
        SubcarrierAssignment(np.array([[1, 1], [1, 0]])).check(SdmaGrouping(((0, 1),)))


def brute_force_assignment(ch, grouping, rho):
    """Per subcarrier, the member combination maximising the ZF sum log rate, from explicit weights."""
    picks = []
    for n in range(ch.n_subcarriers):
        best, arg = -np.inf, None
        for combo in product(*grouping.groups):
            h = ch.gains[:, list(combo), n].T
            w = zf_weights(ch, combo, n)
            gain = np.abs(np.diag(h @ w)) ** 2
            score = np.sum(np.log2(1 + rho * gain))
            if score > best + 1e-12:
                best, arg = score, combo
        picks.append(arg)
    return picks


def test_assignment_matches_brute_force(rng):
    ch = ChannelTensor(crandn(rng, 4, 6, 5))
    grouping = SdmaGrouping(((0, 3, 4), (1, 5), (2,)))
    om = assign_subcarriers(ch, grouping, reference_snr=3.0).check(grouping).omega
    for n, combo in enumerate(brute_force_assignment(ch, grouping, 3.0)):
        assert sorted(np.nonzero(om[:, n])[0].tolist()) == sorted(combo)


def test_effective_gains_shape_and_zf_loss(rng):
    ch = ChannelTensor(crandn(rng, 3, 2, 4))
    grouping = SdmaGrouping(((0,), (1,)))
    om = assign_subcarriers(ch, grouping)
    gains, active = effective_gains(ch, grouping, om)
    assert gains.shape == (3, 4, 2) and active.shape == (4, 2)
    # Summed over RRHs, the per-stream gain is the ZF self gain split over two groups.
    w = zf_weights(ch, [0, 1], 2)
    h = ch.gains[:, [0, 1], 2].T
    np.testing.assert_allclose(gains[:, 2, :].sum(axis=0), np.abs(np.diag(h @ w)) ** 2 / 2, rtol=1e-10)


@pytest.mark.parametrize("seed", [1, 2])
def test_solution_feasible_and_monotone(seed):
    geo = place_nodes(5, 6, 500.0, seed=seed)
    ch = generate_channels(geo, 16, seed=seed)
    pa = PaModel(c2=calibrate_c2(n_subcarriers=16))
    sc = DanScenario(ch, pa=pa)
    sol = optimize_allocation(sc)
    p = sol.power.p
    assert np.all(p >= 0) and np.all(p.sum(axis=1) <= pa.p_t + 1e-9)
    assert np.all(np.diff(sol.ee_trace) >= -1e-9 * max(sol.ee_trace))
    equal = np.full_like(p, pa.p_t / 16)
    ref = evaluate_allocation(sc, sol.grouping, sol.assignment, equal)
    assert sol.report.efficiency_bits_per_joule >= ref.efficiency_bits_per_joule
    base = evaluate_constant_eta_baseline(sc)
    np.testing.assert_allclose(base.nominal_eta, 0.35)
    assert sol.report.efficiency_bits_per_joule >= base.report.efficiency_bits_per_joule * (1 - 1e-6)


@pytest.mark.parametrize("seed", range(6))
def test_dinkelbach_trace_monotone_on_random_instances(seed):
    sol = optimize_allocation(random_dan_instance(seed))
    tr = np.asarray(sol.ee_trace)
    assert np.all(np.diff(tr) >= -1e-9 * tr.max())


def test_warm_start_never_loses_efficiency():
    geo = place_nodes(6, 5, 800.0, seed=3)
    full = generate_channels(geo, 8, seed=4)
    pa = PaModel(c2=calibrate_c2(n_subcarriers=8))
    small = DanScenario(ChannelTensor(full.gains[:5]), pa=pa)
    big = DanScenario(full, pa=pa)
    s5 = optimize_allocation(small)
    s6 = optimize_allocation(big, warm_start=s5)
    assert s6.report.efficiency_bits_per_joule >= s5.report.efficiency_bits_per_joule * (1 - 1e-9)
    assert s6.active_rrh.shape == (6,)
    with pytest.raises(InputError):
        optimize_allocation(small, warm_start=s6)


def test_greedy_pruning_path(rng):
    sc = grid_scenario(3, m=6, k=4, n=8)
    sol = optimize_allocation(sc, DinkelbachParams(exhaustive_subsets_upto=0))
    full = optimize_allocation(sc, DinkelbachParams(active_set_search=False))
    assert sol.report.efficiency_bits_per_joule >= full.report.efficiency_bits_per_joule * (1 - 1e-9)


def test_zero_channel_gives_zero_rate():
    sc = DanScenario(ChannelTensor(np.zeros((2, 2, 4))))
    sol = optimize_allocation(sc)
    assert sol.report.sum_rate_bps == 0.0
    assert np.all(sol.power.p == 0)


def test_static_power_counts_active_rrhs():
    sc = DanScenario(ChannelTensor(np.ones((3, 1, 1))))
    assert sc.p_r() == 80.0 and sc.p_r(1) == 60.0


def test_rate_grows_with_antennas():
    h = rayleigh_channels(4, 2, 8, 2, seed=5) * 1e-4
    rates = []
    for m in (2, 4):
        sc = DanScenario(ChannelTensor(h[:m]), pa=PaModel(c2=calibrate_c2(n_subcarriers=8)))
        sol = optimize_allocation(sc, DinkelbachParams(active_set_search=False))
        rates.append(sol.report.sum_rate_bps)
    assert rates[1] > rates[0]


def test_dump_solution(tmp_path):
    sol = optimize_allocation(grid_scenario(0))
    path = tmp_path / "sol.csv"
    dump_solution_csv(sol, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "kind,index,n,value"
    assert any(line.startswith("p,") for line in lines)
