"""Energy-efficient resource allocation for a distributed antenna network.

Users are split into SDMA groups; on every subcarrier one member of each
group is served and the groups are separated by zero forcing across the
RRHs. Each RRH then receives a per-subcarrier power profile maximising

    eps_EE = R(p) / (sum_m P_m / eta_m(p_m) + P_r)

where ``eta_m`` is the allocation-dependent PA efficiency. The outer loop is
Dinkelbach's method on ``q_rate``; inside, rows are optimised one antenna at a
time. A row update linearises ``P_m / eta_m`` around the incoming row through
``q_pow = P_m / eta_m``, which turns it into a water-filling problem with one
price per subcarrier, and is accepted only if the true parametric objective
does not drop (backtracking along the segment otherwise).

Rate model: stream ``i`` on subcarrier ``n`` receives from RRH ``m`` the power
``p[m, n] / G`` scaled by ``zeta * |h|^2``, where ``zeta`` is the zero-forcing
projection loss, and contributions add coherently across RRHs.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from itertools import product

import numba
import numpy as np

from .channel_env import ChannelTensor
from .errors import ConvergenceError, InputError, RankDeficientError
from .pa_energy import (EnergyReport, PaModel, PowerAllocation, energy_efficiency,
                        pa_efficiency_gradient, pa_efficiency_statistical)

__all__ = [
    "SdmaGrouping", "SubcarrierAssignment", "DanScenario", "DinkelbachParams",
    "AllocationSolution", "greedy_group", "zf_weights", "assign_subcarriers",
    "effective_gains", "waterfill_antenna", "marginal_rates", "optimize_allocation",
    "evaluate_constant_eta_baseline", "evaluate_allocation", "dump_solution_csv",
    "ASSIGN_EXHAUSTIVE_LIMIT",
]

ASSIGN_EXHAUSTIVE_LIMIT = 4096


@dataclass(frozen=True)
class SdmaGrouping:
    groups: tuple  # tuple of sorted user-index tuples

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(tuple(sorted(int(u) for u in g)) for g in self.groups))
        users = [u for g in self.groups for u in g]
        if any(len(g) == 0 for g in self.groups):
            raise InputError("empty SDMA group")
        if len(set(users)) != len(users):
            raise InputError("SDMA groups overlap")

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    def check(self, n_users: int, n_rrh: int | None = None) -> "SdmaGrouping":
        if sorted(u for g in self.groups for u in g) != list(range(n_users)):
            raise InputError("groups do not partition the user set")
        if n_rrh is not None and self.n_groups > n_rrh:
            raise InputError("more groups than RRHs: zero forcing infeasible")
        return self


@dataclass(frozen=True)
class SubcarrierAssignment:
    omega: np.ndarray  # (K, N) in {0, 1}

    def check(self, grouping: SdmaGrouping) -> "SubcarrierAssignment":
        om = np.asarray(self.omega)
        if not np.all((om == 0) | (om == 1)):
            raise InputError("assignment must be binary")
        for g in grouping.groups:
            if not np.all(om[list(g)].sum(axis=0) == 1):
                raise InputError("each group must serve exactly one member per subcarrier")
        return self

    def active(self, grouping: SdmaGrouping) -> np.ndarray:
        """Served user of each group on each subcarrier, shape (N, G)."""
        om = np.asarray(self.omega)
        out = np.empty((om.shape[1], grouping.n_groups), dtype=np.int64)
        for i, g in enumerate(grouping.groups):
            members = np.array(g)
            out[:, i] = members[np.argmax(om[members], axis=0)]
        return out


@dataclass(frozen=True)
class DanScenario:
    channels: ChannelTensor  # (M RRHs, K users, N subcarriers), path loss included
    pa: PaModel = PaModel()
    noise_w_per_sc: float = 10 ** (-20.4) * 15e3  # -174 dBm/Hz over one subcarrier
    static_power_w: float = 10.0  # per RRH
    site_power_w: float = 50.0
    max_groups: int | None = None  # None: min(K, M, 4)
    corr_threshold: float = 0.4
    eta_constant: float = 0.35

    def p_r(self, n_active: int | None = None) -> float:
        """Static consumption with ``n_active`` RRHs switched on (all by default)."""
        n = self.channels.n_antennas if n_active is None else n_active
        return self.static_power_w * n + self.site_power_w

    @property
    def group_cap(self) -> int:
        m, k = self.channels.n_antennas, self.channels.n_users
        return self.max_groups if self.max_groups is not None else min(k, m, 4)


@dataclass(frozen=True)
class DinkelbachParams:
    tol: float = 1e-6
    max_outer: int = 50
    max_sweeps: int = 100
    row_tol: float = 1e-6
    bisect_iters: int = 200
    max_backtracks: int = 40
    active_set_search: bool = True
    exhaustive_subsets_upto: int = 4  # try every RRH subset up to this many RRHs


@dataclass
class AllocationSolution:
    grouping: SdmaGrouping
    assignment: SubcarrierAssignment
    power: PowerAllocation
    report: EnergyReport
    iterations: int
    converged: bool
    ee_trace: list = field(default_factory=list)
    papr_proxy_db: np.ndarray | None = None
    nominal_eta: np.ndarray | None = None  # efficiencies the optimiser assumed
    active_rrh: np.ndarray | None = None  # switched-on RRHs


def _user_vectors(channels: ChannelTensor) -> np.ndarray:
    return np.transpose(channels.gains, (1, 2, 0))  # (K, N, M)


def _correlation(channels: ChannelTensor) -> np.ndarray:
    """Mean over subcarriers of |<h_k, h_j>| / (|h_k| |h_j|)."""
    v = _user_vectors(channels)
    norm = np.linalg.norm(v, axis=2)
    norm = np.where(norm > 0, norm, 1.0)
    u = v / norm[..., None]
    return np.abs(np.einsum("knm,jnm->kjn", u.conj(), u)).mean(axis=2)


def greedy_group(channels: ChannelTensor, max_groups: int, corr_threshold: float = 0.4) -> SdmaGrouping:
    """Greedy grouping that keeps spatially correlated users together.

    Users are visited by decreasing channel energy. A user joins the group
    whose members it correlates with most on average if that mean reaches
    ``corr_threshold``; otherwise it opens a new group while fewer than
    ``max_groups`` exist, else it joins the best-correlated group anyway.
    """
    if max_groups < 1:
        raise InputError("max_groups must be >= 1")
    corr = _correlation(channels)
    energy = np.sum(np.abs(channels.gains) ** 2, axis=(0, 2))
    order = np.argsort(-energy, kind="stable")
    groups: list[list[int]] = []
    for k in order:
        if not groups:
            groups.append([int(k)])
            continue
        scores = [corr[k, g].mean() for g in groups]
        best = int(np.argmax(scores))
        if scores[best] >= corr_threshold or len(groups) >= max_groups:
            groups[best].append(int(k))
        else:
            groups.append([int(k)])
    return SdmaGrouping(tuple(tuple(g) for g in groups))


def zf_weights(channels: ChannelTensor, active_users, n: int) -> np.ndarray:
    """Unit-norm zero-forcing weights (M, G) for the users served on subcarrier ``n``.

    Column ``j`` is orthogonal to the channels of all other served users.
    """
    h = channels.gains[:, list(active_users), n].T  # (G, M)
    if h.shape[0] > h.shape[1]:
        raise InputError("more served users than RRHs")
    gram = h @ h.conj().T
    if np.linalg.matrix_rank(gram) < h.shape[0]:
        raise RankDeficientError(f"stacked channel on subcarrier {n} is singular")
    w = h.conj().T @ np.linalg.inv(gram)
    return w / np.linalg.norm(w, axis=0, keepdims=True)


def _zf_self_gain(h):
    """Self gain ``1 / [(H H^H)^-1]_ii`` of unit-norm ZF weights; batched over leading axes."""
    gram = h @ np.conj(np.swapaxes(h, -1, -2))
    g = h.shape[-2]
    with np.errstate(all="ignore"):
        ev = np.linalg.eigvalsh(gram)  # Hermitian PSD: condition number from eigenvalues
        ok = ev[..., 0] > 1e-12 * ev[..., -1]
        inv = np.linalg.inv(np.where(ok[..., None, None], gram, np.eye(g)))
    diag = np.real(np.diagonal(inv, axis1=-2, axis2=-1))
    out = np.where(ok[..., None], 1.0 / np.maximum(diag, 1e-300), np.nan)
    return out


def _combos(grouping: SdmaGrouping):
    return np.array(list(product(*grouping.groups)), dtype=np.int64)


def assign_subcarriers(channels: ChannelTensor, grouping: SdmaGrouping,
                       reference_snr: float | None = None,
                       noise_w_per_sc: float = 1.0, p_t: float = 1.0) -> SubcarrierAssignment:
    """Sum-capacity assignment: one member per group on every subcarrier.

    Every combination of one member per group is scored by
    ``sum_i log2(1 + rho * self_gain_i)`` after zero forcing, with ``rho`` the
    SNR of an equal power split; the best combination wins, ties to the
    lexicographically smallest member list. Above ``ASSIGN_EXHAUSTIVE_LIMIT``
    combinations a per-group coordinate ascent from the strongest members
    replaces the exhaustive search.
    """
    m, k, n_sc = channels.gains.shape
    grouping.check(k, m)
    g = grouping.n_groups
    rho = reference_snr if reference_snr is not None else p_t * m / (n_sc * g * noise_w_per_sc)
    combos = _combos(grouping) if np.prod([len(x) for x in grouping.groups]) <= ASSIGN_EXHAUSTIVE_LIMIT else None
    v = _user_vectors(channels)  # (K, N, M)
    omega = np.zeros((k, n_sc), dtype=np.int8)
    for n in range(n_sc):
        if combos is not None:
            gains = _zf_self_gain(v[combos, n, :])  # (C, G)
            score = np.sum(np.log2(1.0 + rho * gains), axis=1)
            if np.all(np.isnan(score)):
                raise RankDeficientError(f"no feasible user combination on subcarrier {n}")
            best = combos[int(np.nanargmax(score))]
        else:
            best = _coordinate_assign(v[:, n, :], grouping, rho)
        omega[best, n] = 1
    return SubcarrierAssignment(omega)


def _coordinate_assign(vn, grouping, rho):
    energy = np.sum(np.abs(vn) ** 2, axis=1)
    pick = [g[int(np.argmax(energy[list(g)]))] for g in grouping.groups]

    def score(sel):
        s = _zf_self_gain(vn[sel])
        return -np.inf if np.any(np.isnan(s)) else float(np.sum(np.log2(1.0 + rho * s)))

    current = score(pick)
    improved = True
    while improved:
        improved = False
        for i, g in enumerate(grouping.groups):
            for u in g:
                trial = list(pick)
                trial[i] = u
                val = score(trial)
                if val > current + 1e-12:
                    pick, current, improved = trial, val, True
    return np.array(pick)


def effective_gains(channels: ChannelTensor, grouping: SdmaGrouping,
                    assignment: SubcarrierAssignment) -> tuple[np.ndarray, np.ndarray]:
    """Per-RRH power gains of each served stream, shape (M, N, G), and the served users (N, G)."""
    active = assignment.active(grouping)
    v = _user_vectors(channels)
    n_sc = channels.n_subcarriers
    g = grouping.n_groups
    stacked = v[active, np.arange(n_sc)[:, None], :]  # (N, G, M)
    self_gain = _zf_self_gain(stacked)
    if np.any(np.isnan(self_gain)):
        raise RankDeficientError("singular zero-forcing system for the chosen assignment")
    energy = np.sum(np.abs(stacked) ** 2, axis=2)
    zeta = np.where(energy > 0, self_gain / np.where(energy > 0, energy, 1.0), 0.0)
    gains = np.abs(stacked) ** 2 * (zeta / g)[..., None]  # (N, G, M)
    return np.transpose(gains, (2, 0, 1)), active


@numba.njit(cache=True)
def _slope(t, amp, c):
    """d/dp of sum_i log2(1 + (amp_i + c_i sqrt(p))^2) at sqrt(p) = t (unit noise)."""
    total = 0.0
    for i in range(c.size):
        if c[i] == 0.0:
            continue
        a = amp[i] + c[i] * t
        if t > 0.0:
            total += c[i] * a / (t * (1.0 + a * a))
        elif amp[i] > 0.0:
            return np.inf
        else:
            total += c[i] * c[i]
    return total / np.log(2.0)


@numba.njit(cache=True)
def _solve_t(level, amp, c, t_max, iters):
    if _slope(t_max, amp, c) >= level:
        return t_max
    if _slope(0.0, amp, c) <= level:
        return 0.0
    lo, hi = 0.0, t_max
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if _slope(mid, amp, c) > level:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return 0.5 * (lo + hi)


@numba.njit(cache=True)
def _row_for_level(nu, price, amp, c, t_max, iters, out):
    total = 0.0
    for n in range(price.size):
        t = _solve_t(price[n] + nu, amp[n], c[n], t_max, iters)
        out[n] = t * t
        total += out[n]
    return total


@numba.njit(cache=True)
def _waterfill(price, amp, c, p_t, iters):
    """Maximise sum_n [rate_n(p_n) - price_n p_n] subject to sum p <= p_t, p >= 0.

    Returns the row and the budget multiplier ``nu``.
    """
    n = price.size
    out = np.empty(n)
    t_max = np.sqrt(p_t)
    lo = max(0.0, -price.min())
    floor_ok = lo == 0.0
    if floor_ok and _row_for_level(0.0, price, amp, c, t_max, iters, out) <= p_t:
        return out, 0.0
    step = max(1.0, abs(lo))
    hi = lo + step
    k = 0
    while _row_for_level(hi, price, amp, c, t_max, iters, out) > p_t and k < 2000:
        lo = hi
        step *= 2.0
        hi = lo + step
        k += 1
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if _row_for_level(mid, price, amp, c, t_max, iters, out) > p_t:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * hi:
            break
    _row_for_level(hi, price, amp, c, t_max, iters, out)
    return out, hi


def marginal_rates(row, amp, c) -> np.ndarray:
    """Derivative of each subcarrier's rate (bits/s/Hz, unit noise) w.r.t. its power."""
    t = np.sqrt(np.maximum(np.asarray(row, dtype=float), 0.0))
    return np.array([_slope(t[n], amp[n], c[n]) for n in range(t.size)])


class _Problem:
    """Normalised problem data: rates in bits/s/Hz and gains over noise."""

    def __init__(self, scenario: DanScenario, gains, constant_eta: float | None):
        self.s = scenario
        self.p_r = scenario.p_r(gains.shape[0])  # every row of ``gains`` is a switched-on RRH
        self.c = np.sqrt(gains / scenario.noise_w_per_sc)  # (M, N, G)
        self.pa = scenario.pa
        self.p_t = scenario.pa.p_t
        self.constant_eta = constant_eta

    def amp(self, p):
        return np.einsum("mng,mn->ng", self.c, np.sqrt(np.maximum(p, 0.0)))

    def rate(self, p) -> float:
        return float(np.sum(np.log2(1.0 + self.amp(p) ** 2)))

    def eta(self, p):
        if self.constant_eta is not None:
            return np.full(p.shape[0], self.constant_eta)
        return np.atleast_1d(pa_efficiency_statistical(self.pa, p))

    def consumption(self, p) -> float:
        return float(np.sum(p.sum(axis=1) / self.eta(p)) + self.p_r)

    def parametric(self, p, q) -> float:
        return self.rate(p) - q * self.consumption(p)

    def prices(self, m, row, q):
        if self.constant_eta is not None:
            return np.full(row.size, q / self.constant_eta)
        eta = float(pa_efficiency_statistical(self.pa, row))
        q_pow = row.sum() / eta
        grad = pa_efficiency_gradient(self.pa, row)
        if eta <= 1e-3 or eta >= 1.0:
            grad = np.zeros_like(grad)
        return (q / eta) * (1.0 - q_pow * grad)


def waterfill_antenna(m: int, current, q_rate: float, gains, noise_w_per_sc: float,
                      pa: PaModel, constant_eta: float | None = None, iters: int = 200):
    """Water-filling update of RRH ``m``'s row with the other rows fixed.

    Maximises ``sum_n rate_n(p_n) - sum_n price_n p_n`` where the prices come
    from ``q_rate`` and the efficiency (frozen at the incoming row through
    ``q_pow = P_m / eta_m`` and the gradient of ``eta_m``). Rates are in
    bits/s/Hz and ``q_rate`` must use the same unit. Returns ``(row, nu, prices)``.
    """
    p = np.asarray(getattr(current, "p", current), dtype=float)
    scen = DanScenario(ChannelTensor(np.zeros((1, 1, 1))), pa=pa, noise_w_per_sc=noise_w_per_sc,
                       static_power_w=0.0, site_power_w=0.0)
    prob = _Problem(scen, np.asarray(gains, dtype=float), constant_eta)
    return _row_update(prob, m, p, q_rate, iters)


def _row_update(prob: _Problem, m, p, q, iters):
    row = p[m]
    price = prob.prices(m, row, q)
    amp = prob.amp(p) - prob.c[m] * np.sqrt(np.maximum(row, 0.0))[:, None]
    amp = np.maximum(amp, 0.0)
    new, nu = _waterfill(np.ascontiguousarray(price), np.ascontiguousarray(amp),
                         np.ascontiguousarray(prob.c[m]), prob.p_t, iters)
    if not np.all(np.isfinite(new)):
        raise ConvergenceError("water-filling produced non-finite powers", antenna=m, nu=nu)
    return new, nu, price


def _inner(prob: _Problem, p, q, params: DinkelbachParams, rows=None):
    """Cyclic updates of ``rows`` (all by default) maximising ``R - q * consumption`` without ever decreasing it."""
    phi = prob.parametric(p, q)
    rows = range(p.shape[0]) if rows is None else rows
    for sweep in range(params.max_sweeps):
        change = 0.0
        for m in rows:
            new, _, _ = _row_update(prob, m, p, q, params.bisect_iters)
            old = p[m].copy()
            step = new - old
            accepted = False
            alpha = 1.0
            for _ in range(params.max_backtracks):
                p[m] = old + alpha * step
                val = prob.parametric(p, q)
                if val >= phi:
                    accepted = True
                    break
                alpha *= 0.5
            if accepted:
                phi = val
                change = max(change, alpha * float(np.max(np.abs(step))) / prob.p_t)
            else:
                p[m] = old
        if change < params.row_tol:
            return p, phi, sweep + 1
    return p, phi, params.max_sweeps


def _dinkelbach(prob: _Problem, p, params: DinkelbachParams, rows=None):
    """Dinkelbach iterations from ``p``; rows outside ``rows`` keep their starting powers."""
    q = prob.rate(p) / prob.consumption(p)
    trace = [q]
    converged = False
    it = 0
    for it in range(1, params.max_outer + 1):
        p, _, _ = _inner(prob, p, q, params, rows)
        rate, cons = prob.rate(p), prob.consumption(p)
        gap = rate - q * cons
        q = rate / cons
        trace.append(q)
        if gap <= params.tol * max(rate, 1e-300):
            converged = True
            break
    return p, trace, it, converged


class _Subsystem:
    """Grouping, assignment and zero-forcing gains over a subset of RRHs.

    Switched-off RRHs radiate nothing, so zero forcing spans the active ones only.
    """

    def __init__(self, scenario: DanScenario, mask):
        self.mask = np.asarray(mask, dtype=bool)
        ch = ChannelTensor(scenario.channels.gains[self.mask])
        m, k, _ = ch.gains.shape
        cap = min(scenario.group_cap, m)
        self.grouping = greedy_group(ch, cap, scenario.corr_threshold).check(k, m)
        self.assignment = assign_subcarriers(ch, self.grouping, noise_w_per_sc=scenario.noise_w_per_sc,
                                             p_t=scenario.pa.p_t)
        self.gains, _ = effective_gains(ch, self.grouping, self.assignment)


def _active_set_search(scenario, constant_eta, params, warm=None):
    """Choose which RRHs to switch on, optimising the powers of each candidate set.

    Efficiency grows with a PA's load, so spreading power over every RRH can
    be a poor local optimum. Small deployments try every non-empty subset and,
    within it, every non-empty set of transmitting rows (the others start
    silent and are released once those rows have converged). Larger ones
    prune greedily, re-optimising the most promising removal (ranked by the
    efficiency with that row zeroed under the current gains) until no
    removal helps.
    ``warm`` is an extra ``(mask, p)`` candidate started from ``p``; Dinkelbach
    never lowers the ratio of its starting point, so the result is at least as
    efficient as ``p``. Candidates whose zero-forcing system is singular are
    skipped. Returns ``(ratio, p, trace, iterations, converged, subsystem)``.
    """
    m, n_sc = scenario.channels.n_antennas, scenario.channels.n_subcarriers
    subs = {}

    def subsystem(mask):
        key = mask.tobytes()
        if key not in subs:
            try:
                subs[key] = _Subsystem(scenario, mask)
            except RankDeficientError:
                subs[key] = None
        return subs[key]

    def run(mask, start=None, support=None):
        sub = subsystem(mask)
        if sub is None:
            return None
        prob = _Problem(scenario, sub.gains, constant_eta)
        p0 = (np.full((int(mask.sum()), n_sc), scenario.pa.p_t / n_sc) if start is None
              else np.array(start[mask], dtype=float))
        if support is None or support[mask].all():
            p, trace, it, conv = _dinkelbach(prob, p0, params)
        else:
            live = support[mask]
            p0[~live] = 0.0
            p, trace, it, _ = _dinkelbach(prob, p0, params, np.nonzero(live)[0])
            p, polish, it2, conv = _dinkelbach(prob, p, params)
            trace, it = trace + polish[1:], it + it2
        full = np.zeros((m, n_sc))
        full[mask] = p
        return trace[-1], full, trace, it, conv, sub

    def better(cand, best):
        return cand is not None and (best is None or cand[0] > best[0] * (1 + 1e-12))

    best = None
    if not params.active_set_search:
        best = run(np.ones(m, dtype=bool))
    elif m <= params.exhaustive_subsets_upto:
        for bits in range(1, 2**m):
            mask = np.array([(bits >> i) & 1 for i in range(m)], dtype=bool)
            for sub_bits in range(1, 2**m):
                if sub_bits & ~bits:
                    continue
                support = np.array([(sub_bits >> i) & 1 for i in range(m)], dtype=bool)
                cand = run(mask, support=support)
                if better(cand, best):
                    best = cand
    else:
        best = run(np.ones(m, dtype=bool))
        while best is not None and best[5].mask.sum() > 1:
            mask, p = best[5].mask, best[1]
            # Rank removals cheaply with the current zero-forcing gains.
            prob = _Problem(scenario, best[5].gains, constant_eta)
            rows = p[mask]
            scores = []
            for i, r in enumerate(np.nonzero(mask)[0]):
                trial = rows.copy()
                trial[i] = 0.0
                if np.any(trial):
                    scores.append((prob.rate(trial) / (prob.consumption(trial) - scenario.static_power_w), r))
            if not scores:
                break
            _, r = max(scores)
            trial_mask = mask.copy()
            trial_mask[r] = False
            cand = run(trial_mask, p)
            if cand is None or cand[0] <= best[0] * (1 + params.tol):
                break
            best = cand
    if warm is not None:
        w_mask, w_p = warm
        cand = run(w_mask, w_p) if w_mask.any() else None
        if better(cand, best):
            best = cand
    if best is None:
        raise RankDeficientError("every candidate RRH set has a singular zero-forcing system")
    return best


def _pad_warm(scenario: DanScenario, warm: AllocationSolution | None):
    if warm is None:
        return None
    m, n_sc = scenario.channels.n_antennas, scenario.channels.n_subcarriers
    p = np.asarray(warm.power.p, dtype=float)
    mask = warm.active_rrh if warm.active_rrh is not None else p.sum(axis=1) > 0
    if p.shape[0] > m or p.shape[1] != n_sc:
        raise InputError("warm start does not fit the scenario")
    full_mask = np.zeros(m, dtype=bool)
    full_mask[: mask.size] = mask
    full_p = np.zeros((m, n_sc))
    full_p[: p.shape[0]] = p
    return full_mask, full_p


def _solve(scenario: DanScenario, constant_eta: float | None, params: DinkelbachParams,
           warm: AllocationSolution | None = None) -> AllocationSolution:
    ch = scenario.channels
    m, k, n_sc = ch.gains.shape
    if not np.any(ch.gains):
        grouping = greedy_group(ch, scenario.group_cap, scenario.corr_threshold).check(k, m)
        assignment = SubcarrierAssignment(_first_member_assignment(grouping, k, n_sc))
        p = np.zeros((m, n_sc))
        return _package(scenario, grouping, assignment, p, np.zeros(m, dtype=bool), 0, True, [0.0],
                        constant_eta)
    _, p, trace, it, converged, sub = _active_set_search(scenario, constant_eta, params,
                                                         _pad_warm(scenario, warm))
    return _package(scenario, sub.grouping, sub.assignment, p, sub.mask, it, converged, trace, constant_eta)


def _first_member_assignment(grouping, k, n_sc):
    om = np.zeros((k, n_sc), dtype=np.int8)
    for g in grouping.groups:
        om[g[0]] = 1
    return om


def evaluate_allocation(scenario: DanScenario, grouping, assignment, p, active=None) -> EnergyReport:
    """Energy report of an allocation under the statistical PA efficiency model.

    ``active`` marks the switched-on RRHs (default: rows with positive power);
    zero forcing and the static power only involve those.
    """
    pa = scenario.pa
    p = np.asarray(p, dtype=float)
    active = p.sum(axis=1) > 0 if active is None else np.asarray(active, dtype=bool)
    rate = 0.0
    if active.any() and np.any(scenario.channels.gains[active]):
        ch = ChannelTensor(scenario.channels.gains[active])
        gains, _ = effective_gains(ch, grouping, assignment)
        amp = np.einsum("mng,mn->ng", np.sqrt(gains), np.sqrt(np.maximum(p[active], 0.0)))
        rate = pa.delta_f_hz * float(np.sum(np.log2(1.0 + amp**2 / scenario.noise_w_per_sc)))
    eta = np.atleast_1d(pa_efficiency_statistical(pa, p))
    return energy_efficiency(rate, PowerAllocation(p), eta, scenario.p_r(int(active.sum())))


def _package(scenario, grouping, assignment, p, mask, iterations, converged, trace, constant_eta):
    pa = scenario.pa
    p = np.maximum(p, 0.0)
    alloc = PowerAllocation(p).check(pa.p_t)
    report = evaluate_allocation(scenario, grouping, assignment, p, mask)
    proxy = 20.0 * np.log10(pa.eta_max / report.per_antenna_eta)
    nominal = (np.full(p.shape[0], constant_eta) if constant_eta is not None
               else report.per_antenna_eta)
    ee_trace = [pa.delta_f_hz * q for q in trace]
    return AllocationSolution(grouping, assignment, alloc, report, iterations, converged,
                              ee_trace, proxy, nominal, np.asarray(mask, dtype=bool))


def optimize_allocation(scenario: DanScenario, params: DinkelbachParams = DinkelbachParams(),
                        warm_start: AllocationSolution | None = None) -> AllocationSolution:
    """PAPR-aware allocation: Dinkelbach over the rate/consumption ratio with allocation-dependent efficiencies.

    ``warm_start`` may come from a deployment whose RRHs are the first rows of
    this one (nested placements); its active set and powers are tried as an
    extra candidate, so adding RRHs never lowers the efficiency.
    """
    return _solve(scenario, None, params, warm_start)


def evaluate_constant_eta_baseline(scenario: DanScenario, params: DinkelbachParams = DinkelbachParams(),
                                   warm_start: AllocationSolution | None = None) -> AllocationSolution:
    """Same pipeline, but the optimiser treats every PA efficiency as ``eta_constant``.

    The returned report scores the resulting allocation under the statistical
    efficiency model; ``nominal_eta`` keeps the constant the optimiser assumed
    and ``ee_trace`` the efficiencies it believed it reached.
    """
    return _solve(scenario, scenario.eta_constant, params, warm_start)


def dump_solution_csv(solution: AllocationSolution, path) -> None:
    """Rows ``kind,m_or_k,n,value`` for omega, p, eta and the final efficiency."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "index", "n", "value"])
        for (k, n), v in np.ndenumerate(solution.assignment.omega):
            w.writerow(["omega", k, n, int(v)])
        for (m, n), v in np.ndenumerate(solution.power.p):
            w.writerow(["p", m, n, repr(float(v))])
        for m, v in enumerate(solution.report.per_antenna_eta):
            w.writerow(["eta", m, "", repr(float(v))])
        w.writerow(["ee", "", "", repr(solution.report.efficiency_bits_per_joule)])
