"""Joint MU-MIMO-OFDM precoding and peak-power minimisation.

The gradient-flow ("RNN") solver integrates ``du/dt = -mu grad F(u)`` for the
Lagrangian

    F(x, y) = lam * (sum_i [|x_i|^2 - y]^+ + y) + ||s - H x||^2 + w ||P_oob x||^2

where ``x`` holds the per-antenna time-domain samples, ``y`` the common peak
power level and ``P_oob`` the out-of-band bins of an oversampled operator
(absent when the operator is critically sampled), weighted by ``w``. Least-squares precoding and
FITRA (accelerated proximal gradient on the infinity norm) are the baselines.

Gradients follow the Wirtinger convention ``grad_x = dF/d(conj x)``, so the
directional derivative along a complex direction ``d`` is ``2 Re <grad_x, d>``.
"""
from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .channel_env import StackedOperator, rayleigh_channels
from .errors import ConvergenceError, InputError, RankDeficientError
from .pa_energy import PaModel, pa_efficiency_instantaneous
from .signal_core import synthesize

__all__ = [
    "RnnState", "RnnParams", "FitraParams", "PrecodeResult",
    "ls_precode", "objective", "gradient", "rnn_solve", "fitra", "mui_residual",
    "antenna_papr_db", "EnergyModel", "precode_energy_efficiency", "dump_waveform_csv",
    "MimoScenario", "SweepRow", "energy_sweep",
]


@dataclass
class RnnState:
    x_tilde: np.ndarray  # (N_t, L*N_c)
    y: float

    def __post_init__(self):
        self.x_tilde = np.asarray(self.x_tilde, dtype=complex)
        if not self.y >= 0:
            raise InputError("y must be non-negative")
        if not np.all(np.isfinite(self.x_tilde)):
            raise InputError("x_tilde must be finite")


@dataclass(frozen=True)
class RnnParams:
    """Gradient-flow settings.

    ``lam=None`` sets ``lam = lam_scale * ||H||^2`` and ``mu=None`` sets
    ``mu = 1 / (||A||^2 + lam)`` where ``A`` stacks the channel and out-of-band
    maps, so the Euler step ``mu * step_dt`` is measured in units of the
    largest curvature the ``x`` block can see and stays stable for
    ``step_dt < 2``. ``y_rate`` scales the ``y`` dynamics
    relative to the initial peak power (a diagonal preconditioner).
    """

    lam: float | None = None
    mu: float | None = None
    step_dt: float = 1.8
    max_iters: int = 40000
    mui_tol: float = 0.25  # bound on ||s - H x||_F^2
    stall_tol: float = 1e-5
    stall_window: int = 1000
    lam_scale: float = 0.17
    y_rate: float = 0.01
    lam_growth: float = 1.0  # geometric continuation factor, 1 disables it
    lam_every: int = 500
    divergence_factor: float = 1e3
    oob_weight: float = 1.0

    def __post_init__(self):
        for name in ("step_dt", "mui_tol", "stall_tol", "lam_scale", "y_rate",
                     "lam_growth", "divergence_factor", "oob_weight"):
            if not getattr(self, name) > 0:
                raise InputError(f"{name} must be positive")
        for name in ("lam", "mu"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise InputError(f"{name} must be positive")
        if self.max_iters < 1 or self.stall_window < 1 or self.lam_every < 1:
            raise InputError("iteration counts must be >= 1")


@dataclass(frozen=True)
class FitraParams:
    beta: float = 0.25
    max_iters: int = 2000
    tol: float = 1e-7  # relative change of the iterate
    oob_weight: float = 1.0

    def __post_init__(self):
        if not (self.beta > 0 and self.tol > 0 and self.max_iters >= 1 and self.oob_weight > 0):
            raise InputError("beta, tol, max_iters and oob_weight must be positive")


@dataclass
class PrecodeResult:
    x_tilde: np.ndarray
    per_antenna_papr_db: np.ndarray
    mui_residual: float
    objective_trace: np.ndarray
    converged: bool
    iterations: int = 0
    y: float | None = None
    extra: dict = field(default_factory=dict)


def _flat(op: StackedOperator, x):
    return np.asarray(x, dtype=complex).reshape(op.input_shape)


def _oob_scale(op: StackedOperator, weight: float) -> float:
    """Square root of the out-of-band weight ``w``."""
    return float(np.sqrt(weight))


def _residuals(op: StackedOperator, x, s, sw):
    r, oob = op.residuals(x, s)
    return r, sw * oob


def _aug_norm(op: StackedOperator, sw: float) -> float:
    """Squared norm of ``x -> (H x, sqrt(w) P_oob x)``."""
    n = op.normal_norm()
    return max(n, sw * sw) if op.oversampling > 1 else n


def ls_precode(op: StackedOperator, s) -> np.ndarray:
    """Minimum-norm zero-interference precoder, one subcarrier at a time."""
    s = np.asarray(s, dtype=complex).reshape(op.output_shape)
    h = op.h
    gram = h @ np.conj(np.transpose(h, (0, 2, 1)))
    try:
        z = np.linalg.solve(gram, s.T[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError as exc:
        raise RankDeficientError("singular per-subcarrier Gram matrix") from exc
    xhat = np.einsum("wkm,wk->mw", h.conj(), z)
    freq = np.zeros(op.input_shape, dtype=complex)
    freq[:, op.inband] = xhat
    return np.fft.ifft(freq, axis=1, norm="ortho")


def mui_residual(op: StackedOperator, s, x_tilde) -> float:
    """Frobenius norm of the multi-user interference ``s - H x``."""
    return float(np.linalg.norm(np.asarray(s).reshape(op.output_shape) - op.forward(x_tilde)))


def _lam(op, params):
    return params.lam if params.lam is not None else params.lam_scale * op.normal_norm()


def _objective(x, y, r, oob, lam):  # ``oob`` already carries sqrt(w)
    excess = np.maximum(np.abs(x) ** 2 - y, 0.0).sum()
    return float(lam * (excess + y) + np.vdot(r, r).real + np.vdot(oob, oob).real)


def objective(state: RnnState, op: StackedOperator, s, params: RnnParams) -> float:
    x = _flat(op, state.x_tilde)
    r, oob = _residuals(op, x, s, _oob_scale(op, params.oob_weight))
    return _objective(x, state.y, r, oob, _lam(op, params))


def gradient(state: RnnState, op: StackedOperator, s, params: RnnParams):
    """``(grad_x, grad_y)`` with the indicator ``P(|x_i|^2 - y >= 0)`` on the bracket."""
    x = _flat(op, state.x_tilde)
    lam = _lam(op, params)
    sw = _oob_scale(op, params.oob_weight)
    r, oob = _residuals(op, x, s, sw)
    active = np.abs(x) ** 2 - state.y >= 0
    gx = lam * x * active + op.residual_adjoint(r, sw * oob)
    gy = lam * (1.0 - float(active.sum()))
    return gx, gy


def antenna_papr_db(op: StackedOperator, x_tilde, oversampling: int = 4) -> np.ndarray:
    """Per-antenna PAPR of the transmitted (in-band) waveform; NaN for silent antennas."""
    power = np.abs(synthesize(op.bins(x_tilde), oversampling)) ** 2
    mean = power.mean(axis=1)
    out = np.full(mean.shape, np.nan)
    live = mean > 0
    out[live] = 10.0 * np.log10(np.maximum(power[live].max(axis=1) / mean[live], 1.0))
    return out


def rnn_solve(op: StackedOperator, s, params: RnnParams = RnnParams(), init=None,
              papr_oversampling: int = 4) -> PrecodeResult:
    """Explicit-Euler integration of the gradient flow from ``init`` (LS by default).

    The ``x`` block is updated first; ``y`` then moves with the activation
    count measured at the updated ``x`` and is projected onto ``y >= 0``.
    The hard activation makes single Euler steps non-monotone in ``F``, so
    the step is halved only when ``F`` exceeds twice the largest of the last
    ``stall_window`` values. The final state is returned and
    ``objective_trace`` holds ``F`` at every step. Iteration stops at
    ``max_iters`` or when the mean of ``F`` over the last ``stall_window``
    steps differs from the mean over the window before by less than
    ``stall_tol`` (relative).
    """
    s = np.asarray(s, dtype=complex).reshape(op.output_shape)
    x = ls_precode(op, s) if init is None else _flat(op, init).copy()
    lam = _lam(op, params)
    sw = _oob_scale(op, params.oob_weight)
    mu = params.mu if params.mu is not None else 1.0 / max(_aug_norm(op, sw) + lam, 1e-300)
    h = mu * params.step_dt
    y = float(np.max(np.abs(x) ** 2)) if x.size else 0.0
    y_gain = params.y_rate * y
    r, oob = _residuals(op, x, s, sw)
    f = _objective(x, y, r, oob, lam)
    f0 = f
    trace = np.empty(params.max_iters + 1)
    trace[0] = f
    recent = deque([f], maxlen=params.stall_window)
    w = params.stall_window
    it = 0
    stalled = False
    for it in range(1, params.max_iters + 1):
        if params.lam_growth != 1.0 and it % params.lam_every == 0:
            lam *= params.lam_growth
        act = np.abs(x) ** 2 - y >= 0
        x = x - h * (lam * x * act + op.residual_adjoint(r, sw * oob))
        count = np.count_nonzero(np.abs(x) ** 2 - y >= 0)
        y = max(y - h * y_gain * lam * (1.0 - count), 0.0)
        r, oob = _residuals(op, x, s, sw)
        f = _objective(x, y, r, oob, lam)
        if not np.isfinite(f) or f > params.divergence_factor * max(f0, 1e-300):
            raise ConvergenceError("gradient flow diverged", iteration=it, objective=f,
                                   initial_objective=f0, step=h)
        if f > 2.0 * max(recent):
            h *= 0.5
        recent.append(f)
        trace[it] = f
        if it >= 2 * w and it % w == 0:
            last = trace[it - w + 1: it + 1].mean()
            before = trace[it - 2 * w + 1: it - w + 1].mean()
            if abs(before - last) <= params.stall_tol * abs(last):
                stalled = True
                break
    trace = trace[: it + 1]
    res = mui_residual(op, s, x)
    return PrecodeResult(
        x_tilde=x,
        per_antenna_papr_db=antenna_papr_db(op, x, papr_oversampling),
        mui_residual=res,
        objective_trace=trace,
        converged=bool(res**2 <= params.mui_tol),
        iterations=it,
        y=y,
        extra={"stalled": stalled, "lam": lam, "step": h},
    )


def _prox_linf(v, tau):
    """``argmin_x tau ||x||_inf + 0.5 ||x - v||^2`` via the l1-ball projection (Moreau)."""
    mag = np.abs(v).ravel()
    if mag.sum() <= tau:
        return np.zeros_like(v)
    u = np.sort(mag)[::-1]
    css = np.cumsum(u) - tau
    k = np.nonzero(u * np.arange(1, u.size + 1) > css)[0][-1]
    clip = css[k] / (k + 1)
    scale = np.minimum(1.0, clip / np.where(np.abs(v) > 0, np.abs(v), 1.0))
    return v * scale


def _fitra_objective(x, r, oob, beta):
    return float(np.max(np.abs(x)) + (np.vdot(r, r).real + np.vdot(oob, oob).real) / (2.0 * beta))


def fitra(op: StackedOperator, s, params: FitraParams = FitraParams(),
          papr_oversampling: int = 4) -> PrecodeResult:
    """Accelerated proximal gradient on ``||x||_inf + ||s - A x||^2 / (2 beta)``.

    The proximal step truncates every magnitude above a common level found
    by sorting. The best iterate is returned; the trace is the best value so far.
    """
    s = np.asarray(s, dtype=complex).reshape(op.output_shape)
    sw = _oob_scale(op, params.oob_weight)
    step = params.beta / max(_aug_norm(op, sw), 1e-300)
    x = np.zeros(op.input_shape, dtype=complex)
    z = x
    t = 1.0
    r, oob = _residuals(op, x, s, sw)
    best_f = _fitra_objective(x, r, oob, params.beta)
    best_x = x
    trace = [best_f]
    converged = False
    for _ in range(params.max_iters):
        rz, oz = _residuals(op, z, s, sw)
        v = z - step * op.residual_adjoint(rz, sw * oz) / params.beta
        x_new = _prox_linf(v, step)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = x_new + ((t - 1.0) / t_new) * (x_new - x)
        delta = np.linalg.norm(x_new - x)
        x, t = x_new, t_new
        r, oob = _residuals(op, x, s, sw)
        f = _fitra_objective(x, r, oob, params.beta)
        if f < best_f:
            best_f, best_x = f, x
        trace.append(best_f)
        if delta <= params.tol * max(np.linalg.norm(x), 1e-300):
            converged = True
            break
    return PrecodeResult(
        x_tilde=best_x,
        per_antenna_papr_db=antenna_papr_db(op, best_x, papr_oversampling),
        mui_residual=mui_residual(op, s, best_x),
        objective_trace=np.array(trace),
        converged=converged,
        iterations=len(trace) - 1,
    )


@dataclass(frozen=True)
class EnergyModel:
    """Link budget used to score a precoded block.

    The waveform is scaled to ``total_power_w`` radiated over all antennas.
    Every user sees ``path_gain`` on top of the small-scale channel, so its
    per-subcarrier SINR is ``|s|^2 g / (|e|^2 g + noise)`` with ``e`` the
    residual interference. Rates are Shannon rates capped at the
    constellation's bits per symbol. Every PA operates at the back-off set
    by the worst antenna's PAPR.
    """

    total_power_w: float = 1.0
    path_gain: float = 1e-11  # -110 dB
    noise_w_per_sc: float = 10 ** (-20.4) * 15e3  # -174 dBm/Hz over one subcarrier
    delta_f_hz: float = 15e3
    bits_cap: float = 4.0
    static_power_w: float = 0.0
    pa: PaModel = PaModel()


def precode_energy_efficiency(op: StackedOperator, s, x_tilde, model: EnergyModel = EnergyModel(),
                              papr_oversampling: int = 4):
    """``(bits per joule, worst-antenna PAPR dB, sum rate)`` of one precoded block."""
    s = np.asarray(s, dtype=complex).reshape(op.output_shape)
    bins = op.bins(x_tilde)
    radiated = np.sum(np.abs(bins) ** 2)
    if radiated <= 0:
        raise InputError("all-zero precoded block")
    scale = np.sqrt(model.total_power_w / radiated)
    rx = op.forward(x_tilde) * scale
    ref = s * scale
    err = np.abs(rx - ref) ** 2
    sig = np.abs(ref) ** 2
    sinr = sig * model.path_gain / (err * model.path_gain + model.noise_w_per_sc)
    rate = model.delta_f_hz * np.sum(np.minimum(np.log2(1.0 + sinr), model.bits_cap))
    worst = float(np.nanmax(antenna_papr_db(op, x_tilde, papr_oversampling)))
    eta = pa_efficiency_instantaneous(model.pa, worst)
    power = model.total_power_w / eta + model.static_power_w * op.n_antennas
    return float(rate / power), worst, float(rate)


@dataclass(frozen=True)
class MimoScenario:
    """Desk-scale massive-MIMO downlink: i.i.d. frequency-selective links, no path loss."""

    n_users: int = 8
    n_subcarriers: int = 32
    n_taps: int = 6
    decay_db_per_tap: float = 3.0
    oversampling: int = 4
    energy: EnergyModel = EnergyModel()
    rnn: RnnParams = RnnParams()
    fitra: FitraParams = FitraParams()


@dataclass
class SweepRow:
    n_antennas: int
    ee_bits_per_joule: float
    worst_papr_db: float
    median_papr_db: float
    sum_rate_bps: float
    mui_residual: float
    converged: bool
    iterations: int
    bins: np.ndarray  # (N_t, N_c) in-band transmit symbols


def energy_sweep(n_t_list, scenario: MimoScenario, method: str, symbols, channel_seed) -> list[SweepRow]:
    """Precode ``symbols`` for every antenna count and score each block.

    Channels for all counts come from ``channel_seed``; antennas are drawn in
    order, so a larger array extends the smaller one.
    """
    if method not in ("rnn", "ls", "fitra"):
        raise InputError(f"unknown precoding method {method!r}")
    s = np.asarray(symbols, dtype=complex)
    if s.shape != (scenario.n_users, scenario.n_subcarriers):
        raise InputError("symbols must have shape (n_users, n_subcarriers)")
    rows = []
    for nt in n_t_list:
        if nt < scenario.n_users:
            raise InputError("need at least as many antennas as users")
        g = rayleigh_channels(nt, scenario.n_users, scenario.n_subcarriers, scenario.n_taps,
                              seed=channel_seed, decay_db_per_tap=scenario.decay_db_per_tap)
        op = StackedOperator(np.transpose(g, (2, 1, 0)), oversampling=scenario.oversampling)
        if method == "ls":
            x, converged, iters = ls_precode(op, s), True, 0
        else:
            res = rnn_solve(op, s, scenario.rnn) if method == "rnn" else fitra(op, s, scenario.fitra)
            x, converged, iters = res.x_tilde, res.converged, res.iterations
        papr = antenna_papr_db(op, x, scenario.oversampling)
        ee, worst, rate = precode_energy_efficiency(op, s, x, scenario.energy, scenario.oversampling)
        rows.append(SweepRow(int(nt), ee, worst, float(np.nanmedian(papr)), rate,
                             mui_residual(op, s, x), converged, iters, op.bins(x)))
    return rows


def dump_waveform_csv(op: StackedOperator, x_tilde, path, oversampling: int = 4) -> None:
    """Write ``antenna,sample,re,im`` rows of the transmitted waveform."""
    wave = synthesize(op.bins(x_tilde), oversampling)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["antenna", "sample", "re", "im"])
        for (a, i), v in np.ndenumerate(wave):
            w.writerow([a, i, repr(float(v.real)), repr(float(v.imag))])
