"""PA efficiency models, sum rate and the base-station energy-efficiency metric."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

__all__ = [
    "PaModel", "PowerAllocation", "EnergyReport", "ETA_FLOOR",
    "calibrate_c2", "spread_moment", "pa_efficiency_statistical",
    "pa_efficiency_gradient", "pa_efficiency_instantaneous", "sum_rate",
    "energy_efficiency",
]

ETA_FLOOR = 1e-3


def calibrate_c2(target_eta=0.35, c1=0.05, n_subcarriers=128, delta_f_hz=15e3, p_t=1.0):
    """c2 giving ``target_eta`` for an equal split of ``p_t`` over ``n_subcarriers``."""
    spread = 2.0 * np.pi * delta_f_hz**2 * (n_subcarriers**2 - 1) / (12.0 * p_t)
    return (target_eta - c1) / spread


@dataclass(frozen=True)
class PaModel:
    c1: float = 0.05
    c2: float = field(default_factory=calibrate_c2)
    delta_f_hz: float = 15e3
    p_t: float = 1.0
    eta_max: float = 0.785
    centered_index: bool = False  # use n - (N+1)/2 instead of n in the spread moment

    def __post_init__(self):
        if not 0.0 < self.c1 < 1.0:
            raise InputError("c1 must lie in (0, 1)")
        if self.delta_f_hz <= 0 or self.p_t <= 0:
            raise InputError("delta_f_hz and p_t must be positive")
        if not 0.0 < self.eta_max <= 1.0:
            raise InputError("eta_max must lie in (0, 1]")

    @property
    def spread_scale(self) -> float:
        """Coefficient multiplying the spread moment: ``c2 * 2 pi df^2 / P_T^3``."""
        return self.c2 * 2.0 * np.pi * self.delta_f_hz**2 / self.p_t**3

    def index(self, n_subcarriers: int) -> np.ndarray:
        n = np.arange(1, n_subcarriers + 1, dtype=float)
        return n - (n_subcarriers + 1) / 2.0 if self.centered_index else n


def spread_moment(model: PaModel, p_row) -> np.ndarray | float:
    """``P_T * sum n^2 p_n - (sum n p_n)^2`` along the last axis."""
    p = np.asarray(p_row, dtype=float)
    n = model.index(p.shape[-1])
    return model.p_t * (p @ n**2) - (p @ n) ** 2


def pa_efficiency_statistical(model: PaModel, p_row) -> np.ndarray | float:
    """Allocation-dependent PA efficiency of one antenna (rows broadcast).

    ``eta = c1 + c2 * 2 pi df^2 * (P_T sum n^2 p_n - (sum n p_n)^2) / P_T^3``,
    clamped to ``[ETA_FLOOR, 1]``. Subcarrier indices run from 1.
    """
    p = np.asarray(p_row, dtype=float)
    if np.any(p < 0):
        raise InputError("powers must be non-negative")
    eta = model.c1 + model.spread_scale * spread_moment(model, p)
    eta = np.clip(eta, ETA_FLOOR, 1.0)
    return float(eta) if np.ndim(eta) == 0 else eta


def pa_efficiency_gradient(model: PaModel, p_row) -> np.ndarray:
    """Gradient of the unclamped statistical efficiency with respect to ``p_row``."""
    p = np.asarray(p_row, dtype=float)
    n = model.index(p.shape[-1])
    first = p @ n
    return model.spread_scale * (model.p_t * n**2 - 2.0 * np.multiply.outer(first, n))


def pa_efficiency_instantaneous(model: PaModel, papr_db) -> np.ndarray | float:
    """Class-B back-off law: efficiency scales with sqrt(average / peak power)."""
    papr_db = np.asarray(papr_db, dtype=float)
    if np.any(papr_db < 0):
        raise InputError("PAPR must be non-negative")
    eta = model.eta_max / np.sqrt(10.0 ** (papr_db / 10.0))
    return float(eta) if eta.ndim == 0 else eta


@dataclass(frozen=True)
class PowerAllocation:
    p: np.ndarray  # (M, N) watts

    def check(self, p_t, atol=1e-9) -> "PowerAllocation":
        p = np.asarray(self.p, dtype=float)
        if np.any(p < -atol):
            raise InputError("negative power in allocation")
        if np.any(p.sum(axis=1) > np.broadcast_to(p_t, p.shape[:1]) + atol):
            raise InputError("per-antenna power budget exceeded")
        return self

    @property
    def per_antenna(self) -> np.ndarray:
        return np.asarray(self.p).sum(axis=1)


@dataclass(frozen=True)
class EnergyReport:
    sum_rate_bps: float
    pa_power_w: float
    static_power_w: float
    efficiency_bits_per_joule: float
    per_antenna_eta: np.ndarray


def sum_rate(gains, allocation, assignment, noise_w_per_sc: float, delta_f_hz: float = 15e3) -> float:
    """Sum rate with coherent combining across antennas.

    ``gains`` are per-antenna effective power gains (M, K, N) of each served
    stream after spatial separation; ``assignment`` is the binary ω (K, N).
    User ``k`` on subcarrier ``n`` sees
    ``SNR = (sum_m sqrt(p[m, n] * gains[m, k, n]))**2 / noise``.
    """
    g = np.asarray(gains, dtype=float)
    p = np.asarray(getattr(allocation, "p", allocation), dtype=float)
    omega = np.asarray(assignment)
    if g.ndim != 3 or p.shape != (g.shape[0], g.shape[2]) or omega.shape != g.shape[1:]:
        raise InputError("gains (M,K,N), allocation (M,N) and assignment (K,N) disagree")
    if not np.all((omega == 0) | (omega == 1)):
        raise InputError("assignment must be binary")
    if noise_w_per_sc <= 0:
        raise InputError("noise power must be positive")
    amp = np.einsum("mkn,mn->kn", np.sqrt(g), np.sqrt(np.maximum(p, 0.0)))
    snr = amp**2 / noise_w_per_sc
    return float(delta_f_hz * np.sum(omega * np.log2(1.0 + snr)))


def energy_efficiency(rate: float, allocation, etas, static_power: float) -> EnergyReport:
    """Bits per joule: rate over PA consumption ``sum_m P_m / eta_m`` plus static power."""
    p = np.asarray(getattr(allocation, "p", allocation), dtype=float)
    etas = np.broadcast_to(np.asarray(etas, dtype=float), p.shape[:1])
    if np.any(etas <= 0):
        raise InputError("PA efficiencies must be positive")
    if static_power < 0:
        raise InputError("static power must be non-negative")
    pa = float(np.sum(p.sum(axis=1) / etas))
    denom = pa + static_power
    if denom <= 0:
        raise InputError("zero power consumption: efficiency undefined")
    return EnergyReport(float(rate), pa, float(static_power), float(rate) / denom, etas.copy())
