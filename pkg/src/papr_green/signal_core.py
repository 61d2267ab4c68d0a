"""OFDM symbol mapping, oversampled waveform synthesis, PAPR and CCDF.

Grids are stored in FFT bin order: index 0 is DC, indices ``0..ceil(N/2)-1``
are the non-negative frequencies and the rest are the negative ones. Zero
padding for oversampling is inserted in the middle, so the occupied band
stays symmetric about DC.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, UndefinedPaprError

__all__ = [
    "ConstellationSpec", "OfdmGrid", "TimeSignal", "CcdfCurve",
    "constellation", "map_bits", "random_symbols", "ofdm_modulate", "synthesize",
    "spectrum", "papr_db", "papr_db_batch", "ccdf_estimate",
    "ccdf_analytic_equal_power", "analytic_papr_quantile_db",
]

# Gray-coded amplitude levels per axis, indexed by the integer value of the
# axis bits (MSB first). The first bit of each axis is the sign bit.
_PAM2 = np.array([1.0, -1.0])
_PAM4 = np.array([3.0, 1.0, -3.0, -1.0])  # 00, 01, 10, 11


@dataclass(frozen=True)
class ConstellationSpec:
    name: str
    points: np.ndarray  # indexed by the symbol's bit pattern read MSB first

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=complex)
        if pts.size not in (4, 16):
            raise InputError(f"constellation must have 4 or 16 points, got {pts.size}")
        if abs(np.mean(np.abs(pts) ** 2) - 1.0) > 1e-12:
            raise InputError("constellation points must have unit average power")
        object.__setattr__(self, "points", pts)

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(self.points.size))


def constellation(name: str) -> ConstellationSpec:
    """Gray-mapped unit-power constellation, ``"QPSK"`` or ``"QAM16"``.

    QPSK: bits ``(b0, b1)`` map to ``((1-2 b0) + j (1-2 b1)) / sqrt(2)``.
    QAM16: bits ``(b0 b1)`` pick the in-phase level and ``(b2 b3)`` the
    quadrature level from ``00->+3, 01->+1, 11->-1, 10->-3``, scaled by
    ``1/sqrt(10)``.
    """
    key = name.upper().replace("-", "")
    if key == "QPSK":
        idx = np.arange(4)
        pts = (_PAM2[idx >> 1] + 1j * _PAM2[idx & 1]) / np.sqrt(2.0)
        return ConstellationSpec("QPSK", pts)
    if key in ("QAM16", "16QAM"):
        idx = np.arange(16)
        pts = (_PAM4[idx >> 2] + 1j * _PAM4[idx & 3]) / np.sqrt(10.0)
        return ConstellationSpec("QAM16", pts)
    raise InputError(f"unknown constellation {name!r}")


def map_bits(bits, spec: ConstellationSpec) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64).ravel()
    width = spec.bits_per_symbol
    if bits.size % width:
        raise InputError(f"{bits.size} bits is not a multiple of {width} bits per symbol")
    if bits.size and not np.all((bits == 0) | (bits == 1)):
        raise InputError("bits must be 0 or 1")
    groups = bits.reshape(-1, width)
    weights = 1 << np.arange(width - 1, -1, -1)
    return spec.points[groups @ weights]


def random_symbols(rng: np.random.Generator, shape, spec: ConstellationSpec) -> np.ndarray:
    """Uniform random constellation symbols (same law as mapping uniform bits)."""
    return spec.points[rng.integers(0, spec.points.size, size=shape)]


@dataclass(frozen=True)
class OfdmGrid:
    symbols: np.ndarray

    def __post_init__(self):
        sym = np.asarray(self.symbols, dtype=complex)
        if sym.ndim != 1 or sym.size == 0:
            raise InputError("grid must be a non-empty 1-D vector")
        if not np.all(np.isfinite(sym)):
            raise InputError("grid entries must be finite")
        object.__setattr__(self, "symbols", sym)

    @property
    def n_subcarriers(self) -> int:
        return self.symbols.size


@dataclass(frozen=True)
class TimeSignal:
    samples: np.ndarray
    oversampling: int = 1

    def __post_init__(self):
        if self.oversampling < 1 or int(self.oversampling) != self.oversampling:
            raise InputError("oversampling must be a positive integer")
        if np.asarray(self.samples).size % self.oversampling:
            raise InputError("waveform length must be a multiple of the oversampling factor")

    @property
    def n_subcarriers(self) -> int:
        return self.samples.size // self.oversampling


def _pad_index(n: int, oversampling: int) -> np.ndarray:
    """Positions of the ``n`` grid bins inside the ``n * oversampling`` FFT."""
    half = (n + 1) // 2
    k = np.arange(n)
    return np.where(k < half, k, k + (oversampling - 1) * n)


def synthesize(symbols, oversampling: int = 1) -> np.ndarray:
    """Batched OFDM synthesis along the last axis.

    Scaling makes the waveform's mean power equal ``sum |X_n|^2 / N``.
    """
    if oversampling < 1 or int(oversampling) != oversampling:
        raise InputError("oversampling must be a positive integer")
    x = np.asarray(symbols, dtype=complex)
    n = x.shape[-1]
    size = n * oversampling
    if oversampling == 1:
        padded = x
    else:
        padded = np.zeros(x.shape[:-1] + (size,), dtype=complex)
        padded[..., _pad_index(n, oversampling)] = x
    return np.fft.ifft(padded, axis=-1) * (size / np.sqrt(n))


def spectrum(samples, n_subcarriers: int) -> np.ndarray:
    """Inverse of :func:`synthesize`: recover the ``n_subcarriers`` occupied bins."""
    x = np.asarray(samples, dtype=complex)
    size = x.shape[-1]
    if size % n_subcarriers:
        raise InputError("waveform length is not a multiple of the subcarrier count")
    bins = np.fft.fft(x, axis=-1) * (np.sqrt(n_subcarriers) / size)
    return bins[..., _pad_index(n_subcarriers, size // n_subcarriers)]


def ofdm_modulate(grid: OfdmGrid, oversampling: int = 4) -> TimeSignal:
    return TimeSignal(synthesize(grid.symbols, oversampling), int(oversampling))


def papr_db(signal) -> float:
    """Peak-to-average power ratio of one waveform, in dB."""
    x = signal.samples if isinstance(signal, TimeSignal) else np.asarray(signal)
    power = np.abs(np.ravel(x)) ** 2
    mean = power.mean() if power.size else 0.0
    if mean == 0.0:
        raise UndefinedPaprError("PAPR is undefined for an all-zero signal")
    # peak >= mean exactly; rounding in the mean can push a flat envelope a hair below
    return float(10.0 * np.log10(max(power.max() / mean, 1.0)))


def papr_db_batch(samples, axis: int = -1) -> np.ndarray:
    power = np.abs(np.asarray(samples)) ** 2
    mean = power.mean(axis=axis)
    if np.any(mean == 0.0):
        raise UndefinedPaprError("PAPR is undefined for an all-zero signal")
    return 10.0 * np.log10(np.maximum(power.max(axis=axis) / mean, 1.0))


@dataclass(frozen=True)
class CcdfCurve:
    thresholds_db: np.ndarray
    probabilities: np.ndarray

    def level_at(self, probability: float) -> float:
        """Threshold (dB) where the curve crosses ``probability``, linear interpolation."""
        p, t = self.probabilities, self.thresholds_db
        below = np.nonzero(p <= probability)[0]
        if below.size == 0:
            return float("nan")
        i = below[0]
        if i == 0:
            return float(t[0])
        p0, p1 = p[i - 1], p[i]
        if p0 == p1:
            return float(t[i])
        return float(t[i - 1] + (p0 - probability) / (p0 - p1) * (t[i] - t[i - 1]))


def ccdf_estimate(papr_samples, thresholds_db) -> CcdfCurve:
    """Empirical P(PAPR > threshold) for each threshold."""
    samples = np.sort(np.asarray(papr_samples, dtype=float).ravel())
    if samples.size == 0:
        raise InputError("need at least one PAPR sample")
    thresholds = np.asarray(thresholds_db, dtype=float).ravel()
    order = np.argsort(thresholds, kind="stable")
    thresholds = thresholds[order]
    above = samples.size - np.searchsorted(samples, thresholds, side="right")
    return CcdfCurve(thresholds, above / samples.size)


def ccdf_analytic_equal_power(n_subcarriers: int, gamma_db) -> np.ndarray | float:
    """Nyquist-rate reference ``1 - (1 - exp(-gamma))**N``, gamma linear."""
    if n_subcarriers < 1:
        raise InputError("n_subcarriers must be >= 1")
    gamma = 10.0 ** (np.asarray(gamma_db, dtype=float) / 10.0)
    # -expm1(N log1p(-e^-g)) keeps precision in both tails
    p = -np.expm1(n_subcarriers * np.log1p(-np.exp(-gamma)))
    p = np.clip(p, 0.0, 1.0)
    return float(p) if p.ndim == 0 else p


def analytic_papr_quantile_db(n_subcarriers: int, probability: float) -> float:
    """Threshold at which the equal-power reference CCDF equals ``probability``."""
    if not 0.0 < probability < 1.0:
        raise InputError("probability must lie in (0, 1)")
    gamma = -np.log(-np.expm1(np.log1p(-probability) / n_subcarriers))
    return float(10.0 * np.log10(gamma))
