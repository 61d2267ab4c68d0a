"""Node placement, frequency-selective channels and the stacked MIMO-OFDM operator."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, RankDeficientError
from .signal_core import _pad_index

__all__ = [
    "Geometry", "ChannelTensor", "StackedOperator",
    "place_nodes", "tap_profile", "rayleigh_channels", "generate_channels",
    "build_stacked_operator", "dump_channels_csv", "MIN_DISTANCE_M",
]

MIN_DISTANCE_M = 1.0


@dataclass(frozen=True)
class Geometry:
    cell_radius_m: float
    rrh_positions: np.ndarray  # (M, 2)
    ms_positions: np.ndarray  # (K, 2)

    def distances(self) -> np.ndarray:
        """RRH-to-MS distances, shape (M, K)."""
        diff = self.rrh_positions[:, None, :] - self.ms_positions[None, :, :]
        return np.hypot(diff[..., 0], diff[..., 1])


def _uniform_disc(rng, count, radius):
    u = rng.random((count, 2))  # one (radius, angle) pair per node keeps prefixes stable
    r = radius * np.sqrt(u[:, 0])
    theta = 2.0 * np.pi * u[:, 1]
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)])


def place_nodes(n_rrh: int, n_ms: int, cell_radius_m: float, seed) -> Geometry:
    """RRHs and MSs drawn independently and uniformly over a disc centred on the BBU.

    RRHs are drawn first from their own stream, so the first ``m`` RRHs of a
    placement with ``M > m`` coincide with a placement of ``m`` RRHs under the
    same seed. Experiments sweeping the RRH count rely on this nesting.
    """
    if cell_radius_m <= 0:
        raise InputError("cell radius must be positive")
    if n_rrh < 1 or n_ms < 1:
        raise InputError("node counts must be >= 1")
    rrh_rng, ms_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    rrh = _uniform_disc(rrh_rng, n_rrh, cell_radius_m)
    ms = _uniform_disc(ms_rng, n_ms, cell_radius_m)
    return Geometry(float(cell_radius_m), rrh, ms)


@dataclass(frozen=True)
class ChannelTensor:
    gains: np.ndarray  # (M antennas, K users, N subcarriers)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        g = np.asarray(self.gains)
        if g.ndim != 3:
            raise InputError("channel gains must be indexed (antenna, user, subcarrier)")
        if not np.all(np.isfinite(g)):
            raise InputError("channel gains must be finite")

    @property
    def n_antennas(self) -> int:
        return self.gains.shape[0]

    @property
    def n_users(self) -> int:
        return self.gains.shape[1]

    @property
    def n_subcarriers(self) -> int:
        return self.gains.shape[2]


def tap_profile(n_taps: int, decay_db_per_tap: float = 3.0) -> np.ndarray:
    """Exponential power-delay profile normalised to unit total power."""
    if n_taps < 1:
        raise InputError("n_taps must be >= 1")
    p = 10.0 ** (-decay_db_per_tap * np.arange(n_taps) / 10.0)
    return p / p.sum()


def rayleigh_channels(n_antennas, n_users, n_subcarriers, n_taps=6, seed=None,
                      decay_db_per_tap=3.0, amplitude=None) -> np.ndarray:
    """I.i.d. tapped-delay-line Rayleigh links; returns frequency responses (M, K, N).

    ``amplitude`` (M, K) scales each link, e.g. by a path-loss factor.
    Antennas are drawn one after another from a single stream, so the first
    ``m`` antennas do not depend on how many follow.
    """
    if n_subcarriers < n_taps:
        raise InputError("need at least as many subcarriers as taps")
    rng = np.random.default_rng(seed)
    prof = np.sqrt(tap_profile(n_taps, decay_db_per_tap) / 2.0)
    taps = np.empty((n_antennas, n_users, n_taps), dtype=complex)
    for m in range(n_antennas):
        draw = rng.standard_normal((2, n_users, n_taps))
        taps[m] = draw[0] + 1j * draw[1]
    taps *= prof
    if amplitude is not None:
        taps = taps * np.asarray(amplitude)[..., None]
    return np.fft.fft(taps, n=n_subcarriers, axis=-1)


def generate_channels(geometry: Geometry, n_subcarriers: int, n_taps: int = 6,
                      pathloss_exponent: float = 3.7, seed=None,
                      decay_db_per_tap: float = 3.0) -> ChannelTensor:
    """Distance-dependent frequency-selective channels for every RRH/MS link."""
    d = geometry.distances()
    clamped = d < MIN_DISTANCE_M
    d = np.maximum(d, MIN_DISTANCE_M)
    amp = d ** (-pathloss_exponent / 2.0)
    m, k = d.shape
    gains = rayleigh_channels(m, k, n_subcarriers, n_taps, seed, decay_db_per_tap, amp)
    meta = {"clamped_links": int(clamped.sum()), "pathloss_exponent": pathloss_exponent,
            "n_taps": n_taps}
    return ChannelTensor(gains, meta)


class StackedOperator:
    """Linear map from per-antenna time-domain samples to per-user subcarrier symbols.

    The input ``x`` has shape ``(N_t, L*N_c)``: one time-domain block per
    antenna, sampled ``L`` times faster than the subcarrier spacing requires
    (``L = 1`` is the critically sampled case). Each block goes through a
    unitary DFT, the ``N_c`` occupied bins are regrouped by subcarrier and the
    subcarrier's channel ``H_w`` (``M_r x N_t``) is applied, giving ``s`` of
    shape ``(M_r, N_c)``. The remaining ``(L-1)*N_c`` bins per antenna are
    out of band; :meth:`out_of_band` exposes them so solvers can drive them
    to zero. Flat antenna-major vectors are accepted as inputs.
    """

    def __init__(self, per_subcarrier_channels, check_rank: bool = True, oversampling: int = 1):
        h = np.asarray(per_subcarrier_channels, dtype=complex)
        if h.ndim != 3:
            raise InputError("expected an array of shape (N_c, M_r, N_t)")
        if oversampling < 1 or int(oversampling) != oversampling:
            raise InputError("oversampling must be a positive integer")
        self.h = h
        self.n_subcarriers, self.n_users, self.n_antennas = h.shape
        self.oversampling = int(oversampling)
        size = self.n_subcarriers * self.oversampling
        self.inband = _pad_index(self.n_subcarriers, self.oversampling)
        mask = np.ones(size, dtype=bool)
        mask[self.inband] = False
        self.outband = np.nonzero(mask)[0]
        if check_rank:
            ranks = np.linalg.matrix_rank(h)
            bad = np.nonzero(ranks < self.n_users)[0]
            if bad.size:
                raise RankDeficientError(f"subcarriers {bad.tolist()} are rank deficient")

    @property
    def per_subcarrier_channels(self) -> list:
        return list(self.h)

    @property
    def input_shape(self):
        return (self.n_antennas, self.n_subcarriers * self.oversampling)

    @property
    def output_shape(self):
        return (self.n_users, self.n_subcarriers)

    @property
    def out_of_band_shape(self):
        return (self.n_antennas, self.outband.size)

    def bins(self, x) -> np.ndarray:
        """Occupied bins of each antenna, shape (N_t, N_c)."""
        x = np.asarray(x, dtype=complex).reshape(self.input_shape)
        return np.fft.fft(x, axis=1, norm="ortho")[:, self.inband]

    def forward(self, x) -> np.ndarray:
        return np.einsum("wkm,mw->kw", self.h, self.bins(x))

    def adjoint(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=complex).reshape(self.output_shape)
        freq = np.zeros(self.input_shape, dtype=complex)
        freq[:, self.inband] = np.einsum("wkm,kw->mw", self.h.conj(), s)
        return np.fft.ifft(freq, axis=1, norm="ortho")

    __call__ = forward

    def out_of_band(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=complex).reshape(self.input_shape)
        return np.fft.fft(x, axis=1, norm="ortho")[:, self.outband]

    def residuals(self, x, s):
        """``(H x - s, out-of-band bins)`` from a single FFT of ``x``."""
        freq = np.fft.fft(np.asarray(x, dtype=complex).reshape(self.input_shape), axis=1, norm="ortho")
        r = np.einsum("wkm,mw->kw", self.h, freq[:, self.inband]) - np.asarray(s).reshape(self.output_shape)
        return r, freq[:, self.outband]

    def residual_adjoint(self, r, oob) -> np.ndarray:
        """Adjoint of ``x -> (H x, out-of-band bins)`` applied to ``(r, oob)``."""
        freq = np.zeros(self.input_shape, dtype=complex)
        freq[:, self.inband] = np.einsum("wkm,kw->mw", self.h.conj(), r)
        freq[:, self.outband] = oob
        return np.fft.ifft(freq, axis=1, norm="ortho")

    def normal_norm(self) -> float:
        """Largest eigenvalue of the normal operator (squared spectral norm)."""
        return float(max(np.linalg.norm(hw, 2) ** 2 for hw in self.h))

    def inband_waveform(self, x) -> np.ndarray:
        """``x`` with the out-of-band bins removed, i.e. the transmitted OFDM waveform."""
        freq = np.zeros(self.input_shape, dtype=complex)
        freq[:, self.inband] = self.bins(x)
        return np.fft.ifft(freq, axis=1, norm="ortho")


def build_stacked_operator(channels: ChannelTensor, oversampling: int = 1) -> StackedOperator:
    """Operator for a BS whose antennas index axis 0 and users axis 1 of ``channels``."""
    return StackedOperator(np.transpose(channels.gains, (2, 1, 0)), oversampling=oversampling)


def dump_channels_csv(channels: ChannelTensor, path) -> None:
    """Write ``m,k,n,re,im`` rows, one per channel coefficient."""
    g = channels.gains
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["m", "k", "n", "re", "im"])
        for (m, k, n), v in np.ndenumerate(g):
            w.writerow([m, k, n, repr(float(v.real)), repr(float(v.imag))])
