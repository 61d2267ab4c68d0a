"""Clipping-and-filtering and partial-transmit-sequence PAPR reduction."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numba
import numpy as np

from .errors import InputError
from .signal_core import OfdmGrid, TimeSignal, _pad_index, synthesize

__all__ = [
    "ClipConfig", "PtsConfig", "ClipStage", "PHASES_QPSK",
    "clip_and_filter", "clip_stages", "pts_reduce", "pts_reduce_batch",
]

PHASES_QPSK = (1 + 0j, -1 + 0j, 1j, -1j)


@dataclass(frozen=True)
class ClipConfig:
    clipping_ratio: float  # clip amplitude over rms amplitude
    iterations: int = 1

    def __post_init__(self):
        if not self.clipping_ratio > 0:
            raise InputError("clipping ratio must be positive")
        if self.iterations < 1:
            raise InputError("need at least one clip/filter iteration")


@dataclass(frozen=True)
class PtsConfig:
    n_subblocks: int
    phase_set: tuple = PHASES_QPSK

    def __post_init__(self):
        if self.n_subblocks < 1:
            raise InputError("n_subblocks must be >= 1")
        ph = np.asarray(self.phase_set, dtype=complex)
        if ph.size == 0 or np.any(np.abs(np.abs(ph) - 1.0) > 1e-12):
            raise InputError("phase factors must have unit magnitude")
        object.__setattr__(self, "phase_set", tuple(complex(p) for p in ph))


@dataclass(frozen=True)
class ClipStage:
    clipped: np.ndarray  # waveform right after clipping
    filtered: np.ndarray  # after removing out-of-band regrowth


def _clip(x, cr):
    amp = np.abs(x)
    rms = np.sqrt(np.mean(amp**2, axis=-1, keepdims=True))
    limit = cr * rms
    over = amp > limit
    if not over.any():
        return x
    scale = np.where(over, limit / np.where(over, amp, 1.0), 1.0)
    return x * scale


def clip_stages(symbols, cfg: ClipConfig, oversampling: int = 4) -> list[ClipStage]:
    """Every clip/filter iteration, batched over leading axes of ``symbols``.

    Each iteration clips the amplitude at ``CR * rms`` keeping the phase,
    returns to frequency, zeroes the out-of-band bins and resynthesises.
    """
    sym = np.asarray(symbols, dtype=complex)
    n = sym.shape[-1]
    size = n * oversampling
    inband = np.zeros(size, dtype=bool)
    inband[_pad_index(n, oversampling)] = True
    x = synthesize(sym, oversampling)
    stages = []
    for _ in range(cfg.iterations):
        clipped = _clip(x, cfg.clipping_ratio)
        if clipped is x:
            stages.append(ClipStage(x, x))
            continue
        spec = np.fft.fft(clipped, axis=-1)
        spec[..., ~inband] = 0.0
        x = np.fft.ifft(spec, axis=-1)
        stages.append(ClipStage(clipped, x))
    return stages


def clip_and_filter(grid: OfdmGrid, cfg: ClipConfig, oversampling: int = 4) -> TimeSignal:
    """Iterative clipping and out-of-band filtering; returns the final waveform."""
    return TimeSignal(clip_stages(grid.symbols, cfg, oversampling)[-1].filtered, int(oversampling))


def _phase_table(n_free: int, n_phases: int) -> np.ndarray:
    """Phase-index vectors in lexicographic order."""
    if n_free == 0:
        return np.zeros((1, 0), dtype=np.int64)
    return np.array(list(product(range(n_phases), repeat=n_free)), dtype=np.int64)


@numba.njit(cache=True)
def _pts_search(head, tail):
    """Branch-and-bound exhaustive search for the lowest peak power.

    Candidate ``a * len(tail) + b`` is ``head[a] + tail[b]``, where ``head``
    holds the partial sums over the leading subblocks (first one fixed at +1)
    and ``tail`` those over the rest, both in lexicographic phase order. A
    candidate is dropped once a sample exceeds the incumbent peak, so only
    strict improvements replace it (lowest lexicographic index wins ties).
    """
    s = head.shape[1]
    best_peak = np.inf
    best = 0
    for a in range(head.shape[0]):
        for b in range(tail.shape[0]):
            peak = 0.0
            for i in range(s):
                acc = head[a, i] + tail[b, i]
                pw = acc.real * acc.real + acc.imag * acc.imag
                if pw > peak:
                    peak = pw
                    if peak > best_peak:
                        break
            if peak < best_peak:
                best_peak = peak
                best = a * tail.shape[0] + b
    return best


def _subblock_parts(symbols, v, oversampling):
    n = symbols.shape[-1]
    if n % v:
        raise InputError(f"{v} subblocks do not divide {n} subcarriers")
    width = n // v
    masked = np.zeros(symbols.shape[:-1] + (v, n), dtype=complex)
    for b in range(v):
        masked[..., b, b * width:(b + 1) * width] = symbols[..., b * width:(b + 1) * width]
    return synthesize(masked, oversampling)


def pts_reduce_batch(symbols, cfg: PtsConfig, oversampling: int = 4):
    """PTS over a batch of grids (last axis = subcarriers, natural order).

    Subblocks are adjacent runs of subcarriers. Rotating subblocks leaves the
    mean power unchanged, so the search minimises the peak directly.
    Returns ``(waveforms, phases)`` with ``phases`` of shape (batch, V).
    """
    sym = np.atleast_2d(np.asarray(symbols, dtype=complex))
    v = cfg.n_subblocks
    ph = np.asarray(cfg.phase_set, dtype=complex)
    n_head = (v - 1) // 2
    head_tab = _phase_table(n_head, ph.size)
    tail_tab = _phase_table(v - 1 - n_head, ph.size)
    table = _phase_table(v - 1, ph.size)
    parts = _subblock_parts(sym, v, oversampling)
    out = np.empty((sym.shape[0], sym.shape[1] * oversampling), dtype=complex)
    chosen = np.empty((sym.shape[0], v), dtype=complex)
    for i in range(sym.shape[0]):
        c = 0
        if v > 1:
            head = parts[i, 0] + ph[head_tab] @ parts[i, 1:1 + n_head]
            tail = ph[tail_tab] @ parts[i, 1 + n_head:]
            c = _pts_search(head, tail)
        factors = np.concatenate([[1.0 + 0j], ph[table[c]]])
        chosen[i] = factors
        out[i] = factors @ parts[i]
    return out, chosen


def pts_reduce(grid: OfdmGrid, cfg: PtsConfig, oversampling: int = 4):
    """Exhaustive PTS for one grid; returns ``(TimeSignal, phase factors)``."""
    wave, chosen = pts_reduce_batch(grid.symbols[None, :], cfg, oversampling)
    return TimeSignal(wave[0], int(oversampling)), chosen[0]
