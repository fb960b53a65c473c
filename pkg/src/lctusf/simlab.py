"""Test signals, noise, error metrics and the time-domain baseline decoder."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, LengthMismatch
from .lct import (
    ComplexSignal,
    LctParams,
    SamplingGrid,
    SpectralCoeffs,
    chirp,
    idlct,
    lowpass_reconstruct,
)
from .quantizer import OneBitStream


@dataclass(frozen=True)
class SignalSpec:
    """Random LCT-bandlimited test signal.

    ``anchor`` rotates the up-chirped signal cyclically so that sample 0 is
    the one with the smallest component magnitude. This keeps the residue at
    zero at the start of the window, which the running-sum residue synthesis
    relies on.
    """

    params: LctParams
    band_index: int
    target_norm: float
    seed: int
    real_valued: bool | None = None
    anchor: bool = True

    def __post_init__(self):
        if not self.target_norm > 0:
            raise ConfigError("target_norm must be positive")
        if self.band_index < 1:
            raise ConfigError("band_index must be >= 1")
        if self.real_valued is None:
            object.__setattr__(self, "real_valued", self.params.a == 0.0)
        if self.real_valued and self.params.a != 0.0:
            raise ConfigError("real-valued signals are only LCT-bandlimited when a = 0")


@dataclass(frozen=True)
class NoiseSpec:
    snr_db: float

    def __post_init__(self):
        if math.isnan(self.snr_db):
            raise ConfigError("snr_db must not be NaN")


def gen_bandlimited(spec: SignalSpec, grid: SamplingGrid) -> ComplexSignal:
    """Draw DLCT coefficients ``~ Unif(0, 1)`` on ``|m| <= M``, invert, optionally
    keep the real part, anchor, and scale to ``||g||_inf = target_norm``."""
    if spec.band_index != grid.band_index:
        grid = SamplingGrid(grid.tau, grid.n_samples, spec.band_index)
    rng = np.random.default_rng(spec.seed)
    M = spec.band_index
    coeffs = np.zeros(grid.n_samples, dtype=complex)
    coeffs[np.abs(grid.indices) <= M] = rng.uniform(0.0, 1.0, 2 * M + 1)
    g = idlct(SpectralCoeffs(coeffs, grid), spec.params).samples
    if spec.real_valued:
        g = g.real.astype(complex)
    if spec.anchor:
        m = chirp(spec.params, grid.times)
        up = g * m
        shift = int(np.argmin(np.maximum(np.abs(up.real), np.abs(up.imag))))
        up = np.roll(up, -shift)
        g = up * np.conj(m)
        if spec.real_valued:
            g = g.real.astype(complex)
    g = g * (spec.target_norm / np.max(np.abs(g)))
    return ComplexSignal(g, grid)


def add_awgn(g: ComplexSignal, noise: NoiseSpec | None, seed: int) -> ComplexSignal:
    """Add white Gaussian noise with ``sigma^2 = P_s 10^(-SNR/10)``.

    Real signals get real noise; complex signals get circular noise with the
    same total variance.
    """
    if noise is None or math.isinf(noise.snr_db) and noise.snr_db > 0:
        return g
    x = g.samples
    power = float(np.mean(np.abs(x) ** 2))
    var = power * 10.0 ** (-noise.snr_db / 10.0)
    rng = np.random.default_rng(seed)
    if np.all(x.imag == 0):
        w = rng.normal(0.0, math.sqrt(var), x.size)
    else:
        w = rng.normal(0.0, math.sqrt(var / 2), x.size) + 1j * rng.normal(
            0.0, math.sqrt(var / 2), x.size
        )
    return g.with_samples(x + w)


def _samples(x):
    return x.samples if isinstance(x, ComplexSignal) else np.asarray(x)


def mse(x, y) -> float:
    """``(1/N) sum |x - y|^2``."""
    a, b = _samples(x), _samples(y)
    if a.shape != b.shape:
        raise LengthMismatch(f"shapes {a.shape} and {b.shape} differ")
    if a.size == 0:
        return 0.0
    return float(np.mean(np.abs(a - b) ** 2))


def avg_mse(values) -> float:
    values = list(values)
    if not values:
        raise ValueError("no trials to average")
    return float(np.mean(values))


# --- time-domain baseline ---------------------------------------------------


def bspline_kernel(width: int, order: int = 2) -> np.ndarray:
    """Discrete B-spline: ``order`` boxes of length ``width`` convolved, unit sum."""
    if width < 1 or order < 1:
        raise ValueError("width and order must be >= 1")
    k = np.ones(width)
    for _ in range(order - 1):
        k = np.convolve(k, np.ones(width))
    return k / k.sum()


def td_kernel_width(lam: float, norm_bound: float, osr: float) -> int:
    """Largest decimation step over which a signal of amplitude ``norm_bound``
    moves by less than ``lam / 2`` (Bernstein bound, ``pi * osr`` rad/sample)."""
    return max(1, int(math.floor(lam / (2.0 * math.pi * osr * norm_bound))))


def _cyclic_smooth(x: np.ndarray, kern: np.ndarray) -> np.ndarray:
    n = x.size
    full = np.zeros(n)
    full[: kern.size] = kern
    full = np.roll(full, -(kern.size // 2))
    return np.fft.ifft(np.fft.fft(x) * np.fft.fft(full)).real


def td_baseline_recover(
    q: OneBitStream,
    lam: float,
    width: int,
    band_index: int | None = None,
    order: int = 2,
) -> ComplexSignal:
    """Local-thresholding decoder for Fourier-domain one-bit modulo samples.

    The real bit stream is smoothed with a B-spline whose support fits in
    ``width`` samples, and differenced over a lag of ``width``. Over that lag
    the signal itself moves by less than ``lam / 2``, so every run where the
    lagged difference exceeds ``lam`` holds a fold; one fold of
    ``-2 lam round(diff / 2 lam)`` is placed at the run's peak. The running sum
    of the folds is added to the bits and the result is low-pass filtered.
    """
    n = q.grid.n_samples
    if not 1 <= width < n // 2:
        raise ValueError(f"kernel width {width} must lie in [1, N/2)")
    bits = np.real(q.bits)
    box = max(1, (width + order - 1) // order)
    smooth = _cyclic_smooth(bits, bspline_kernel(box, order))
    ahead = width // 2
    diff = np.roll(smooth, -ahead) - np.roll(smooth, width - ahead)
    spikes = np.zeros(n)
    above = np.abs(diff) > lam
    if above.all():
        raise ValueError("lagged difference exceeds the threshold everywhere")
    if above.any():
        # rotate so that the scan starts outside a run
        start = int(np.flatnonzero(~above)[0])
        idx = np.roll(np.arange(n), -start)
        flags = above[idx]
        edges = np.flatnonzero(np.diff(flags.astype(np.int8), prepend=0, append=0))
        for lo, hi in zip(edges[::2], edges[1::2]):
            run = idx[lo:hi]
            at = int(run[np.argmax(np.abs(diff[run]))])
            spikes[at] += -2.0 * lam * np.round(diff[at] / (2.0 * lam))
    corrected = q.signal.with_samples(bits + np.cumsum(spikes))
    out = lowpass_reconstruct(corrected, LctParams.ft(), band_index)
    return out.with_samples(out.samples.real)
