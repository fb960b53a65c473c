"""Linear canonical transform on a finite periodic sampling grid.

Conventions used throughout the package:

* a transform is a unimodular matrix ``[[a, b], [c, d]]`` with ``b != 0``;
* the kernel is ``exp(-j (a t^2 - 2 t w + d w^2) / 2b) / sqrt(-j 2 pi b)``;
* a window of length ``tau`` holds ``N`` samples at ``t = n * step``, and all
  filtering is cyclic over the window;
* DLCT coefficients are stored in FFT order (index 0 is ``m = 0``, negative
  indices wrap to the end), and index ``m`` sits at LCT frequency
  ``m * omega0 * b``.

With these conventions the DLCT factors into an up-chirp, a DFT and a
quadratic phase in ``m``, which is what the fast path uses. The direct
summation is kept as the reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateB, DeterminantError, GridError, LengthMismatch

DET_TOL = 1e-9
B_TOL = 1e-12


@dataclass(frozen=True)
class LctParams:
    """Unimodular LCT parameter matrix ``[[a, b], [c, d]]``."""

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        for name in ("a", "b", "c", "d"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if abs(self.a * self.d - self.b * self.c - 1.0) > DET_TOL:
            raise DeterminantError(
                f"ad - bc = {self.a * self.d - self.b * self.c:.6g}, expected 1"
            )
        if abs(self.b) <= B_TOL:
            raise DegenerateB("b must be nonzero for an integral-kernel LCT")

    @classmethod
    def ft(cls) -> "LctParams":
        return cls(0.0, 1.0, -1.0, 0.0)

    @classmethod
    def frft(cls, theta: float) -> "LctParams":
        c, s = math.cos(theta), math.sin(theta)
        return cls(c, s, -s, c)

    @classmethod
    def fresnel(cls, b: float) -> "LctParams":
        return cls(1.0, b, 0.0, 1.0)

    def inverse(self) -> "LctParams":
        return LctParams(self.d, -self.b, -self.c, self.a)

    @property
    def is_fourier(self) -> bool:
        return self.a == 0.0 and self.d == 0.0

    @property
    def chirp_rate(self) -> float:
        """Coefficient of ``t^2`` in the chirp phase, ``a / 2b``."""
        return self.a / (2.0 * self.b)

    def as_matrix(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]])


def make_params(a: float, b: float, c: float, d: float) -> LctParams:
    return LctParams(a, b, c, d)


@dataclass(frozen=True)
class SamplingGrid:
    """Uniform grid of ``n_samples`` points over a window of length ``tau``.

    The signal class has DLCT support ``|m| <= band_index``, which puts the
    critical sampling period at ``tau / (2 * band_index)``. ``step`` is always
    ``tau / n_samples`` so that the window holds a whole number of samples.
    """

    tau: float
    n_samples: int
    band_index: int

    def __post_init__(self):
        object.__setattr__(self, "tau", float(self.tau))
        object.__setattr__(self, "n_samples", int(self.n_samples))
        object.__setattr__(self, "band_index", int(self.band_index))
        if not self.tau > 0:
            raise GridError("tau must be positive")
        if self.n_samples < 2:
            raise GridError("need at least two samples")
        if self.band_index < 1:
            raise GridError("band_index must be >= 1")
        if 2 * self.band_index >= self.n_samples:
            raise GridError(
                f"band_index {self.band_index} must be < N/2 = {self.n_samples / 2}"
            )

    @classmethod
    def from_osr(cls, tau: float, band_index: int, osr: float) -> "SamplingGrid":
        """Grid with oversampling ratio ``osr`` (step / critical period).

        ``N = floor(2 * band_index / osr)``; the realised ratio is reported by
        :attr:`osr` and differs from the request by less than one sample.
        """
        if not 0 < osr <= 1:
            raise GridError(f"oversampling ratio must lie in (0, 1], got {osr}")
        n = int(math.floor(2 * band_index / osr * (1 + 1e-12)))
        return cls(tau, n, band_index)

    @property
    def step(self) -> float:
        return self.tau / self.n_samples

    @property
    def omega0(self) -> float:
        return 2.0 * math.pi / self.tau

    @property
    def crit_period(self) -> float:
        return self.tau / (2.0 * self.band_index)

    @property
    def osr(self) -> float:
        return self.step / self.crit_period

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_samples) * self.step

    @property
    def indices(self) -> np.ndarray:
        """Signed DLCT indices in storage (FFT) order."""
        return np.fft.fftfreq(self.n_samples, 1.0 / self.n_samples).round().astype(np.int64)


def _frozen_array(x, dtype=complex) -> np.ndarray:
    arr = np.array(x, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ComplexSignal:
    samples: np.ndarray
    grid: SamplingGrid

    def __post_init__(self):
        object.__setattr__(self, "samples", _frozen_array(self.samples))
        if self.samples.shape != (self.grid.n_samples,):
            raise LengthMismatch(
                f"expected {self.grid.n_samples} samples, got shape {self.samples.shape}"
            )

    def __len__(self):
        return self.grid.n_samples

    def with_samples(self, samples) -> "ComplexSignal":
        return ComplexSignal(samples, self.grid)


@dataclass(frozen=True)
class SpectralCoeffs:
    """DLCT coefficients in FFT order; see :attr:`SamplingGrid.indices`."""

    coeffs: np.ndarray
    grid: SamplingGrid
    m: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _frozen_array(self.coeffs))
        if self.coeffs.shape != (self.grid.n_samples,):
            raise LengthMismatch(
                f"expected {self.grid.n_samples} coefficients, got {self.coeffs.shape}"
            )
        object.__setattr__(self, "m", self.grid.indices)

    def at(self, m) -> np.ndarray:
        """Coefficients at signed indices ``m`` (scalar or array)."""
        return self.coeffs[np.mod(m, self.grid.n_samples)]

    def band_limited(self, band_index: int) -> "SpectralCoeffs":
        return SpectralCoeffs(np.where(np.abs(self.m) <= band_index, self.coeffs, 0), self.grid)


# --- chirps and kernels -----------------------------------------------------


def chirp(params: LctParams, t) -> np.ndarray | complex:
    """``exp(j a t^2 / 2b)``."""
    out = np.exp(1j * params.chirp_rate * np.square(t))
    return out if np.ndim(out) else complex(out)


def modulate_up(signal: ComplexSignal, params: LctParams) -> ComplexSignal:
    return signal.with_samples(signal.samples * chirp(params, signal.grid.times))


def modulate_down(signal: ComplexSignal, params: LctParams) -> ComplexSignal:
    return signal.with_samples(signal.samples * np.conj(chirp(params, signal.grid.times)))


def _csqrt(z: complex) -> complex:
    # principal branch, cut on the negative real axis
    return complex(np.sqrt(complex(z)))


def kernel(params: LctParams, t, w):
    """LCT kernel evaluated at time ``t`` and frequency ``w`` (broadcasting)."""
    a, b, d = params.a, params.b, params.d
    phase = (a * np.square(t) - 2.0 * np.multiply(t, w) + d * np.square(w)) / (2.0 * b)
    return np.exp(-1j * phase) / _csqrt(-2j * math.pi * b)


def series_scale(params: LctParams, grid: SamplingGrid) -> float:
    """``sqrt(omega0 * |b|)``; the magnitude keeps the round trip exact when b < 0."""
    return math.sqrt(grid.omega0 * abs(params.b))


def conv_constant(params: LctParams) -> complex:
    """``1 / sqrt(j 2 pi b)``, the LCT convolution prefactor."""
    return 1.0 / _csqrt(2j * math.pi * params.b)


def dlct_constant(params: LctParams, grid: SamplingGrid) -> complex:
    """Scalar ``C`` such that ``dlct(g)[m] = C * phase(m) * DFT(g_up)[m]``."""
    return grid.step * series_scale(params, grid) / _csqrt(2j * math.pi * params.b)


def dlct_phase(params: LctParams, grid: SamplingGrid) -> np.ndarray:
    """``exp(j d w_m^2 / 2b)`` at ``w_m = m omega0 b`` in storage order."""
    w = grid.indices * grid.omega0 * params.b
    return np.exp(1j * params.d * w * w / (2.0 * params.b))


def _chunks(n: int, size: int):
    for start in range(0, n, size):
        yield slice(start, min(start + size, n))


def _dlct_direct(g: np.ndarray, params: LctParams, grid: SamplingGrid) -> np.ndarray:
    inv = params.inverse()
    t = grid.times
    w = grid.indices * grid.omega0 * params.b
    scale = grid.step * series_scale(params, grid)
    out = np.empty(grid.n_samples, dtype=complex)
    rows = max(1, 2**22 // grid.n_samples)
    for sl in _chunks(grid.n_samples, rows):
        out[sl] = scale * (kernel(inv, w[sl, None], t[None, :]) @ g)
    return out


def _idlct_direct(coeffs: np.ndarray, params: LctParams, grid: SamplingGrid) -> np.ndarray:
    t = grid.times
    w = grid.indices * grid.omega0 * params.b
    scale = series_scale(params, grid)
    out = np.empty(grid.n_samples, dtype=complex)
    rows = max(1, 2**22 // grid.n_samples)
    for sl in _chunks(grid.n_samples, rows):
        out[sl] = scale * (kernel(params, t[sl, None], w[None, :]) @ coeffs)
    return out


def dlct(signal: ComplexSignal, params: LctParams, method: str = "fft") -> SpectralCoeffs:
    """Discrete LCT of a sampled window.

    ``method="direct"`` evaluates the defining O(N^2) sum; ``"fft"`` uses the
    chirp / DFT / phase factorisation and agrees with it to rounding error.
    """
    grid = signal.grid
    if method == "direct":
        return SpectralCoeffs(_dlct_direct(signal.samples, params, grid), grid)
    if method != "fft":
        raise ValueError(f"unknown method {method!r}")
    up = signal.samples * chirp(params, grid.times)
    coeffs = dlct_constant(params, grid) * dlct_phase(params, grid) * np.fft.fft(up)
    return SpectralCoeffs(coeffs, grid)


def idlct(coeffs: SpectralCoeffs, params: LctParams, method: str = "fft") -> ComplexSignal:
    """Inverse DLCT summed over every stored index."""
    grid = coeffs.grid
    if method == "direct":
        return ComplexSignal(_idlct_direct(coeffs.coeffs, params, grid), grid)
    if method != "fft":
        raise ValueError(f"unknown method {method!r}")
    spec = coeffs.coeffs / (dlct_constant(params, grid) * dlct_phase(params, grid))
    up = np.fft.ifft(spec)
    return ComplexSignal(up * np.conj(chirp(params, grid.times)), grid)


def lct_convolve(
    f: ComplexSignal, g: ComplexSignal, params: LctParams, mode: str = "cyclic"
) -> ComplexSignal:
    """LCT convolution ``K m*[n] (f_up * g_up)[n]`` with ``K = 1/sqrt(j 2 pi b)``.

    ``mode="cyclic"`` wraps over the window. ``mode="causal"`` is the linear
    convolution of the two finite sequences truncated to the first N samples,
    which is what a causal filter started from rest produces.
    """
    if f.grid != g.grid:
        raise LengthMismatch("operands live on different grids")
    grid = f.grid
    m = chirp(params, grid.times)
    fu, gu = f.samples * m, g.samples * m
    n = grid.n_samples
    if mode == "cyclic":
        conv = np.fft.ifft(np.fft.fft(fu) * np.fft.fft(gu))
    elif mode == "causal":
        nfft = 1 << (2 * n - 1).bit_length()
        conv = np.fft.ifft(np.fft.fft(fu, nfft) * np.fft.fft(gu, nfft))[:n]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return ComplexSignal(conv_constant(params) * np.conj(m) * conv, grid)


# --- band-limited projection ------------------------------------------------


def raised_cosine_response(m: np.ndarray, band_index: int, rolloff: float) -> np.ndarray:
    """Frequency response equal to 1 on ``|m| <= M`` with a cosine taper to
    zero at ``|m| = M (1 + rolloff)``."""
    am = np.abs(np.asarray(m, dtype=float))
    if rolloff <= 0:
        return (am <= band_index).astype(float)
    edge = band_index * (1.0 + rolloff)
    x = np.clip((am - band_index) / (edge - band_index), 0.0, 1.0)
    return 0.5 * (1.0 + np.cos(math.pi * x))


def lowpass_reconstruct(
    samples: ComplexSignal,
    params: LctParams,
    band_index: int | None = None,
    rolloff: float = 0.0,
) -> ComplexSignal:
    """Project onto the LCT band ``|m| <= band_index``.

    With ``rolloff=0`` this is the orthogonal projection (ideal low-pass in the
    LCT domain). A positive ``rolloff`` applies a smooth raised-cosine kernel
    instead, passing the band untouched.
    """
    grid = samples.grid
    M = grid.band_index if band_index is None else int(band_index)
    spec = dlct(samples, params)
    weights = raised_cosine_response(grid.indices, M, rolloff)
    return idlct(SpectralCoeffs(spec.coeffs * weights, grid), params)


def kernel_derivative_l1(rolloff: float, n_points: int = 1 << 16, span: float = 400.0) -> float:
    """Numerical ``||d/dx phi||_L1`` for the raised-cosine kernel ``phi``.

    ``phi`` is expressed in units of the critical period, so its spectrum is 1
    on ``|xi| <= pi`` and tapers to 0 at ``pi (1 + rolloff)``. The derivative
    is evaluated by inverse FFT of ``j xi phi_hat(xi)`` on ``[-span/2, span/2]``.
    """
    if rolloff <= 0:
        raise ValueError("the ideal kernel has an unbounded derivative norm")
    dx = span / n_points
    xi = 2 * math.pi * np.fft.fftfreq(n_points, dx)
    taper = np.clip((np.abs(xi) - math.pi) / (math.pi * rolloff), 0.0, 1.0)
    phi_hat = np.where(np.abs(xi) <= math.pi, 1.0, 0.5 * (1 + np.cos(math.pi * taper)))
    phi_hat[np.abs(xi) >= math.pi * (1 + rolloff)] = 0.0
    dphi = np.fft.ifft(1j * xi * phi_hat).real / dx
    return float(np.sum(np.abs(dphi)) * dx)
