"""One-bit sigma-delta encoders in the LCT domain and the modulo front-end.

The encoders are serial state machines; their inner loops are compiled with
numba and operate on split real/imaginary arrays.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numba
import numpy as np

from .lct import ComplexSignal, LctParams, chirp, modulate_down, modulate_up

C0 = 0.5
DEFAULT_STATE_GUARD = 10.0
# the unit-square bound is closed: with a zero component the state sits at -1
STATE_TOL = 1e-12


class StateBoundWarning(RuntimeWarning):
    """Encoder state left its expected range (overload)."""


@dataclass(frozen=True)
class ModuloConfig:
    lam: float

    def __post_init__(self):
        object.__setattr__(self, "lam", float(self.lam))
        if not self.lam > 0:
            raise ValueError("folding threshold must be positive")


@dataclass(frozen=True)
class OneBitStream:
    """Quantiser output; each element is one of ``+-1 +- 1j`` (or ``+-1`` for
    the real Fourier encoder)."""

    signal: ComplexSignal
    order: int

    @property
    def bits(self) -> np.ndarray:
        return self.signal.samples

    @property
    def grid(self):
        return self.signal.grid


@dataclass(frozen=True)
class EncoderTrace:
    """Per-sample encoder state. ``x`` is ``None`` for first-order encodes.

    ``overload`` is set when the state left the unit square (first order, the
    boundedness guarantee failed) or exceeded the guard (second order).
    """

    u: np.ndarray
    x: np.ndarray | None
    overload: bool
    max_re: float
    max_im: float


# --- scalar nonlinearities --------------------------------------------------


def csgn(z):
    """Componentwise sign with ``sgn(0) = +1``."""
    z = np.asarray(z)
    re = np.where(np.real(z) >= 0, 1.0, -1.0)
    im = np.where(np.imag(z) >= 0, 1.0, -1.0)
    out = re + 1j * im
    return out if out.ndim else complex(out)


def _fold_real(x, lam):
    two = 2.0 * lam
    return two * (np.mod(x / two + 0.5, 1.0) - 0.5)


def modulo_fold(z, cfg: ModuloConfig | float):
    """Centred modulo ``2 lam ([[z / 2lam + 1/2]] - 1/2)`` per component.

    Real input gives real output; complex input is folded on the real and
    imaginary parts separately. Output components lie in ``[-lam, lam)``.
    """
    lam = cfg.lam if isinstance(cfg, ModuloConfig) else float(cfg)
    arr = np.asarray(z)
    if np.iscomplexobj(arr):
        out = _fold_real(arr.real, lam) + 1j * _fold_real(arr.imag, lam)
    else:
        out = _fold_real(arr.astype(float), lam)
    return out if out.ndim else out.item()


# --- encoder kernels --------------------------------------------------------


def rotation_sequence(params: LctParams, grid) -> np.ndarray:
    """``p[n] = m*[n] m[n-1] = exp(-j a (2n - 1) step^2 / 2b)``."""
    n = np.arange(grid.n_samples)
    return np.exp(-1j * params.chirp_rate * (2 * n - 1) * grid.step**2)


@numba.njit(cache=True)
def _sdq1_loop(gr, gi, pr, pi):
    n = gr.shape[0]
    qr = np.empty(n)
    qi = np.empty(n)
    ur = np.empty(n)
    ui = np.empty(n)
    a = 0.0
    b = 0.0
    for k in range(n):
        # rotated previous state plus input
        wr = pr[k] * a - pi[k] * b + gr[k]
        wi = pr[k] * b + pi[k] * a + gi[k]
        sr = 1.0 if wr >= 0.0 else -1.0
        si = 1.0 if wi >= 0.0 else -1.0
        qr[k] = sr
        qi[k] = si
        a = wr - sr
        b = wi - si
        ur[k] = a
        ui[k] = b
    return qr, qi, ur, ui


@numba.njit(cache=True)
def _sdq2_loop(gr, gi, pr, pi, c0):
    n = gr.shape[0]
    qr = np.empty(n)
    qi = np.empty(n)
    ur = np.empty(n)
    ui = np.empty(n)
    xr = np.empty(n)
    xi = np.empty(n)
    xa = 0.0
    xb = 0.0
    ua = 0.0
    ub = 0.0
    for k in range(n):
        txr = pr[k] * xa - pi[k] * xb
        txi = pr[k] * xb + pi[k] * xa
        tur = pr[k] * ua - pi[k] * ub
        tui = pr[k] * ub + pi[k] * ua
        vr = c0 * txr + tur + gr[k]
        vi = c0 * txi + tui + gi[k]
        sr = 1.0 if vr >= 0.0 else -1.0
        si = 1.0 if vi >= 0.0 else -1.0
        qr[k] = sr
        qi[k] = si
        xa = gr[k] - sr + txr
        xb = gi[k] - si + txi
        ua = xa + tur
        ub = xb + tui
        xr[k] = xa
        xi[k] = xb
        ur[k] = ua
        ui[k] = ub
    return qr, qi, ur, ui, xr, xi


@numba.njit(cache=True)
def _sdq_real_loop(g):
    n = g.shape[0]
    q = np.empty(n)
    u = np.empty(n)
    a = 0.0
    for k in range(n):
        w = a + g[k]
        s = 1.0 if w >= 0.0 else -1.0
        q[k] = s
        a = w - s
        u[k] = a
    return q, u


def _split(z: np.ndarray):
    z = np.ascontiguousarray(z, dtype=complex)
    return np.ascontiguousarray(z.real), np.ascontiguousarray(z.imag)


def lsdq1_encode(signal: ComplexSignal, params: LctParams, warn: bool = True):
    """First-order LCT-domain sigma-delta encoder.

    ``u[n] = g[n] - q[n] + p[n] u[n-1]`` and ``q[n] = csgn(p[n] u[n-1] + g[n])``
    with ``u[-1] = 0``. Returns ``(OneBitStream, EncoderTrace)``.
    """
    gr, gi = _split(signal.samples)
    pr, pi = _split(rotation_sequence(params, signal.grid))
    qr, qi, ur, ui = _sdq1_loop(gr, gi, pr, pi)
    u = ur + 1j * ui
    max_re, max_im = float(np.max(np.abs(ur))), float(np.max(np.abs(ui)))
    overload = max_re > 1.0 + STATE_TOL or max_im > 1.0 + STATE_TOL
    if overload and warn:
        warnings.warn(
            f"first-order state left the unit square (max |Re u| = {max_re:.4g}, "
            f"max |Im u| = {max_im:.4g})",
            StateBoundWarning,
            stacklevel=2,
        )
    stream = OneBitStream(signal.with_samples(qr + 1j * qi), order=1)
    return stream, EncoderTrace(u, None, overload, max_re, max_im)


def lsdq2_encode(
    signal: ComplexSignal,
    params: LctParams,
    guard: float = DEFAULT_STATE_GUARD,
    warn: bool = True,
):
    """Second-order LCT-domain sigma-delta encoder (``c0 = 1/2``).

    No stability proof exists for this scheme; if ``|Re x|`` or ``|Im x|``
    exceeds ``guard`` the trace is flagged and a warning is emitted.
    """
    gr, gi = _split(signal.samples)
    pr, pi = _split(rotation_sequence(params, signal.grid))
    qr, qi, ur, ui, xr, xi = _sdq2_loop(gr, gi, pr, pi, C0)
    max_re, max_im = float(np.max(np.abs(xr))), float(np.max(np.abs(xi)))
    overload = max_re > guard or max_im > guard
    if overload and warn:
        warnings.warn(
            f"second-order state exceeded guard {guard} "
            f"(max |Re x| = {max_re:.4g}, max |Im x| = {max_im:.4g})",
            StateBoundWarning,
            stacklevel=2,
        )
    stream = OneBitStream(signal.with_samples(qr + 1j * qi), order=2)
    trace = EncoderTrace(ur + 1j * ui, xr + 1j * xi, overload, max_re, max_im)
    return stream, trace


def ft_sdq_encode(signal: ComplexSignal):
    """Classical real one-bit sigma-delta: ``q[n] = sgn(u[n-1] + g[n])``.

    Returns ``(OneBitStream, u)``; the stream holds real ``+-1`` values.
    """
    g = np.asarray(signal.samples)
    if np.any(np.abs(g.imag) > 0):
        raise ValueError("ft_sdq_encode expects a real-valued input")
    q, u = _sdq_real_loop(np.ascontiguousarray(g.real))
    return OneBitStream(signal.with_samples(q), order=1), u


def encode(signal: ComplexSignal, params: LctParams, order: int, warn: bool = True):
    if order == 1:
        return lsdq1_encode(signal, params, warn=warn)
    if order == 2:
        return lsdq2_encode(signal, params, warn=warn)
    raise ValueError(f"order must be 1 or 2, got {order}")


# --- modulo front-end -------------------------------------------------------


def fold_signal(g: ComplexSignal, params: LctParams, cfg: ModuloConfig) -> ComplexSignal:
    """Chirp up, fold, chirp down: the analogue stage ahead of the quantiser."""
    up = modulate_up(g, params)
    return modulate_down(up.with_samples(modulo_fold(up.samples, cfg)), params)


def msdq_front_end(
    g: ComplexSignal,
    params: LctParams,
    cfg: ModuloConfig,
    order: int = 1,
    warn: bool = True,
):
    """Modulo LCT sigma-delta acquisition.

    The up-chirped input is folded into ``[-lam, lam)`` per component, chirped
    back down and handed to the order-``order`` encoder. Returns
    ``(OneBitStream, EncoderTrace)``.
    """
    folded = fold_signal(g, params, cfg)
    return encode(folded, params, order, warn=warn)


def true_residue(g: ComplexSignal, params: LctParams, cfg: ModuloConfig) -> np.ndarray:
    """``eps = g_up - fold(g_up)`` in the up-chirped domain."""
    up = g.samples * chirp(params, g.grid.times)
    return up - modulo_fold(up, cfg)


def lattice_round(values: np.ndarray, lam: float) -> np.ndarray:
    """Snap complex values to the ``2 lam (Z + jZ)`` lattice."""
    two = 2.0 * lam
    return two * (np.round(np.real(values) / two) + 1j * np.round(np.imag(values) / two))


def fold_count(g: ComplexSignal, params: LctParams, cfg: ModuloConfig) -> int:
    """Number of samples at which the residue jumps (cyclic first difference)."""
    eps = lattice_round(true_residue(g, params, cfg), cfg.lam)
    return int(np.count_nonzero(eps - np.roll(eps, 1)))


def lemma_margin(params: LctParams, grid) -> float:
    """Largest per-step rotation angle of the encoder state, in radians."""
    n = grid.n_samples
    return abs(params.chirp_rate) * (2 * n - 1) * grid.step**2 if n else 0.0


__all__ = [
    "C0",
    "EncoderTrace",
    "ModuloConfig",
    "OneBitStream",
    "StateBoundWarning",
    "csgn",
    "encode",
    "fold_count",
    "fold_signal",
    "ft_sdq_encode",
    "lattice_round",
    "lemma_margin",
    "lsdq1_encode",
    "lsdq2_encode",
    "modulo_fold",
    "msdq_front_end",
    "rotation_sequence",
    "true_residue",
]

