"""Transform-domain decoder for one-bit modulo samples.

Pipeline: LCT difference filter, DLCT, out-of-band exponential sequence,
fold locations (annihilating filter or matrix pencil), fold amplitudes by
least squares, residue synthesis by running sum, residue correction, LCT
low-pass projection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .errors import ConfigError, EstimatorDiverged, IllConditioned, RankDeficient
from .lct import (
    ComplexSignal,
    LctParams,
    SamplingGrid,
    chirp,
    dlct,
    dlct_constant,
    dlct_phase,
    lowpass_reconstruct,
)
from .quantizer import OneBitStream, lattice_round

ESTIMATORS = ("prony", "matrix_pencil")
COND_LIMIT = 1e12
ROOT_RADIUS_TOL = 0.5


@dataclass(frozen=True)
class RecoveryConfig:
    """Decoder settings.

    Fold locations are fitted on DLCT indices ``[m1, m2)`` and amplitudes on
    ``[m1, m3)``. ``pencil_len`` defaults to a third of the location window.
    """

    k_folds: int
    m1: int
    m2: int
    m3: int
    estimator: str = "matrix_pencil"
    pencil_len: int | None = None
    estimate_k: bool = False
    lattice_lam: float | None = None
    suspect_ratio: float = 0.5
    edge_correction: bool = True
    refine_span: int = 2
    zero_sum: bool = True

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"estimator must be one of {ESTIMATORS}")
        if self.k_folds < 0:
            raise ConfigError("k_folds must be >= 0")
        if not self.m1 < self.m3 <= self.m2:
            raise ConfigError(f"need m1 < m3 <= m2, got {self.m1}, {self.m3}, {self.m2}")
        if self.m2 - self.m1 < 2 * self.k_folds:
            raise ConfigError("location window must hold at least 2K indices")
        if self.m3 - self.m1 < self.k_folds:
            raise ConfigError("amplitude window must hold at least K indices")

    @classmethod
    def from_widths(
        cls, k_folds: int, band_index: int, n_width: int, c_width: int, **kw
    ) -> "RecoveryConfig":
        """Windows anchored at ``m1 = band_index + 1``."""
        m1 = band_index + 1
        return cls(k_folds, m1, m1 + n_width, m1 + c_width, **kw)

    def check_grid(self, grid: SamplingGrid) -> None:
        if self.m1 <= grid.band_index:
            raise ConfigError(f"m1 = {self.m1} must exceed band index {grid.band_index}")
        if 2 * self.m2 > grid.n_samples:
            raise ConfigError(f"m2 = {self.m2} must stay below N/2 = {grid.n_samples / 2}")

    @property
    def pencil(self) -> int:
        if self.pencil_len is not None:
            return int(self.pencil_len)
        return max(self.k_folds, (self.m2 - self.m1) // 3)


@dataclass(frozen=True)
class Residue:
    """Fold locations (sample indices) and complex jump amplitudes."""

    locations: np.ndarray
    amplitudes: np.ndarray

    def __post_init__(self):
        loc = np.asarray(self.locations, dtype=np.int64).ravel()
        amp = np.asarray(self.amplitudes, dtype=complex).ravel()
        if loc.shape != amp.shape:
            raise ValueError("locations and amplitudes differ in length")
        if loc.size and np.any(np.diff(loc) <= 0):
            order = np.argsort(loc)
            loc, amp = loc[order], amp[order]
            if np.any(np.diff(loc) == 0):
                raise ValueError("fold locations must be distinct")
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "amplitudes", amp)

    @property
    def k(self) -> int:
        return int(self.locations.size)

    @classmethod
    def from_sequence(cls, eps: np.ndarray, tol: float = 1e-9) -> "Residue":
        """Jumps of a piecewise-constant sequence (linear difference, ``eps[-1] = 0``)."""
        diff = np.diff(np.asarray(eps, dtype=complex), prepend=0)
        idx = np.flatnonzero(np.abs(diff) > tol)
        return cls(idx, diff[idx])


@dataclass(frozen=True)
class AnnihilatorFilter:
    taps: np.ndarray

    @property
    def roots(self) -> np.ndarray:
        return np.roots(self.taps)


@dataclass(frozen=True)
class RecoveryResult:
    signal: ComplexSignal
    residue: Residue
    corrected: ComplexSignal
    suspect: bool
    oob_ratio: float


# --- step 1-3 ---------------------------------------------------------------


def difference_filter(params: LctParams, grid: SamplingGrid) -> ComplexSignal:
    """``v_L[n] = sqrt(j 2 pi b) m*[n] (delta[n] - delta[n-1])`` (cyclic)."""
    v = np.zeros(grid.n_samples, dtype=complex)
    v[0], v[1] = 1.0, -1.0
    scale = complex(np.sqrt(2j * math.pi * params.b))
    return ComplexSignal(scale * v * np.conj(chirp(params, grid.times)), grid)


def lct_difference(q: OneBitStream | ComplexSignal, params: LctParams) -> ComplexSignal:
    """``z[n] = m*[n] (q_up[n] - q_up[n-1])`` with cyclic wrap at ``n = 0``."""
    sig = q.signal if isinstance(q, OneBitStream) else q
    m = chirp(params, sig.grid.times)
    up = sig.samples * m
    return sig.with_samples(np.conj(m) * (up - np.roll(up, 1)))


def exponential_sequence(
    z: ComplexSignal, params: LctParams, lo: int, hi: int
) -> np.ndarray:
    """Normalised DLCT of ``z`` on indices ``[lo, hi)``.

    The DLCT constant and quadratic phase are divided out and the sign is
    flipped, so that a residue with jumps ``c_k`` at ``n_k`` contributes
    ``sum_k c_k exp(-j 2 pi n_k m / N)``.
    """
    grid = z.grid
    spec = dlct(z, params)
    m = np.arange(lo, hi)
    norm = dlct_constant(params, grid) * dlct_phase(params, grid)[np.mod(m, grid.n_samples)]
    return -spec.at(m) / norm


def extract_exponential_sequence(
    z: ComplexSignal, params: LctParams, cfg: RecoveryConfig
) -> np.ndarray:
    return exponential_sequence(z, params, cfg.m1, cfg.m2)


# --- step 4: locations ------------------------------------------------------


def _rank_check(s: np.ndarray, k: int, shape) -> None:
    if k == 0:
        return
    tol = s[0] * max(shape) * np.finfo(float).eps * 10 if s.size else 0.0
    if s.size < k or s[k - 1] <= tol:
        raise RankDeficient(f"numerical rank below K = {k}")


def annihilating_filter(seq: np.ndarray, k: int) -> AnnihilatorFilter:
    """Null vector of the ``(W - K) x (K + 1)`` Toeplitz system, ``h[0] = 1``."""
    w = seq.size
    rows = np.array([seq[l - np.arange(k + 1)] for l in range(k, w)])
    _, s, vh = np.linalg.svd(rows, full_matrices=False)
    _rank_check(s, k, rows.shape)
    h = np.conj(vh[-1])
    if abs(h[0]) < 1e-14:
        raise EstimatorDiverged("annihilating filter has vanishing leading tap")
    return AnnihilatorFilter(h / h[0])


def prony_roots(seq: np.ndarray, k: int) -> np.ndarray:
    return annihilating_filter(seq, k).roots


def pencil_roots(seq: np.ndarray, k: int, pencil_len: int) -> np.ndarray:
    """Signal poles by the SVD-truncated matrix pencil.

    The Hankel matrix has ``pencil_len + 1`` columns; the ``k`` dominant left
    singular vectors span the signal subspace and their one-row shift gives
    the poles as eigenvalues.
    """
    w = seq.size
    cols = int(np.clip(pencil_len, k, w - k)) + 1
    hank = scipy.linalg.hankel(seq[: w - cols + 1], seq[w - cols :])
    u, s, _ = np.linalg.svd(hank, full_matrices=False)
    _rank_check(s, k, hank.shape)
    us = u[:, :k]
    shift = np.linalg.lstsq(us[:-1], us[1:], rcond=None)[0]
    return np.linalg.eigvals(shift)


def roots_to_locations(roots: np.ndarray, n_samples: int) -> np.ndarray:
    """``r = exp(-j 2 pi n / N)`` to integer sample indices."""
    roots = np.asarray(roots)
    if roots.size and np.max(np.abs(np.abs(roots) - 1.0)) > ROOT_RADIUS_TOL:
        raise EstimatorDiverged(f"root radii {np.abs(roots)} stray from the unit circle")
    pos = np.mod(-np.angle(roots) * n_samples / (2 * math.pi), n_samples)
    loc = np.mod(np.round(pos).astype(np.int64), n_samples)
    loc.sort()
    if np.any(np.diff(loc) == 0):
        raise EstimatorDiverged("two estimated folds collapsed onto the same sample")
    return loc


def estimate_k(seq: np.ndarray, rel: float = 1e-3) -> int:
    """Count singular values of the Hankel matrix above ``rel * s_max``."""
    w = seq.size
    cols = w // 2 + 1
    s = np.linalg.svd(scipy.linalg.hankel(seq[: w - cols + 1], seq[w - cols :]), compute_uv=False)
    return int(np.count_nonzero(s > rel * s[0])) if s.size and s[0] > 0 else 0


def estimate_locations(
    seq: np.ndarray, cfg: RecoveryConfig, n_samples: int, k: int | None = None
) -> np.ndarray:
    """Fold locations from the exponential sequence sampled on ``[m1, m2)``.

    The sequence offset ``m1`` only scales the amplitudes, so the poles are
    read off directly.
    """
    k = cfg.k_folds if k is None else k
    if k == 0:
        return np.zeros(0, dtype=np.int64)
    if cfg.estimator == "prony":
        roots = prony_roots(seq, k)
    else:
        roots = pencil_roots(seq, k, cfg.pencil)
    return roots_to_locations(roots, n_samples)


def noise_weights(m: np.ndarray, n_samples: int, order: int) -> np.ndarray:
    """Inverse of ``|1 - exp(-j 2 pi m / N)|^2``, the envelope of first-order
    shaped noise after the cyclic difference; all ones for ``order = 0``.

    The same weights are used for second-order streams: there the residual
    start-up term, not the shaped noise, dominates near the band.
    """
    if order <= 0:
        return np.ones(m.shape)
    return np.abs(1.0 - np.exp(-2j * math.pi * m / n_samples)) ** -2.0


def refine_locations(
    seq: np.ndarray,
    locations: np.ndarray,
    n_samples: int,
    m_lo: int,
    span: int = 2,
    order: int = 1,
    sweeps: int = 4,
) -> np.ndarray:
    """Snap each location to the best integer within ``+-span`` samples.

    Coordinate sweeps: with the other folds fitted and removed, each fold is
    moved to the neighbour whose exponential best matches the remainder under
    noise-whitening weights. Stops when a sweep changes nothing.
    """
    locs = np.array(locations, dtype=np.int64)
    if span <= 0 or locs.size == 0:
        return np.sort(locs)
    m = m_lo + np.arange(seq.size)
    w = noise_weights(m, n_samples, order)
    y = seq * w

    def atoms(n):
        return np.exp(-2j * math.pi * np.outer(m, n) / n_samples) * w[:, None]

    offsets = np.arange(-span, span + 1)
    for _ in range(sweeps):
        moved = False
        for i in range(locs.size):
            others = np.delete(locs, i)
            # project out the other folds; pick the candidate that removes most residual
            basis = np.linalg.qr(atoms(others))[0] if others.size else np.zeros((m.size, 0))
            rest = y - basis @ (basis.conj().T @ y)
            cand = np.mod(locs[i] + offsets, n_samples)
            cand = cand[~np.isin(cand, others)]
            a = atoms(cand)
            a = a - basis @ (basis.conj().T @ a)
            score = np.abs(a.conj().T @ rest) ** 2 / np.sum(np.abs(a) ** 2, axis=0)
            best = int(cand[np.argmax(score)])
            if best != locs[i]:
                locs[i] = best
                moved = True
        if not moved:
            break
    return np.sort(locs)


# --- step 5: amplitudes -----------------------------------------------------


def estimate_amplitudes(
    seq: np.ndarray,
    locations: np.ndarray,
    n_samples: int,
    m_lo: int,
    cond_limit: float = COND_LIMIT,
    zero_sum: bool = False,
    edge_term: bool = False,
    weights: np.ndarray | None = None,
) -> np.ndarray:
    """Least-squares amplitudes for ``seq[i] = sum_k c_k exp(-j 2 pi n_k (m_lo + i) / N)``.

    With ``zero_sum`` the fit is constrained to ``sum_k c_k = 0``, which holds
    for the cyclic jumps of any residue that is periodic over the window.
    ``edge_term`` adds a nuisance column ``1 - exp(-j 2 pi m / N)`` for the
    differenced start-up spike of a sigma-delta stream (see :func:`edge_offset`).
    """
    locations = np.asarray(locations)
    k = locations.size
    if k == 0:
        return np.zeros(0, dtype=complex)
    m = m_lo + np.arange(seq.size)
    vander = np.exp(-2j * math.pi * np.outer(m, locations) / n_samples)
    cond = np.linalg.cond(vander)
    if not np.isfinite(cond) or cond > cond_limit:
        raise IllConditioned(f"amplitude system condition number {cond:.3g}")
    if zero_sum:
        # c = B z spans the zero-sum subspace
        basis = np.vstack([np.eye(k - 1), -np.ones((1, k - 1))])
    else:
        basis = np.eye(k)
    design = vander @ basis
    if edge_term:
        design = np.column_stack([design, 1.0 - np.exp(-2j * math.pi * m / n_samples)])
    if design.shape[1] == 0:
        return np.zeros(k, dtype=complex)
    wts = weights if weights is not None else np.ones(m.size)
    sol = np.linalg.lstsq(design * wts[:, None], seq * wts, rcond=None)[0]
    return basis @ sol[: basis.shape[1]]


# --- low-pass decoding -----------------------------------------------------


def edge_offset(sig: ComplexSignal, params: LctParams, band_index: int) -> complex:
    """Start-up transient of a sigma-delta stream read as a periodic sequence.

    The encoder starts from rest, so on the periodic window ``g - q`` (up-chirped)
    equals the cyclic noise-shaping term plus a single spike at ``n = 0`` whose
    size is the final encoder state. A spike has a flat spectrum while the
    shaped noise vanishes near the band, so the spike is the mean of the
    spectrum over ``band_index < |m| <= 2 band_index``.
    """
    grid = sig.grid
    hi = min(2 * band_index, (grid.n_samples - 1) // 2)
    if hi <= band_index:
        return 0j
    spec = np.fft.fft(sig.samples * chirp(params, grid.times))
    k = np.abs(grid.indices)
    return complex(-np.mean(spec[(k > band_index) & (k <= hi)]))


def remove_edge(sig: ComplexSignal, params: LctParams, band_index: int) -> ComplexSignal:
    """Cancel the start-up spike estimated by :func:`edge_offset`."""
    c = edge_offset(sig, params, band_index)
    out = sig.samples.copy()
    out[0] += c * np.conj(chirp(params, sig.grid.times[:1]))[0]
    return sig.with_samples(out)


def sigma_delta_decode(
    q: OneBitStream | ComplexSignal,
    params: LctParams,
    band_index: int | None = None,
    edge_correction: bool = True,
    rolloff: float = 0.0,
) -> ComplexSignal:
    """Reconstruct from a sigma-delta stream by LCT low-pass projection."""
    sig = q.signal if isinstance(q, OneBitStream) else q
    M = sig.grid.band_index if band_index is None else int(band_index)
    if edge_correction:
        sig = remove_edge(sig, params, M)
    return lowpass_reconstruct(sig, params, M, rolloff=rolloff)


# --- steps 6-8 --------------------------------------------------------------


def synthesize_residue(residue: Residue, n_samples: int) -> np.ndarray:
    """Running sum of the spike train: ``eps[n] = sum_{n_k <= n} c_k``."""
    spikes = np.zeros(n_samples, dtype=complex)
    np.add.at(spikes, residue.locations, residue.amplitudes)
    return np.cumsum(spikes)


def _oob_energy(sig: ComplexSignal, params: LctParams, cfg: RecoveryConfig) -> float:
    seq = exponential_sequence(lct_difference(sig, params), params, cfg.m1, cfg.m2)
    return float(np.vdot(seq, seq).real)


def recover(
    q: OneBitStream | ComplexSignal,
    params: LctParams,
    cfg: RecoveryConfig,
    band_index: int | None = None,
) -> RecoveryResult:
    """Decode an LCT-bandlimited signal from (one-bit) modulo samples.

    Works for first- and second-order streams and for multi-bit folded samples
    passed as a plain :class:`ComplexSignal`. The folding threshold is never
    read unless ``cfg.lattice_lam`` asks for lattice snapping of amplitudes.
    """
    sig = q.signal if isinstance(q, OneBitStream) else q
    grid = sig.grid
    M = grid.band_index if band_index is None else int(band_index)
    cfg.check_grid(grid)
    n = grid.n_samples

    z = lct_difference(sig, params)
    seq = exponential_sequence(z, params, cfg.m1, cfg.m2)
    k = estimate_k(seq) if cfg.estimate_k else cfg.k_folds
    if cfg.estimate_k:
        k = min(k, (cfg.m2 - cfg.m1) // 2, cfg.m3 - cfg.m1)
    locs = estimate_locations(seq, cfg, n, k=k)
    order = q.order if isinstance(q, OneBitStream) else 0
    locs = refine_locations(seq, locs, n, cfg.m1, cfg.refine_span, order)
    amps = estimate_amplitudes(
        seq[: cfg.m3 - cfg.m1],
        locs,
        n,
        cfg.m1,
        zero_sum=cfg.zero_sum,
        edge_term=cfg.edge_correction and order > 0,
        weights=noise_weights(cfg.m1 + np.arange(cfg.m3 - cfg.m1), n, order),
    )
    if cfg.lattice_lam is not None:
        amps = lattice_round(amps, cfg.lattice_lam)
    residue = Residue(locs, amps)

    eps = synthesize_residue(residue, n)
    corrected = sig.with_samples(sig.samples + np.conj(chirp(params, grid.times)) * eps)
    estimate = sigma_delta_decode(corrected, params, M, edge_correction=cfg.edge_correction)

    before = float(np.vdot(seq, seq).real)
    after = _oob_energy(corrected, params, cfg)
    ratio = after / before if before > 0 else 0.0
    return RecoveryResult(estimate, residue, corrected, ratio > cfg.suspect_ratio, ratio)


def with_k(cfg: RecoveryConfig, k: int) -> RecoveryConfig:
    return replace(cfg, k_folds=int(k))
