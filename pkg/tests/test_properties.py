import math

import numpy as np
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lctusf import ComplexSignal, LctParams, SamplingGrid, dlct, idlct, mse
from lctusf.config import ExperimentConfig
from lctusf.lct import chirp, modulate_down, modulate_up
from lctusf.quantizer import csgn, ft_sdq_encode, lattice_round, lsdq1_encode, modulo_fold
from lctusf.recovery import RecoveryConfig, Residue, estimate_locations, synthesize_residue

finite = st.floats(-1e3, 1e3, allow_nan=False)
thetas = st.floats(0.05, math.pi - 0.05)
params = st.one_of(
    st.just(LctParams.ft()),
    thetas.map(LctParams.frft),
    st.floats(0.2, 5.0).map(LctParams.fresnel),
)


def complex_arrays(n, bound):
    part = arrays(np.float64, n, elements=st.floats(-bound, bound))
    return st.tuples(part, part).map(lambda ri: ri[0] + 1j * ri[1])


@given(finite, st.floats(0.05, 10.0))
def test_fold_range_and_lattice(x, lam):
    y = modulo_fold(x, lam)
    assert -lam - 1e-9 <= y < lam + 1e-9
    k = (x - y) / (2 * lam)
    assert abs(k - round(k)) < 1e-6


@given(finite, finite)
def test_csgn_alphabet(re, im):
    s = csgn(complex(re, im))
    assert s in (1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j)
    assert (s.real >= 0) == (re >= 0) and (s.imag >= 0) == (im >= 0)


@given(params, complex_arrays(64, 5.0))
def test_chirp_modulation_inverts(p, x):
    grid = SamplingGrid(2 * math.pi, 64, 3)
    g = ComplexSignal(x, grid)
    assert np.allclose(np.abs(chirp(p, grid.times)), 1.0)
    back = modulate_down(modulate_up(g, p), p)
    np.testing.assert_allclose(back.samples, x, atol=1e-12)


@given(params, complex_arrays(96, 2.0))
def test_dlct_round_trip(p, x):
    grid = SamplingGrid(2 * math.pi, 96, 5)
    g = ComplexSignal(x, grid)
    np.testing.assert_allclose(idlct(dlct(g, p), p).samples, x, atol=1e-11)


@given(complex_arrays(20, 10.0), complex_arrays(20, 10.0))
def test_mse_symmetric_nonnegative(a, b):
    assert mse(a, b) == mse(b, a) >= 0
    assert mse(a, a) == 0


@given(arrays(np.float64, 200, elements=st.floats(-1.0, 1.0)))
def test_real_encoder_state_bounded(x):
    grid = SamplingGrid(1.0, 200, 1)
    _, u = ft_sdq_encode(ComplexSignal(x, grid))
    assert np.max(np.abs(u)) <= 1.0


@given(complex_arrays(200, 1.0))
def test_complex_encoder_state_bounded_without_rotation(x):
    grid = SamplingGrid(1.0, 200, 1)
    _, tr = lsdq1_encode(ComplexSignal(x, grid), LctParams.ft(), warn=False)
    assert tr.max_re <= 1.0 and tr.max_im <= 1.0 and not tr.overload


@given(
    st.lists(st.integers(0, 127), min_size=1, max_size=6, unique=True),
    st.lists(st.tuples(st.integers(-3, 3), st.integers(-3, 3)), min_size=6, max_size=6),
)
def test_synthesis_and_differencing_invert(locs, amps):
    amps = [complex(a, b) for a, b in amps[: len(locs)]]
    assume(all(a != 0 for a in amps))
    r = Residue(locs, amps)
    back = Residue.from_sequence(synthesize_residue(r, 128))
    np.testing.assert_array_equal(back.locations, r.locations)
    np.testing.assert_allclose(back.amplitudes, r.amplitudes, atol=1e-12)


@given(complex_arrays(50, 20.0), st.floats(0.1, 3.0))
def test_fold_plus_residue_is_identity(x, lam):
    eps = x - modulo_fold(x, lam)
    np.testing.assert_allclose(lattice_round(eps, lam), eps, atol=1e-9)
    np.testing.assert_allclose(modulo_fold(x, lam) + eps, x, atol=1e-12)


@given(
    st.lists(st.integers(0, 399), min_size=1, max_size=4, unique=True),
    st.lists(st.floats(0.5, 3.0), min_size=4, max_size=4),
    st.lists(st.floats(-math.pi, math.pi), min_size=4, max_size=4),
)
def test_estimators_agree_on_exponential_sums(locs, mags, phases):
    locs = sorted(locs)
    gaps = np.diff(locs + [locs[0] + 400])
    assume(np.min(gaps) >= 3)
    k = len(locs)
    amps = np.array(mags[:k]) * np.exp(1j * np.array(phases[:k]))
    m = np.arange(11, 11 + 4 * k + 20)
    seq = np.exp(-2j * math.pi * np.outer(m, locs) / 400) @ amps
    for est in ("prony", "matrix_pencil"):
        cfg = RecoveryConfig(k, 11, int(m[-1]) + 1, 11 + 2 * k + 5, estimator=est)
        assert estimate_locations(seq, cfg, 400).tolist() == locs


configs = st.builds(
    ExperimentConfig,
    transform=st.sampled_from(["ft", "frft:pi/3", "fresnel:2", "frft:0.25"]),
    M=st.integers(2, 20),
    h=st.floats(1e-3, 0.05),
    norm=st.floats(0.1, 8.0),
    order=st.sampled_from([1, 2]),
    trials=st.integers(1, 50),
    snr_db=st.one_of(st.none(), st.floats(-10, 60), st.just(math.inf)),
    seed=st.integers(0, 2**64 - 1),
    estimator=st.sampled_from(["prony", "matrix_pencil"]),
    real_valued=st.sampled_from([None, False]),
)


@given(configs)
def test_config_row_round_trip(cfg):
    row = cfg.to_row()
    again = ExperimentConfig.from_row(row)
    assert again.to_row() == row
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg
