"""One-bit sigma-delta sampling and modulo recovery in the linear canonical transform domain."""

from .errors import (
    ConfigError,
    DegenerateB,
    DeterminantError,
    EstimatorDiverged,
    GridError,
    IllConditioned,
    LctError,
    LengthMismatch,
    RankDeficient,
)
from .lct import (
    ComplexSignal,
    LctParams,
    SamplingGrid,
    SpectralCoeffs,
    chirp,
    dlct,
    idlct,
    lct_convolve,
    lowpass_reconstruct,
    make_params,
    modulate_down,
    modulate_up,
)
from .quantizer import (
    EncoderTrace,
    ModuloConfig,
    OneBitStream,
    csgn,
    ft_sdq_encode,
    lsdq1_encode,
    lsdq2_encode,
    modulo_fold,
    msdq_front_end,
)
from .recovery import RecoveryConfig, Residue, recover, synthesize_residue
from .simlab import NoiseSpec, SignalSpec, add_awgn, avg_mse, gen_bandlimited, mse

__version__ = "0.1.0"
