"""Experiment configuration: JSON/CSV parsing, validation and canonical emission."""

from __future__ import annotations

import json
import math
import numbers
import re
from dataclasses import asdict, dataclass, replace

from .errors import ConfigError
from .lct import LctParams, SamplingGrid
from .recovery import ESTIMATORS

FLOAT_FMT = "%.5e"
TWO_PI = 2.0 * math.pi

_TRANSFORM_RE = re.compile(r"^(ft|frft|fresnel)(?::(.+))?$")


def parse_number(text: str) -> float:
    """Float, optionally written as a multiple or fraction of ``pi``
    (``pi/3``, ``2pi``, ``0.5*pi``)."""
    s = str(text).strip().lower().replace(" ", "")
    if "pi" not in s:
        try:
            return float(s)
        except ValueError:
            raise ConfigError(f"not a number: {text!r}") from None
    m = re.fullmatch(r"([0-9.e+-]*)\*?pi(?:/([0-9.e+-]+))?", s)
    if not m:
        raise ConfigError(f"not a number: {text!r}")
    sign = {"": 1.0, "+": 1.0, "-": -1.0}
    try:
        num = sign[m.group(1)] if m.group(1) in sign else float(m.group(1))
        den = float(m.group(2)) if m.group(2) else 1.0
    except ValueError:
        raise ConfigError(f"not a number: {text!r}") from None
    return num * math.pi / den


def parse_transform(spec: str) -> LctParams:
    """``ft``, ``frft:<theta>`` or ``fresnel:<b>``."""
    m = _TRANSFORM_RE.match(str(spec).strip().lower())
    if not m:
        raise ConfigError(f"unknown transform {spec!r}; use ft, frft:<theta> or fresnel:<b>")
    kind, arg = m.groups()
    if kind == "ft":
        if arg is not None:
            raise ConfigError("ft takes no parameter")
        return LctParams.ft()
    if arg is None:
        raise ConfigError(f"{kind} needs a parameter, e.g. {kind}:1")
    value = parse_number(arg)
    try:
        return LctParams.frft(value) if kind == "frft" else LctParams.fresnel(value)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def format_transform(spec: str) -> str:
    """Validated, whitespace-free lower-case form; the argument text is kept
    verbatim so that ``frft:pi/3`` stays exact."""
    text = str(spec).strip().lower().replace(" ", "")
    parse_transform(text)
    return text


def _opt(kind):
    def conv(v):
        if v is None or (isinstance(v, str) and v.strip().lower() in ("", "none", "null")):
            return None
        return kind(v)

    return conv


def _int(v):
    if isinstance(v, bool):
        raise ConfigError(f"expected an integer, got {v!r}")
    if isinstance(v, numbers.Integral):
        return int(v)
    if isinstance(v, str):
        try:
            return int(v.strip())
        except ValueError:
            v = float(v)
    if float(v) != int(v):
        raise ConfigError(f"expected an integer, got {v!r}")
    return int(v)


def _float(v):
    if isinstance(v, str):
        return parse_number(v)
    if isinstance(v, bool):
        raise ConfigError(f"expected a number, got {v!r}")
    return float(v)


def _bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes"):
        return True
    if s in ("0", "false", "no"):
        return False
    raise ConfigError(f"expected a boolean, got {v!r}")


def _snr(v):
    if v is None:
        return None
    if isinstance(v, str) and v.strip().lower() in ("", "none", "null"):
        return None
    if isinstance(v, str) and v.strip().lower() in ("inf", "+inf"):
        return math.inf
    return _float(v)


def _seed(v):
    s = _int(v)
    if not 0 <= s < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    return s


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: signal class, acquisition and decoder settings.

    ``lam = None`` runs plain sigma-delta (no folding). ``k_folds = None`` takes
    the fold count from the true residue of each trial. With ``condition_k``
    the signal draws are rejected until the fold count equals ``k_folds``.
    ``m1 = None`` defaults to ``M + 1``. ``baseline`` additionally runs the
    time-domain decoder (Fourier transform only).
    """

    transform: str = "ft"
    M: int = 10
    h: float = 6.67e-3
    tau: float = TWO_PI
    norm: float = 1.0
    lam: float | None = None
    k_folds: int | None = None
    m1: int | None = None
    m2: int | None = None
    m3: int | None = None
    order: int = 1
    trials: int = 1
    snr_db: float | None = None
    seed: int = 0
    estimator: str = "matrix_pencil"
    real_valued: bool | None = None
    condition_k: bool = False
    baseline: bool = False

    def __post_init__(self):
        object.__setattr__(self, "transform", format_transform(self.transform))
        if self.M < 1:
            raise ConfigError("M must be >= 1")
        if not 0 < self.h <= 1:
            raise ConfigError("h must lie in (0, 1]")
        if not self.tau > 0:
            raise ConfigError("tau must be positive")
        if not self.norm > 0:
            raise ConfigError("norm must be positive")
        if self.lam is not None and not self.lam > 0:
            raise ConfigError("lambda must be positive")
        if self.order not in (1, 2):
            raise ConfigError("order must be 1 or 2")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.snr_db is not None and math.isnan(self.snr_db):
            raise ConfigError("snr_db must not be NaN")
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"estimator must be one of {ESTIMATORS}")
        if self.k_folds is not None and self.k_folds < 0:
            raise ConfigError("k_folds must be >= 0")
        if self.condition_k and (self.k_folds is None or self.lam is None):
            raise ConfigError("condition_k needs k_folds and lambda")
        if self.baseline and (self.lam is None or not self.params.is_fourier):
            raise ConfigError("the time-domain baseline needs lambda and the ft transform")
        if self.lam is not None and (self.m2 is None or self.m3 is None):
            raise ConfigError("folded experiments need m2 and m3")
        if self.lam is not None:
            m1 = self.first_index
            if not m1 > self.M:
                raise ConfigError("m1 must exceed M")
            if not m1 < self.m3 <= self.m2:
                raise ConfigError("need m1 < m3 <= m2")
            if 2 * self.m2 > self.grid.n_samples:
                raise ConfigError(f"m2 must stay below N/2 = {self.grid.n_samples / 2}")
        self.grid  # validates M against N

    @property
    def params(self) -> LctParams:
        return parse_transform(self.transform)

    @property
    def grid(self) -> SamplingGrid:
        try:
            return SamplingGrid.from_osr(self.tau, self.M, self.h)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def first_index(self) -> int:
        return self.M + 1 if self.m1 is None else self.m1

    def replace(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)

    # --- serialisation ------------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        if d["snr_db"] is not None and math.isinf(d["snr_db"]):
            d["snr_db"] = "inf"
        return {k: d[k] for k in CONFIG_KEYS}

    @classmethod
    def from_dict(cls, data: dict, strict: bool = True) -> "ExperimentConfig":
        kw = {}
        for key, value in data.items():
            if key not in _PARSERS:
                if strict:
                    raise ConfigError(f"unknown config key {key!r}")
                continue
            try:
                kw[_ATTR.get(key, key)] = _PARSERS[key](value)
            except (TypeError, ValueError, OverflowError) as exc:
                if isinstance(exc, ConfigError):
                    raise
                raise ConfigError(f"bad value for {key!r}: {value!r}") from None
        return cls(**kw)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    def to_row(self) -> dict:
        """Flat string mapping for CSV output."""
        out = {}
        for key, value in self.to_dict().items():
            if value is None:
                out[key] = ""
            elif isinstance(value, bool):
                out[key] = "true" if value else "false"
            elif isinstance(value, float):
                out[key] = FLOAT_FMT % value
            else:
                out[key] = str(value)
        return out

    @classmethod
    def from_row(cls, row: dict) -> "ExperimentConfig":
        """Parse a CSV row; result columns are ignored."""
        return cls.from_dict({k: v for k, v in row.items() if k in _PARSERS})


_PARSERS = {
    "transform": str,
    "M": _int,
    "h": _float,
    "tau": _float,
    "norm": _float,
    "lambda": _opt(_float),
    "k_folds": _opt(_int),
    "m1": _opt(_int),
    "m2": _opt(_int),
    "m3": _opt(_int),
    "order": _int,
    "trials": _int,
    "snr_db": _snr,
    "seed": _seed,
    "estimator": str,
    "real_valued": _opt(_bool),
    "condition_k": _bool,
    "baseline": _bool,
}
_ATTR = {"lambda": "lam"}
CONFIG_KEYS = tuple(_PARSERS)
