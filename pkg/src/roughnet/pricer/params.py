"""Model parameters and the strike/maturity grid."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, astuple

import numpy as np

from roughnet.errors import ValidationError

PARAM_NAMES = ("rho", "v0", "kappa", "theta", "nu", "H")

# H = 0 sits on the WIDE box boundary; the kernel needs alpha = H + 1/2 > 1/2.
HURST_FLOOR = 1e-3

DEFAULT_STRIKES = (0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4)
DEFAULT_MATURITIES = (0.6, 0.9, 1.2, 1.5, 1.8, 2.0)


@dataclass(frozen=True)
class RoughHestonParams:
    """Rough Heston parameter set, in label order (rho, v0, kappa, theta, nu, H).

    ``nu`` multiplies ``kappa`` in the diffusion term, so the effective
    vol-of-vol of the variance process is ``kappa * nu``.
    """

    rho: float
    v0: float
    kappa: float
    theta: float
    nu: float
    hurst: float

    def __post_init__(self):
        vals = astuple(self)
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError(f"non-finite parameter in {vals}")
        if not -1.0 <= self.rho <= 1.0:
            raise ValidationError(f"rho={self.rho} outside [-1, 1]")
        if self.v0 <= 0 or self.theta <= 0 or self.nu <= 0:
            raise ValidationError("v0, theta and nu must be positive")
        if self.kappa < 0:
            raise ValidationError(f"kappa={self.kappa} must be non-negative")
        if not 0.0 <= self.hurst <= 0.5:
            raise ValidationError(f"H={self.hurst} outside (0, 1/2]")

    @classmethod
    def from_array(cls, values) -> "RoughHestonParams":
        return cls(*(float(v) for v in values))

    def to_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @property
    def effective_hurst(self) -> float:
        return max(self.hurst, HURST_FLOOR)

    @property
    def clamped(self) -> bool:
        return self.hurst < HURST_FLOOR

    @property
    def alpha(self) -> float:
        return self.effective_hurst + 0.5


@dataclass(frozen=True)
class SmileGrid:
    strikes: tuple = DEFAULT_STRIKES
    maturities: tuple = DEFAULT_MATURITIES

    def __post_init__(self):
        object.__setattr__(self, "strikes", tuple(float(k) for k in self.strikes))
        object.__setattr__(self, "maturities", tuple(float(t) for t in self.maturities))
        for name, vals in (("strikes", self.strikes), ("maturities", self.maturities)):
            if not vals:
                raise ValidationError(f"empty {name}")
            arr = np.asarray(vals)
            if np.any(arr <= 0) or np.any(np.diff(arr) <= 0):
                raise ValidationError(f"{name} must be strictly increasing and positive")

    @property
    def shape(self):
        return len(self.strikes), len(self.maturities)

    @property
    def size(self):
        return len(self.strikes) * len(self.maturities)

    def cells(self):
        """(K, T) pairs in strike-major order, matching the flattened surface."""
        return [(k, t) for k in self.strikes for t in self.maturities]

    def cell_labels(self):
        return [f"K{_fmt(k)}_T{_fmt(t)}" for k, t in self.cells()]


def _fmt(x: float) -> str:
    # 1.0 -> "1.0", 0.6 -> "0.6"; shortest repr that round-trips
    return repr(float(x))


@dataclass(frozen=True)
class VolSurface:
    grid: SmileGrid
    values: np.ndarray = field(repr=False)
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise ValidationError(f"surface shape {vals.shape} != grid {self.grid.shape}")
        if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
            raise ValidationError("implied vols must be finite and positive")
        object.__setattr__(self, "values", vals)

    def flatten(self) -> np.ndarray:
        return self.values.reshape(-1)
