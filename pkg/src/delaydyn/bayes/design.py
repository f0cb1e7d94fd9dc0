"""Design matrices and covariate standardization."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError, SchemaMismatchError


@dataclass(frozen=True)
class DesignMatrix:
    """Raw covariate rows with their targets.

    NaN entries mark values unknown at observation time (the pattern label
    before milestone 3); the standardizer imputes them with the training
    mean, which centers to exactly zero.
    """

    names: tuple[str, ...]
    x: np.ndarray            # (n, p)
    y: np.ndarray            # (n,) targets in [0, 1)
    row_ids: tuple[tuple[str, int], ...] = ()

    def __post_init__(self):
        if self.x.ndim != 2 or self.x.shape[1] != len(self.names):
            raise InvalidInputError("covariate matrix does not match names")
        if self.y.shape != (self.x.shape[0],):
            raise InvalidInputError("target length does not match rows")

    @property
    def n_rows(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True)
class Standardizer:
    """Per-covariate centering and scaling learned from the training set.

    Constant covariates (zero SD) are dropped with a warning; NaNs are
    excluded from the fitted moments and imputed with the mean on transform.
    """

    names: tuple[str, ...]
    mean: np.ndarray
    sd: np.ndarray
    retained: tuple[bool, ...]

    @classmethod
    def fit(cls, x: np.ndarray, names: tuple[str, ...]) -> "Standardizer":
        x = np.asarray(x, dtype=float)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN columns
            mean = np.nanmean(x, axis=0)
            sd = np.nanstd(x, axis=0)
        mean = np.where(np.isfinite(mean), mean, 0.0)
        sd = np.where(np.isfinite(sd), sd, 0.0)
        retained = sd > 0
        for name, keep in zip(names, retained):
            if not keep:
                warnings.warn(f"covariate {name!r} is constant; dropped", stacklevel=2)
        safe_sd = np.where(retained, sd, 1.0)
        return cls(tuple(names), mean, safe_sd, tuple(bool(r) for r in retained))

    @property
    def retained_names(self) -> tuple[str, ...]:
        return tuple(n for n, keep in zip(self.names, self.retained) if keep)

    @property
    def n_retained(self) -> int:
        return int(sum(self.retained))

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != len(self.names):
            raise SchemaMismatchError(
                f"expected {len(self.names)} covariates, got {x.shape[1]}"
            )
        filled = np.where(np.isnan(x), self.mean, x)
        z = (filled - self.mean) / self.sd
        return z[:, np.asarray(self.retained)]

    def inverse_transform(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        keep = np.asarray(self.retained)
        if z.shape[1] != keep.sum():
            raise SchemaMismatchError("standardized width does not match retained covariates")
        return z * self.sd[keep] + self.mean[keep]

    def to_json_dict(self) -> dict:
        return {
            "names": list(self.names),
            "mean": self.mean.tolist(),
            "sd": self.sd.tolist(),
            "retained": list(self.retained),
        }

    @classmethod
    def from_json_dict(cls, raw: dict) -> "Standardizer":
        return cls(
            names=tuple(raw["names"]),
            mean=np.asarray(raw["mean"], dtype=float),
            sd=np.asarray(raw["sd"], dtype=float),
            retained=tuple(bool(b) for b in raw["retained"]),
        )
