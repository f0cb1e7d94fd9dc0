"""Posterior container and the standardize-sample-diagnose fitting pipeline."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError
from .design import DesignMatrix, Standardizer
from .diagnostics import DiagnosticsReport, compute_diagnostics
from .hmc import HmcConfig, hmc_sample
from .zib import coefficient_dim, make_log_posterior

# Zeros are nudged here when fitting the plain-Beta comparison baseline.
BETA_ZERO_NUDGE = 1e-6


@dataclass(frozen=True)
class ZibPosterior:
    """Coefficient draws plus everything needed to reuse them."""

    family: str
    covariates: tuple[str, ...]           # retained covariate names, in order
    draws: np.ndarray                     # (chains, n_draws, dim)
    standardizer: Standardizer
    diagnostics: DiagnosticsReport
    hmc: HmcConfig
    seed: int

    @property
    def p(self) -> int:
        return len(self.covariates)

    @property
    def dim(self) -> int:
        return self.draws.shape[2]

    @property
    def flat_draws(self) -> np.ndarray:
        chains, n, dim = self.draws.shape
        return self.draws.reshape(chains * n, dim)

    def coefficient_medians(self) -> np.ndarray:
        return np.median(self.flat_draws, axis=0)

    def to_json_dict(self) -> dict:
        return {
            "family": self.family,
            "covariates": list(self.covariates),
            "draws": [chain.tolist() for chain in self.draws],
            "standardizer": self.standardizer.to_json_dict(),
            "diagnostics": self.diagnostics.to_json_dict(),
            "hmc": self.hmc.to_json_dict(),
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, raw: dict) -> "ZibPosterior":
        return cls(
            family=raw["family"],
            covariates=tuple(raw["covariates"]),
            draws=np.asarray(raw["draws"], dtype=float),
            standardizer=Standardizer.from_json_dict(raw["standardizer"]),
            diagnostics=DiagnosticsReport.from_json_dict(raw["diagnostics"]),
            hmc=HmcConfig.from_json_dict(raw["hmc"]),
            seed=int(raw["seed"]),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_json_dict(), handle, sort_keys=True)
            handle.write("\n")

    @classmethod
    def load(cls, path) -> "ZibPosterior":
        with open(path, encoding="utf-8") as handle:
            return cls.from_json_dict(json.load(handle))


def fit_zib(
    design: DesignMatrix,
    config: HmcConfig,
    seed: int,
    family: str = "zib",
) -> ZibPosterior:
    """Standardize covariates, run HMC on the ZIB posterior, attach diagnostics."""
    y = np.asarray(design.y, dtype=float)
    if np.any((y < 0) | (y >= 1)):
        raise InvalidInputError("targets must lie in [0, 1); clean the dataset first")
    standardizer = Standardizer.fit(design.x, design.names)
    x_std = standardizer.transform(design.x)
    if family == "beta":
        y = np.maximum(y, BETA_ZERO_NUDGE)
    log_posterior, dim = make_log_posterior(x_std, y, family)
    result = hmc_sample(log_posterior, dim, config, seed)
    diagnostics = compute_diagnostics(result.draws, result.energies, result.divergences)
    return ZibPosterior(
        family=family,
        covariates=standardizer.retained_names,
        draws=result.draws,
        standardizer=standardizer,
        diagnostics=diagnostics,
        hmc=config,
        seed=seed,
    )
