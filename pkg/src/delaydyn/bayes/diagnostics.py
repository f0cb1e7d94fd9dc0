"""Convergence diagnostics: rank-normalized split R-hat, bulk ESS, E-BFMI.

Follows Vehtari et al. (2021), "Rank-normalization, folding, and
localization", and Geyer's initial monotone sequence for the
autocorrelation sum. Pass thresholds: R-hat < 1.01, ESS ratio > 0.2,
zero divergences, E-BFMI > 0.2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from ..errors import InsufficientDataError

RHAT_THRESHOLD = 1.01
ESS_RATIO_THRESHOLD = 0.2
EBFMI_THRESHOLD = 0.2
MIN_DRAWS = 100


def _split_chains(x: np.ndarray) -> np.ndarray:
    """(chains, draws) -> (2*chains, draws//2), dropping an odd trailing draw."""
    chains, draws = x.shape
    half = draws // 2
    return x[:, : 2 * half].reshape(chains * 2, half)


def _rank_normalize(x: np.ndarray) -> np.ndarray:
    """Fractional ranks over the pooled draws mapped through the normal quantile."""
    ranks = stats.rankdata(x, method="average").reshape(x.shape)
    size = x.size
    return special.ndtri((ranks - 3.0 / 8.0) / (size - 2.0 * 3.0 / 8.0 + 1.0))


def _basic_rhat(chains: np.ndarray) -> float:
    m, n = chains.shape
    chain_means = chains.mean(axis=1)
    within = chains.var(axis=1, ddof=1).mean()
    between_over_n = chain_means.var(ddof=1)
    var_plus = (n - 1) / n * within + between_over_n
    if within == 0:
        return 1.0
    return float(np.sqrt(var_plus / within))


def split_rhat(x: np.ndarray) -> float:
    """Rank-normalized split R-hat of one parameter's (chains, draws) array."""
    return _basic_rhat(_rank_normalize(_split_chains(np.asarray(x, dtype=float))))


def _autocovariance(chains: np.ndarray) -> np.ndarray:
    """Per-chain autocovariance via FFT, biased normalization (divided by n)."""
    m, n = chains.shape
    centered = chains - chains.mean(axis=1, keepdims=True)
    size = 2 ** int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(centered, size, axis=1)
    acov = np.fft.irfft(f * np.conj(f), size, axis=1)[:, :n].real
    return acov / n


def ess_bulk(x: np.ndarray) -> float:
    """Bulk effective sample size of one parameter's (chains, draws) array."""
    chains = _rank_normalize(_split_chains(np.asarray(x, dtype=float)))
    m, n = chains.shape
    if np.allclose(chains, chains.flat[0]):
        return float(m * n)
    acov = _autocovariance(chains)
    within = acov[:, 0].mean() * n / (n - 1.0)
    mean_acov = acov.mean(axis=0)
    var_plus = within * (n - 1.0) / n + chains.mean(axis=1).var(ddof=1)
    rho = 1.0 - (within - mean_acov) / var_plus

    # Geyer initial monotone sequence on paired sums.
    max_pairs = n // 2
    tau = 0.0
    prev_pair = np.inf
    for k in range(max_pairs):
        pair = rho[2 * k] + (rho[2 * k + 1] if 2 * k + 1 < n else 0.0)
        if pair <= 0 and k > 0:
            break
        pair = min(pair, prev_pair)
        tau += pair
        prev_pair = pair
    tau = max(2.0 * tau - 1.0, 1.0 / np.log10(m * n + 10.0))
    return float(m * n / tau)


def ebfmi(energies: np.ndarray) -> np.ndarray:
    """Energy Bayesian fraction of missing information, one value per chain."""
    energies = np.atleast_2d(np.asarray(energies, dtype=float))
    num = np.sum(np.diff(energies, axis=1) ** 2, axis=1)
    den = np.sum((energies - energies.mean(axis=1, keepdims=True)) ** 2, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = num / den
    return np.where(den > 0, out, np.nan)


@dataclass(frozen=True)
class DiagnosticsReport:
    rhat: np.ndarray           # per parameter
    ess: np.ndarray            # per parameter, absolute
    ess_ratio: np.ndarray      # per parameter, ess / (chains * draws)
    divergences: int
    ebfmi: np.ndarray          # per chain
    rhat_ok: bool
    ess_ok: bool
    divergences_ok: bool
    ebfmi_ok: bool

    @property
    def all_ok(self) -> bool:
        return self.rhat_ok and self.ess_ok and self.divergences_ok and self.ebfmi_ok

    def to_json_dict(self) -> dict:
        return {
            "rhat": self.rhat.tolist(),
            "ess": self.ess.tolist(),
            "ess_ratio": self.ess_ratio.tolist(),
            "divergences": self.divergences,
            "ebfmi": self.ebfmi.tolist(),
            "rhat_ok": self.rhat_ok,
            "ess_ok": self.ess_ok,
            "divergences_ok": self.divergences_ok,
            "ebfmi_ok": self.ebfmi_ok,
            "all_ok": self.all_ok,
        }

    @classmethod
    def from_json_dict(cls, raw: dict) -> "DiagnosticsReport":
        return cls(
            rhat=np.asarray(raw["rhat"], dtype=float),
            ess=np.asarray(raw["ess"], dtype=float),
            ess_ratio=np.asarray(raw["ess_ratio"], dtype=float),
            divergences=int(raw["divergences"]),
            ebfmi=np.asarray(raw["ebfmi"], dtype=float),
            rhat_ok=bool(raw["rhat_ok"]),
            ess_ok=bool(raw["ess_ok"]),
            divergences_ok=bool(raw["divergences_ok"]),
            ebfmi_ok=bool(raw["ebfmi_ok"]),
        )


def compute_diagnostics(
    draws: np.ndarray, energies: np.ndarray, divergences: int
) -> DiagnosticsReport:
    """Full report from raw (chains, draws, dim) samples and per-chain energies."""
    draws = np.asarray(draws, dtype=float)
    if draws.ndim != 3:
        raise InsufficientDataError("expected draws of shape (chains, draws, dim)")
    chains, n, dim = draws.shape
    if chains < 2:
        raise InsufficientDataError("diagnostics need at least 2 chains")
    if n < MIN_DRAWS:
        raise InsufficientDataError(f"diagnostics need at least {MIN_DRAWS} draws per chain")
    rhat = np.array([split_rhat(draws[:, :, d]) for d in range(dim)])
    ess = np.array([ess_bulk(draws[:, :, d]) for d in range(dim)])
    ratio = ess / (chains * n)
    bfmi = ebfmi(energies)
    return DiagnosticsReport(
        rhat=rhat,
        ess=ess,
        ess_ratio=ratio,
        divergences=int(divergences),
        ebfmi=bfmi,
        rhat_ok=bool(np.all(rhat < RHAT_THRESHOLD)),
        ess_ok=bool(np.all(ratio > ESS_RATIO_THRESHOLD)),
        divergences_ok=divergences == 0,
        ebfmi_ok=bool(np.all(bfmi > EBFMI_THRESHOLD)),
    )
