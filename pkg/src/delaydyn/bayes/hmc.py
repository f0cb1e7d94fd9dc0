"""Hamiltonian Monte Carlo with dual-averaging step size adaptation.

Plain HMC (Neal 2011, arXiv:1206.1901) with a jittered leapfrog step count,
dual averaging to a target acceptance rate (Hoffman & Gelman 2014), and a
diagonal mass matrix estimated from the second half of warmup, applied
frozen for the sampling phase. Chains use independent RNG streams spawned
from one seed and results are identical whether chains run sequentially or
on a thread pool.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from ..errors import InvalidInputError, SamplerFailureError

# Dual-averaging constants from Hoffman & Gelman (2014).
DA_GAMMA = 0.05
DA_T0 = 10.0
DA_KAPPA = 0.75

MASS_REGULARIZER = 1e-3


@dataclass(frozen=True)
class HmcConfig:
    chains: int = 4
    warmup: int = 1000
    draws: int = 1000
    target_accept: float = 0.8
    leapfrog_range: tuple[int, int] = (8, 64)
    max_energy_error: float = 1000.0
    threads: int = 1

    def __post_init__(self):
        if self.chains < 1 or self.warmup < 10 or self.draws < 1:
            raise InvalidInputError("need chains >= 1, warmup >= 10, draws >= 1")
        if not 0 < self.target_accept < 1:
            raise InvalidInputError("target_accept must lie in (0, 1)")
        lo, hi = self.leapfrog_range
        if lo < 1 or hi < lo:
            raise InvalidInputError("leapfrog_range must satisfy 1 <= min <= max")

    def to_json_dict(self) -> dict:
        return {
            "chains": self.chains,
            "warmup": self.warmup,
            "draws": self.draws,
            "target_accept": self.target_accept,
            "leapfrog_range": list(self.leapfrog_range),
            "max_energy_error": self.max_energy_error,
        }

    @classmethod
    def from_json_dict(cls, raw: dict) -> "HmcConfig":
        return cls(
            chains=int(raw["chains"]),
            warmup=int(raw["warmup"]),
            draws=int(raw["draws"]),
            target_accept=float(raw["target_accept"]),
            leapfrog_range=tuple(raw["leapfrog_range"]),
            max_energy_error=float(raw.get("max_energy_error", 1000.0)),
        )


@dataclass
class HmcResult:
    draws: np.ndarray          # (chains, draws, dim)
    energies: np.ndarray       # (chains, draws), Hamiltonian at momentum refresh
    accept_stats: np.ndarray   # (chains, draws)
    divergences: int           # sampling phase, summed over chains
    divergences_per_chain: np.ndarray
    step_sizes: np.ndarray     # per chain, frozen after warmup
    inv_mass: np.ndarray       # (chains, dim)


def _leapfrog(logp_grad, q, grad, p, eps, n_steps, inv_mass):
    q = q.copy()
    p = p + 0.5 * eps * grad
    lp = -np.inf
    for step in range(n_steps):
        q += eps * inv_mass * p
        lp, grad = logp_grad(q)
        if not np.isfinite(lp):
            return q, p, lp, grad
        p += (eps if step < n_steps - 1 else 0.5 * eps) * grad
    return q, p, lp, grad


def _transition(logp_grad, q, lp, grad, eps, n_steps, inv_mass, mom_scale, rng, max_err):
    """One HMC transition; returns the new state plus acceptance/divergence info."""
    p = rng.standard_normal(q.shape[0]) * mom_scale
    energy0 = -lp + 0.5 * np.sum(p * p * inv_mass)
    qn, pn, lpn, gradn = _leapfrog(logp_grad, q, grad, p, eps, n_steps, inv_mass)
    energy1 = -lpn + 0.5 * np.sum(pn * pn * inv_mass)
    delta = energy1 - energy0
    accept_choice = rng.uniform()  # drawn unconditionally to keep the stream aligned
    if not np.isfinite(delta) or delta > max_err:
        return q, lp, grad, 0.0, True, energy0
    accept_prob = min(1.0, float(np.exp(-delta)))
    if accept_choice < accept_prob:
        return qn, lpn, gradn, accept_prob, False, energy0
    return q, lp, grad, accept_prob, False, energy0


def _find_reasonable_eps(logp_grad, q, lp, grad, inv_mass, mom_scale, rng) -> float:
    """Initial step size heuristic: double/halve until acceptance crosses 1/2."""
    eps = 1.0
    p = rng.standard_normal(q.shape[0]) * mom_scale
    energy0 = -lp + 0.5 * np.sum(p * p * inv_mass)

    def log_ratio(eps):
        qn, pn, lpn, _ = _leapfrog(logp_grad, q, grad, p, eps, 1, inv_mass)
        energy1 = -lpn + 0.5 * np.sum(pn * pn * inv_mass)
        return energy0 - energy1 if np.isfinite(energy1) else -np.inf

    r = log_ratio(eps)
    direction = 1.0 if r > np.log(0.5) else -1.0
    for _ in range(50):
        eps *= 2.0**direction
        r = log_ratio(eps)
        if direction * r <= -direction * np.log(2.0):
            break
        if not 1e-10 < eps < 1e4:
            break
    return eps


def _regularized_variance(positions: np.ndarray, dim: int) -> np.ndarray:
    n = positions.shape[0]
    var = positions.var(axis=0, ddof=1) if n > 1 else np.ones(dim)
    var = (n / (n + 5.0)) * var + MASS_REGULARIZER * (5.0 / (n + 5.0))
    return np.where(var > 0, var, 1.0)


def _run_chain(logp_grad, dim, config: HmcConfig, seed_seq, init) -> dict:
    """Warmup in two windows, then sample.

    Window A runs with unit mass. At the midpoint an interim diagonal mass is
    taken from window A's tail and dual averaging restarts under it, so the
    frozen step size is tuned for the metric actually used when sampling; the
    sampling mass itself is estimated from the warmup second half.
    """
    rng = np.random.default_rng(seed_seq)
    lo, hi = config.leapfrog_range
    q = init.copy()
    lp, grad = logp_grad(q)
    if not np.isfinite(lp):
        raise SamplerFailureError("log posterior is not finite at the initial point")

    half = config.warmup // 2
    warm_divergences = 0
    inv_mass = np.ones(dim)
    mom_scale = np.ones(dim)
    log_eps_bar = 0.0
    for phase, length in enumerate((half, config.warmup - half)):
        eps = _find_reasonable_eps(logp_grad, q, lp, grad, inv_mass, mom_scale, rng)
        mu_da = np.log(10.0 * eps)
        h_bar = 0.0
        log_eps_bar = np.log(eps)
        positions = np.empty((length, dim))
        for m in range(1, length + 1):
            n_steps = int(rng.integers(lo, hi + 1))
            q, lp, grad, accept_stat, divergent, _ = _transition(
                logp_grad, q, lp, grad, eps, n_steps, inv_mass, mom_scale, rng,
                config.max_energy_error,
            )
            warm_divergences += divergent
            frac = 1.0 / (m + DA_T0)
            h_bar = (1.0 - frac) * h_bar + frac * (config.target_accept - accept_stat)
            log_eps = mu_da - np.sqrt(m) / DA_GAMMA * h_bar
            eta = m**-DA_KAPPA
            log_eps_bar = eta * log_eps + (1.0 - eta) * log_eps_bar
            eps = float(np.exp(log_eps))
            positions[m - 1] = q
        if phase == 0:
            interim = _regularized_variance(positions[length // 2 :], dim)
            inv_mass = interim
            mom_scale = 1.0 / np.sqrt(interim)
        else:
            inv_mass = _regularized_variance(positions, dim)
            mom_scale = 1.0 / np.sqrt(inv_mass)

    if warm_divergences >= config.warmup:
        raise SamplerFailureError(
            "every warmup transition diverged",
            diagnostics={"warmup_divergences": warm_divergences},
        )
    eps = float(np.exp(log_eps_bar))

    draws = np.empty((config.draws, dim))
    energies = np.empty(config.draws)
    accept_stats = np.empty(config.draws)
    divergences = 0
    for m in range(config.draws):
        n_steps = int(rng.integers(lo, hi + 1))
        q, lp, grad, accept_stat, divergent, energy = _transition(
            logp_grad, q, lp, grad, eps, n_steps, inv_mass, mom_scale, rng,
            config.max_energy_error,
        )
        divergences += divergent
        draws[m] = q
        energies[m] = energy
        accept_stats[m] = accept_stat
    return {
        "draws": draws,
        "energies": energies,
        "accept_stats": accept_stats,
        "divergences": divergences,
        "step_size": eps,
        "inv_mass": inv_mass,
    }


def hmc_sample(
    logp_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
    dim: int,
    config: HmcConfig,
    seed: int,
    init: np.ndarray | None = None,
) -> HmcResult:
    """Sample ``config.chains`` chains; a pure function of (target, config, seed)."""
    if init is None:
        init = np.zeros(dim)
    seqs = np.random.SeedSequence(seed).spawn(config.chains)
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(
                pool.map(lambda s: _run_chain(logp_grad, dim, config, s, init), seqs)
            )
    else:
        results = [_run_chain(logp_grad, dim, config, s, init) for s in seqs]
    return HmcResult(
        draws=np.stack([r["draws"] for r in results]),
        energies=np.stack([r["energies"] for r in results]),
        accept_stats=np.stack([r["accept_stats"] for r in results]),
        divergences=int(sum(r["divergences"] for r in results)),
        divergences_per_chain=np.array([r["divergences"] for r in results]),
        step_sizes=np.array([r["step_size"] for r in results]),
        inv_mass=np.stack([r["inv_mass"] for r in results]),
    )
