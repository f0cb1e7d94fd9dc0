"""Zero-inflated Beta likelihood, priors, and the analytic-gradient log posterior.

The outcome lives on {0} u (0,1): a point mass at zero with probability
alpha, otherwise Beta in the mean-precision parameterization (a = mu*phi,
b = (1-mu)*phi). Links: logit for mu and alpha, log for phi. Priors are
Normal(0,1) on the mu and alpha coefficients and Cauchy(0,1) on the phi
coefficients; there are no intercepts, so with centered covariates the
implied baseline is mu = alpha = 1/2 and phi = 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

from ..errors import InvalidInputError

LOG_2PI = float(np.log(2.0 * np.pi))
LOG_PI = float(np.log(np.pi))

# Sampling-only guards: extreme prior draws (Cauchy tails) are clipped so the
# Beta sampler stays in a representable range; never applied to density math.
PHI_CLIP = (1e-6, 1e6)
UNIT_EPS = 1e-12

FAMILIES = ("zib", "beta")


def _log_sigmoid(x: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -x)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return special.expit(x)


def zib_logpdf(y, mu, phi, alpha):
    """Log density of the zero-inflated Beta at y in [0, 1).

    f(0) = alpha and f(y) = (1-alpha) * Beta(y; mu*phi, (1-mu)*phi) on (0,1).
    Scalar or broadcastable array arguments.
    """
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    phi = np.asarray(phi, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if np.any((y < 0) | (y >= 1)):
        raise InvalidInputError("y must lie in [0, 1)")
    if np.any((mu <= 0) | (mu >= 1)) or np.any(phi <= 0) or np.any((alpha < 0) | (alpha >= 1)):
        raise InvalidInputError("require mu in (0,1), phi > 0, alpha in [0,1)")
    a = mu * phi
    b = (1.0 - mu) * phi
    with np.errstate(divide="ignore"):
        log_alpha = np.log(alpha)
        beta_part = (
            np.log1p(-alpha)
            + (a - 1.0) * np.log(np.where(y > 0, y, 0.5))
            + (b - 1.0) * np.log1p(-np.where(y > 0, y, 0.5))
            - special.betaln(a, b)
        )
    out = np.where(y == 0, log_alpha, beta_part)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class ZibCoefficients:
    """Coefficient blocks for the three linear predictors."""

    beta_mu: np.ndarray
    beta_phi: np.ndarray
    beta_alpha: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([self.beta_mu, self.beta_phi, self.beta_alpha])

    @classmethod
    def from_flat(cls, theta: np.ndarray, p: int) -> "ZibCoefficients":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (3 * p,):
            raise InvalidInputError(f"expected {3 * p} coefficients, got {theta.shape}")
        return cls(theta[:p].copy(), theta[p : 2 * p].copy(), theta[2 * p :].copy())


def coefficient_dim(p: int, family: str = "zib") -> int:
    if family not in FAMILIES:
        raise InvalidInputError(f"family must be one of {FAMILIES}")
    return 3 * p if family == "zib" else 2 * p


def make_log_posterior(
    x: np.ndarray, y: np.ndarray, family: str = "zib"
) -> tuple[Callable[[np.ndarray], tuple[float, np.ndarray]], int]:
    """Build theta -> (log posterior, gradient) for standardized rows.

    The gradient is analytic (digamma for the Beta terms). Non-finite
    evaluations (overflow far in the tails) return -inf with a zero
    gradient, which the sampler treats as a divergent proposal.
    """
    if family not in FAMILIES:
        raise InvalidInputError(f"family must be one of {FAMILIES}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise InvalidInputError("x must be (n, p) with matching y")
    if np.any((y < 0) | (y >= 1)):
        raise InvalidInputError("targets must lie in [0, 1)")
    if family == "beta" and np.any(y == 0):
        raise InvalidInputError("plain Beta family requires strictly positive targets")
    p = x.shape[1]
    dim = coefficient_dim(p, family)
    is_zero = y == 0
    x_pos = np.ascontiguousarray(x[~is_zero])
    x_zero = np.ascontiguousarray(x[is_zero])
    log_y = np.log(y[~is_zero])
    log_1my = np.log1p(-y[~is_zero])
    logit_y = log_y - log_1my

    def log_posterior(theta: np.ndarray) -> tuple[float, np.ndarray]:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (dim,):
            raise InvalidInputError(f"expected {dim} coefficients, got {theta.shape}")
        b_mu = theta[:p]
        b_phi = theta[p : 2 * p]
        grad = np.zeros(dim)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            eta_mu = x_pos @ b_mu
            eta_phi = x_pos @ b_phi
            mu = _sigmoid(eta_mu)
            om = _sigmoid(-eta_mu)
            phi = np.exp(eta_phi)
            a = mu * phi
            b = om * phi
            dig_a = special.digamma(a)
            dig_b = special.digamma(b)
            dig_ab = special.digamma(phi)
            loglik = np.sum(
                (a - 1.0) * log_y + (b - 1.0) * log_1my - special.betaln(a, b)
            )
            w_mu = phi * mu * om * (logit_y - dig_a + dig_b)
            w_phi = a * (log_y - dig_a + dig_ab) + b * (log_1my - dig_b + dig_ab)
            grad[:p] = x_pos.T @ w_mu
            grad[p : 2 * p] = x_pos.T @ w_phi

            if family == "zib":
                b_alpha = theta[2 * p :]
                eta_a_pos = x_pos @ b_alpha
                eta_a_zero = x_zero @ b_alpha
                loglik += np.sum(_log_sigmoid(eta_a_zero))
                loglik += np.sum(_log_sigmoid(-eta_a_pos))
                grad[2 * p :] = x_zero.T @ _sigmoid(-eta_a_zero) - x_pos.T @ _sigmoid(
                    eta_a_pos
                )

            # Priors: Normal(0,1) on mu (and alpha) blocks, Cauchy(0,1) on phi.
            log_prior = -0.5 * np.sum(b_mu**2) - 0.5 * p * LOG_2PI
            log_prior += -np.sum(np.log1p(b_phi**2)) - p * LOG_PI
            grad[:p] += -b_mu
            grad[p : 2 * p] += -2.0 * b_phi / (1.0 + b_phi**2)
            if family == "zib":
                log_prior += -0.5 * np.sum(b_alpha**2) - 0.5 * p * LOG_2PI
                grad[2 * p :] += -b_alpha
            value = float(loglik + log_prior)
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            return -np.inf, np.zeros(dim)
        return value, grad

    return log_posterior, dim


def links(x: np.ndarray, theta: np.ndarray, family: str = "zib"):
    """Map coefficient draws through the links: (mu, phi, alpha) per (draw, row).

    ``theta`` is (n_draws, dim); returns arrays of shape (n_draws, n_rows).
    For the plain Beta family alpha is identically zero.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    p = x.shape[1]
    if theta.shape[1] != coefficient_dim(p, family):
        raise InvalidInputError("coefficient dimension does not match covariates")
    eta_mu = theta[:, :p] @ x.T
    eta_phi = theta[:, p : 2 * p] @ x.T
    mu = _sigmoid(eta_mu)
    with np.errstate(over="ignore"):
        phi = np.exp(eta_phi)
    if family == "zib":
        alpha = _sigmoid(theta[:, 2 * p :] @ x.T)
    else:
        alpha = np.zeros_like(mu)
    return mu, phi, alpha


def sample_zib(rng: np.random.Generator, mu, phi, alpha) -> np.ndarray:
    """Draw one outcome per (mu, phi, alpha) triple; clipped to [0, 1)."""
    mu = np.clip(np.asarray(mu, dtype=float), UNIT_EPS, 1.0 - UNIT_EPS)
    phi = np.clip(np.asarray(phi, dtype=float), *PHI_CLIP)
    alpha = np.asarray(alpha, dtype=float)
    a = np.clip(mu * phi, 1e-6, 1e6)
    b = np.clip((1.0 - mu) * phi, 1e-6, 1e6)
    values = rng.beta(a, b)
    values = np.clip(values, UNIT_EPS, 1.0 - UNIT_EPS)
    zero = rng.uniform(size=np.shape(values)) < alpha
    return np.where(zero, 0.0, values)
