"""Variational-Bayes allocation of signals to decoders.

The generative model puts a Dirichlet(theta0) prior on the mixing weights,
a Gamma(nu0, lambda0) prior (shape, rate) on a shared precision ``beta``, and
a Gaussian likelihood per decoder::

    p(X^n | y_nk = 1, beta) = (beta / pi)^(T_n D / 2) * exp(-beta * E[n, k])

where ``E[n, k]`` is the squared reconstruction error of signal ``n`` under
decoder ``k``.  The mean-field posterior ``q(Y) q(alpha) q(beta)`` is updated
by alternating closed-form E and M steps, each of which cannot increase the
variational free energy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DataError, InvalidResponsibilitiesError

LOG_PI = math.log(math.pi)

# Bernoulli-number coefficients of the asymptotic digamma series in 1/x^2.
_DIGAMMA_ASYMPTOTIC = (
    -1.0 / 12,
    1.0 / 120,
    -1.0 / 252,
    1.0 / 240,
    -1.0 / 132,
    691.0 / 32760,
    -1.0 / 12,
)


def digamma(x):
    """Digamma function for positive arguments (scalar or array).

    Shifts the argument to ``x >= 6`` with ``psi(x) = psi(x + 1) - 1/x`` and
    then sums the asymptotic expansion.

    Raises
    ------
    ValueError
        If any argument is not strictly positive.
    """
    scalar = np.ndim(x) == 0
    x = np.array(x, dtype=np.float64, ndmin=1)
    if not np.all(x > 0):
        raise ValueError("digamma is only defined here for x > 0")
    acc = np.zeros_like(x)
    x = x.copy()
    small = x < 6.0
    while np.any(small):
        acc[small] -= 1.0 / x[small]
        x[small] += 1.0
        small = x < 6.0
    inv2 = 1.0 / (x * x)
    series = np.zeros_like(x)
    for coef in reversed(_DIGAMMA_ASYMPTOTIC):
        series = (series + coef) * inv2
    out = acc + np.log(x) - 0.5 / x + series
    return float(out[0]) if scalar else out


def expected_log_beta(nu, lam):
    """``E[log beta]`` under Gamma(shape=nu, rate=lam): ``psi(nu) - log(lam)``."""
    if not (np.all(np.asarray(nu) > 0) and np.all(np.asarray(lam) > 0)):
        raise ValueError("nu and lambda must be positive")
    return digamma(nu) - np.log(lam)


def _lgamma(x):
    return np.vectorize(math.lgamma, otypes=[float])(x)


def kl_dirichlet(theta_post, theta_prior):
    """KL(Dir(theta_post) || Dir(theta_prior)); ``theta_prior`` may be scalar."""
    a = np.asarray(theta_post, dtype=np.float64)
    b = np.broadcast_to(np.asarray(theta_prior, dtype=np.float64), a.shape)
    a0, b0 = a.sum(), b.sum()
    return float(
        math.lgamma(a0)
        - _lgamma(a).sum()
        - math.lgamma(b0)
        + _lgamma(b).sum()
        + np.sum((a - b) * (digamma(a) - digamma(a0)))
    )


def kl_gamma(nu_post, lam_post, nu_prior, lam_prior):
    """KL between Gamma distributions in (shape, rate) form."""
    return float(
        (nu_post - nu_prior) * digamma(nu_post)
        - math.lgamma(nu_post)
        + math.lgamma(nu_prior)
        + nu_prior * (math.log(lam_post) - math.log(lam_prior))
        + nu_post * (lam_prior - lam_post) / lam_post
    )


@dataclass(frozen=True)
class Hyperparams:
    theta0: float
    nu0: float
    lambda0: float
    K: int

    def __post_init__(self):
        if not (self.theta0 > 0 and self.nu0 > 0 and self.lambda0 > 0):
            raise ConfigurationError("theta0, nu0 and lambda0 must be positive")
        if self.K < 1:
            raise ConfigurationError(f"K must be >= 1, got {self.K}")


@dataclass
class ErrorMatrix:
    """Reconstruction errors ``E`` (N, K) and per-signal sizes ``T_n * D``."""

    E: np.ndarray
    sizes: np.ndarray

    def __post_init__(self):
        self.E = np.asarray(self.E, dtype=np.float64)
        if self.E.ndim == 1:
            self.E = self.E.reshape(len(self.sizes), -1)
        if self.E.ndim != 2 or self.E.shape[0] != len(self.sizes):
            raise DataError(f"error matrix shape {self.E.shape} does not match {len(self.sizes)} sizes")
        self.sizes = np.asarray(self.sizes, dtype=np.float64)
        if not np.all(np.isfinite(self.E)):
            bad = np.flatnonzero(~np.all(np.isfinite(self.E), axis=1))
            raise DataError(f"non-finite reconstruction errors for signals {bad.tolist()}")
        if np.any(self.E < 0) or np.any(self.sizes < 1):
            raise DataError("errors must be >= 0 and sizes >= 1")

    @property
    def N(self):
        return self.E.shape[0]

    @property
    def K(self):
        return self.E.shape[1]


@dataclass
class VBState:
    theta_bar: np.ndarray
    nu_bar: float
    lambda_bar: float
    R: np.ndarray
    trace: list = field(default_factory=list)

    @property
    def N(self):
        return self.R.shape[0]

    @property
    def K(self):
        return self.R.shape[1]

    def to_dict(self):
        return {
            "theta_bar": np.asarray(self.theta_bar).tolist(),
            "nu_bar": float(self.nu_bar),
            "lambda_bar": float(self.lambda_bar),
            "R": self.R.ravel().tolist(),
            "N": self.N,
            "K": self.K,
        }

    @classmethod
    def from_dict(cls, d):
        N, K = int(d["N"]), int(d["K"])
        return cls(
            theta_bar=np.asarray(d["theta_bar"], dtype=np.float64),
            nu_bar=float(d["nu_bar"]),
            lambda_bar=float(d["lambda_bar"]),
            R=np.asarray(d["R"], dtype=np.float64).reshape(N, K),
        )


def uniform_responsibilities(N, K):
    return np.full((N, K), 1.0 / K)


def _check_R(R, N, K):
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (N, K):
        raise InvalidResponsibilitiesError(f"R has shape {R.shape}, expected {(N, K)}")
    if N and not np.allclose(R.sum(axis=1), 1.0, rtol=0, atol=1e-9):
        raise InvalidResponsibilitiesError("rows of R must sum to 1")
    return R


def log_rho(err: ErrorMatrix, state: VBState):
    """Unnormalized log responsibilities, shape (N, K)."""
    e_log_alpha = digamma(state.theta_bar) - digamma(np.sum(state.theta_bar))
    e_beta = state.nu_bar / state.lambda_bar
    e_log_beta = expected_log_beta(state.nu_bar, state.lambda_bar)
    half = 0.5 * err.sizes[:, None]
    return e_log_alpha[None, :] - err.E * e_beta + half * (e_log_beta - LOG_PI)


def vb_e_step(err: ErrorMatrix, state: VBState) -> np.ndarray:
    """Responsibilities ``r_nk`` via a row-max-shifted softmax of ``log rho``."""
    lr = log_rho(err, state)
    lr -= lr.max(axis=1, keepdims=True)
    rho = np.exp(lr)
    return rho / rho.sum(axis=1, keepdims=True)


def vb_m_step(err: ErrorMatrix, R, hyper: Hyperparams):
    """Closed-form posterior parameters ``(theta_bar, nu_bar, lambda_bar)``."""
    R = _check_R(R, err.N, err.K)
    theta_bar = hyper.theta0 + R.sum(axis=0)
    nu_bar = hyper.nu0 + 0.5 * float(err.sizes.sum())
    lambda_bar = hyper.lambda0 + float(np.sum(R * err.E))
    return theta_bar, nu_bar, lambda_bar


def variational_free_energy(err: ErrorMatrix, state: VBState, hyper: Hyperparams) -> float:
    """Negated evidence lower bound of the current mean-field posterior.

    Sum of the allocation entropy term, the expected log mixing weights, the
    two prior KL divergences and the expected Gaussian negative
    log-likelihood.  No additive constants are dropped.
    """
    R = state.R
    theta = np.asarray(state.theta_bar, dtype=np.float64)
    e_log_alpha = digamma(theta) - digamma(theta.sum())
    e_beta = state.nu_bar / state.lambda_bar
    e_log_beta = expected_log_beta(state.nu_bar, state.lambda_bar)

    pos = R > 0
    ent = float(np.sum(R[pos] * np.log(R[pos])))
    mix = -float(np.sum(R * e_log_alpha[None, :]))
    nll = float(
        np.sum(R * (e_beta * err.E - 0.5 * err.sizes[:, None] * (e_log_beta - LOG_PI)))
    )
    kl_a = kl_dirichlet(theta, hyper.theta0)
    kl_b = kl_gamma(state.nu_bar, state.lambda_bar, hyper.nu0, hyper.lambda0)
    return ent + mix + kl_a + kl_b + nll


def m_step_state(err, R, hyper):
    theta_bar, nu_bar, lambda_bar = vb_m_step(err, R, hyper)
    return VBState(theta_bar, nu_bar, lambda_bar, np.array(R, dtype=np.float64))


def run_vb(err: ErrorMatrix, hyper: Hyperparams, iters: int = 5, init_R=None) -> VBState:
    """Alternate VB E and M steps ``iters`` times.

    The posterior parameters are first set by an M-step on ``init_R``
    (uniform when omitted) so the first E-step is well defined.  The
    returned state's ``trace`` holds the free energy after that initial
    M-step and after every E/M pair.
    """
    if err.K != hyper.K:
        raise ConfigurationError(f"error matrix has K={err.K}, hyperparams K={hyper.K}")
    if init_R is None:
        init_R = uniform_responsibilities(err.N, err.K)
    state = m_step_state(err, init_R, hyper)
    state.trace.append(variational_free_energy(err, state, hyper))
    for _ in range(iters):
        R = vb_e_step(err, state)
        state = VBState(*vb_m_step(err, R, hyper), R, state.trace)
        state.trace.append(variational_free_energy(err, state, hyper))
    return state


def effective_clusters(R, mass_threshold=0.1):
    """Clusters whose mean responsibility reaches ``mass_threshold``.

    Returns ``[(k, mass), ...]`` sorted by descending mass.
    """
    R = np.asarray(R, dtype=np.float64)
    masses = R.mean(axis=0)
    order = sorted(range(R.shape[1]), key=lambda k: (-masses[k], k))
    return [(k, float(masses[k])) for k in order if masses[k] >= mass_threshold]
