"""Forward diffusion toward N(mu, Sigma): exact sampling, an Euler-Maruyama
path simulator used as its oracle, and exact scores.

Arrays carry the feature dimension last; any leading batch shape is allowed.
"""

import csv
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from difftts import kernels
from difftts.errors import DomainError, ShapeError
from difftts.schedule import (
    _vec,
    beta_at,
    lambda_scalar,
    marginal_params,
    marginal_variance,
    mean_coefficient,
)

LOG_2PI = float(np.log(2.0 * np.pi))


def _positive_t(spec, t):
    if not np.all(np.asarray(t) > 0):
        raise DomainError(f"t must be > 0 (variance vanishes at t=0), got {t}")
    if np.any(np.asarray(t) > spec.T * (1 + 1e-12)):
        raise DomainError(f"t must be <= {spec.T}, got {t}")


def _time_column(t, x):
    """Reshape per-instance or per-frame times so they broadcast against x[..., :1]."""
    t = np.asarray(t, dtype=np.float64)
    if t.ndim == 0:
        return t
    lead = x.ndim - 1
    if t.ndim > lead or t.shape != x.shape[: t.ndim]:
        raise ShapeError(f"time array of shape {t.shape} does not match data {x.shape}")
    return t.reshape(t.shape + (1,) * (lead - t.ndim))


@dataclass
class DiffusionPath:
    times: np.ndarray
    states: np.ndarray
    seed: int | None = None

    def to_csv(self, path, index=None):
        """Write ``t, x_1..x_n`` rows; ``index`` picks one trajectory of a batch."""
        states = self.states if index is None else self.states[:, index]
        states = states.reshape(len(self.times), -1)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x_{i + 1}" for i in range(states.shape[1])])
            for t, row in zip(self.times, states):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in row])


def sample_conditional(spec, x0, mu, t, rng):
    """Draw X_t | X_0 from its Gaussian law in one shot."""
    _positive_t(spec, t)
    x0 = _vec(spec, x0, "x0")
    mu = _vec(spec, mu, "mu")
    marg = marginal_params(spec, x0, mu, t)
    z = rng.standard_normal(np.broadcast_shapes(x0.shape, mu.shape))
    return marg.mean_rho + np.sqrt(marg.var_diag) * z


def simulate_forward_em(spec, x0, mu, num_steps, rng, record_every=1, seed=None):
    """Integrate the forward SDE with uniform Euler-Maruyama steps h = T/num_steps.

    ``x0`` may hold a batch of starting points (leading dims). Beta is taken at
    the left end of each step. Only every ``record_every``-th state is kept
    (the initial state is always kept).
    """
    if int(num_steps) < 1:
        raise DomainError("num_steps must be >= 1")
    if int(record_every) < 1:
        raise DomainError("record_every must be >= 1")
    num_steps = int(num_steps)
    x0 = _vec(spec, x0, "x0")
    mu = _vec(spec, mu, "mu")
    shape = np.broadcast_shapes(x0.shape, mu.shape)
    x = np.ascontiguousarray(np.broadcast_to(x0, shape), dtype=np.float64).reshape(-1, spec.dim_n).copy()
    mu_b = np.ascontiguousarray(np.broadcast_to(mu, shape), dtype=np.float64).reshape(-1, spec.dim_n)
    inv_sigma = 1.0 / spec.sigma_diag
    h = spec.T / num_steps
    grid = h * np.arange(num_steps)
    betas = np.asarray(beta_at(spec.schedule, grid), dtype=np.float64).reshape(-1)

    n_rec = num_steps // record_every
    out = np.empty((n_rec + 1,) + x.shape)
    out[0] = x
    chunk = max(record_every, (1 << 22) // max(x.size, 1) // record_every * record_every)
    slot = 1
    for start in range(0, num_steps, chunk):
        stop = min(start + chunk, num_steps)
        noise = rng.standard_normal((stop - start,) + x.shape)
        k_rec = (stop - start) // record_every
        buf = np.empty((max(k_rec, 1),) + x.shape)
        kernels.em_forward(x, mu_b, inv_sigma, betas[start:stop], h, noise, buf, record_every)
        out[slot : slot + k_rec] = buf[:k_rec]
        slot += k_rec
    times = h * record_every * np.arange(n_rec + 1)
    return DiffusionPath(times=times, states=out.reshape((n_rec + 1,) + shape), seed=seed)


def conditional_score(spec, x_t, x0, mu, t):
    """Gradient of log p(X_t | X_0): -(x_t - rho) / lambda."""
    _positive_t(spec, t)
    marg = marginal_params(spec, x0, mu, t)
    return -(np.asarray(x_t, dtype=np.float64) - marg.mean_rho) / marg.var_diag


def conditional_logpdf(spec, x_t, x0, mu, t):
    _positive_t(spec, t)
    marg = marginal_params(spec, x0, mu, t)
    r = np.asarray(x_t, dtype=np.float64) - marg.mean_rho
    return -0.5 * np.sum(r * r / marg.var_diag + np.log(marg.var_diag) + LOG_2PI, axis=-1)


@dataclass(frozen=True)
class MixturePrior:
    """Gaussian mixture with diagonal components, used as a known data law."""

    weights: np.ndarray
    means: np.ndarray
    var_diag_components: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        m = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        v = np.atleast_2d(np.asarray(self.var_diag_components, dtype=np.float64))
        if abs(w.sum() - 1.0) > 1e-12 or np.any(w < 0):
            raise DomainError("mixture weights must be a probability vector")
        if m.shape != v.shape or m.shape[0] != w.size:
            raise ShapeError(f"means {m.shape} / variances {v.shape} / weights {w.shape} disagree")
        if np.any(v < 0):
            raise DomainError("component variances must be nonnegative")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "var_diag_components", v)

    @property
    def dim_n(self):
        return self.means.shape[1]

    def sample(self, size, rng):
        comp = rng.choice(self.weights.size, size=size, p=self.weights)
        z = rng.standard_normal((size, self.dim_n))
        return self.means[comp] + np.sqrt(self.var_diag_components[comp]) * z

    def diffused(self, spec, mu, t, lead_ndim=0):
        """Means and variances of the components of the law of X_t.

        Shapes are ``(K,) + (1,) * lead_ndim + (n,)`` (means also broadcast
        against ``mu``) so they line up with a batch of ``lead_ndim`` leading axes.
        """
        keep = mean_coefficient(spec, t)
        pad = (-1,) + (1,) * lead_ndim + (self.dim_n,)
        means = keep * self.means.reshape(pad) + (1 - keep) * np.asarray(mu, dtype=np.float64)
        var = (marginal_variance(spec, t) + keep**2 * self.var_diag_components).reshape(pad)
        return means, var

    def _log_terms(self, spec, mu, x, t):
        x = np.asarray(x, dtype=np.float64)
        means, var = self.diffused(spec, mu, t, x.ndim - 1)
        r = x[None] - means
        comp = -0.5 * np.sum(r * r / var + np.log(var) + LOG_2PI, axis=-1)
        lw = np.log(self.weights).reshape((-1,) + (1,) * (comp.ndim - 1))
        return comp + lw, r, var

    def logpdf(self, spec, mu, x, t):
        terms, _, _ = self._log_terms(spec, mu, x, t)
        return logsumexp(terms, axis=0)


def mixture_score(prior, spec, mu, x, t):
    """Exact grad log p_t(x) when X_0 follows ``prior``."""
    _positive_t(spec, t)
    x = _vec(spec, x, "x")
    terms, r, var = prior._log_terms(spec, mu, x, t)
    resp = np.exp(terms - logsumexp(terms, axis=0, keepdims=True))
    return -np.sum(resp[..., None] * r / var, axis=0)


class MixtureScore:
    """ScoreModel backed by a known mixture data law (t is a scalar per call)."""

    def __init__(self, prior, spec):
        self.prior = prior
        self.spec = spec

    def __call__(self, x, mu, t):
        return mixture_score(self.prior, self.spec, mu, x, t)

    def logpdf(self, x, mu, t):
        return self.prior.logpdf(self.spec, mu, x, t)


class GaussianScore:
    """Exact score for a (possibly correlated) Gaussian data law N(mean, cov).

    Requires Sigma = I so the diffused covariance stays lambda I + keep^2 cov.
    """

    def __init__(self, mean, cov, spec):
        if not spec.is_identity:
            raise DomainError("GaussianScore needs an identity terminal covariance")
        self.mean = np.asarray(mean, dtype=np.float64)
        self.cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
        self.spec = spec

    def _params(self, mu, t):
        lam = lambda_scalar(self.spec.schedule, t)
        keep = np.sqrt(1.0 - lam)
        m = keep * self.mean + (1 - keep) * np.asarray(mu, dtype=np.float64)
        c = lam * np.eye(self.cov.shape[0]) + keep**2 * self.cov
        return m, c

    def __call__(self, x, mu, t):
        _positive_t(self.spec, t)
        m, c = self._params(mu, t)
        return -np.linalg.solve(c, (np.asarray(x) - m).reshape(-1, c.shape[0]).T).T.reshape(np.shape(x))

    def logpdf(self, x, mu, t):
        if t == 0:
            m, c = self.mean, self.cov
        else:
            m, c = self._params(mu, t)
        r = np.asarray(x, dtype=np.float64) - m
        sign, logdet = np.linalg.slogdet(c)
        quad = np.einsum("...i,ij,...j->...", r, np.linalg.inv(c), r)
        return -0.5 * (quad + logdet + c.shape[0] * LOG_2PI)
