"""Reverse-time generation and probability-flow log-likelihood.

A score model is any callable ``score(x, mu, t)`` returning an array shaped
like ``x``; ``t`` is a Python float. Both the analytic scores in
:mod:`difftts.diffusion` and :class:`difftts.scorenet.ToyScoreNet` qualify.
"""

import csv
import enum
from dataclasses import dataclass

import numpy as np

from difftts.diffusion import LOG_2PI
from difftts.errors import DomainError, NumericalError, ShapeError
from difftts.schedule import beta_at


class Mode(str, enum.Enum):
    ODE = "ode"
    SDE = "sde"


@dataclass(frozen=True)
class SamplerConfig:
    num_steps_N: int = 10
    mode: Mode = Mode.ODE
    temperature_tau: float = 1.5
    seed: int = 0

    def __post_init__(self):
        if int(self.num_steps_N) < 1:
            raise DomainError(f"num_steps_N must be >= 1, got {self.num_steps_N}")
        if not self.temperature_tau > 0:
            raise DomainError(f"temperature must be > 0, got {self.temperature_tau}")
        object.__setattr__(self, "mode", Mode(self.mode))

    def step_size(self, horizon_T=1.0):
        return horizon_T / self.num_steps_N


@dataclass(frozen=True)
class LikelihoodEstimate:
    value: float
    std_error: float
    num_probes: int


def sample_terminal(mu, tau, rng):
    """X_T ~ N(mu, I / tau)."""
    if not tau > 0:
        raise DomainError(f"temperature must be > 0, got {tau}")
    mu = np.asarray(mu, dtype=np.float64)
    return mu + rng.standard_normal(mu.shape) / np.sqrt(tau)


def _eval_score(score, x, mu, t):
    s = np.asarray(score(x, mu, t), dtype=np.float64)
    if s.shape != x.shape:
        raise ShapeError(f"score returned shape {s.shape} for input {x.shape}")
    if not np.all(np.isfinite(s)):
        raise NumericalError(f"score model returned non-finite values at t={t:.6g}")
    return s


class _Trace:
    """Per-step trajectory CSV; coordinates for a single vector, summaries otherwise."""

    def __init__(self, path, x):
        self.fh = open(path, "w", newline="")
        self.writer = csv.writer(self.fh)
        self.full = x.ndim == 1
        if self.full:
            self.writer.writerow(["step", "t"] + [f"x_{i + 1}" for i in range(x.size)])
        else:
            self.writer.writerow(["step", "t", "mean", "std", "max_abs"])

    def row(self, step, t, x):
        if self.full:
            vals = [repr(float(v)) for v in x]
        else:
            vals = [repr(float(x.mean())), repr(float(x.std())), repr(float(np.abs(x).max()))]
        self.writer.writerow([step, repr(float(t))] + vals)

    def close(self):
        self.fh.close()


def _reverse(score, spec, mu, x_T, cfg, rng, stochastic, trace_path):
    mu = np.asarray(mu, dtype=np.float64)
    x = np.array(x_T, dtype=np.float64)
    if x.shape[-1] != spec.dim_n:
        raise ShapeError(f"x_T last dimension {x.shape[-1]} != {spec.dim_n}")
    inv_sigma = 1.0 / spec.sigma_diag
    n_steps = int(cfg.num_steps_N)
    big_t = spec.T
    h = big_t / n_steps
    trace = _Trace(trace_path, x) if trace_path else None
    try:
        if trace:
            trace.row(0, big_t, x)
        for k in range(n_steps):
            # current (larger) time of this step; the last evaluation is at t = h
            t = big_t * (n_steps - k) / n_steps
            beta = beta_at(spec.schedule, t)
            s = _eval_score(score, x, mu, t)
            if stochastic:
                drift = (0.5 * inv_sigma * (mu - x) - s) * beta
                x = x - h * drift + np.sqrt(beta * h) * rng.standard_normal(x.shape)
            else:
                drift = 0.5 * (inv_sigma * (mu - x) - s) * beta
                x = x - h * drift
            if not np.all(np.isfinite(x)):
                raise NumericalError(f"state became non-finite at t={t:.6g}")
            if trace:
                trace.row(k + 1, big_t * (n_steps - k - 1) / n_steps, x)
    finally:
        if trace:
            trace.close()
    return x


def solve_reverse_ode(score, spec, mu, x_T, cfg, trace_path=None):
    """Euler steps of the probability-flow ODE from t=T back to t=0.

    With Sigma = I each step is ``X <- X - h * 0.5 * (mu - X - s(X, mu, t)) * beta_t``.
    """
    return _reverse(score, spec, mu, x_T, cfg, None, False, trace_path)


def solve_reverse_sde(score, spec, mu, x_T, cfg, rng, trace_path=None):
    """Euler-Maruyama steps of the reverse-time SDE, fresh noise every step."""
    return _reverse(score, spec, mu, x_T, cfg, rng, True, trace_path)


def solve_reverse(score, spec, mu, x_T, cfg, rng=None, trace_path=None):
    if cfg.mode is Mode.SDE:
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        return solve_reverse_sde(score, spec, mu, x_T, cfg, rng, trace_path)
    return solve_reverse_ode(score, spec, mu, x_T, cfg, trace_path)


def generate(score, spec, mu, cfg, rng):
    """Terminal draw at temperature tau followed by the configured reverse solver."""
    x_T = sample_terminal(mu, cfg.temperature_tau, rng)
    return solve_reverse(score, spec, mu, x_T, cfg, rng)


def log_likelihood(score, spec, mu, x0, num_steps, num_probes, rng, instance_ndim=None, t_start=1e-5):
    """Log-likelihood of ``x0`` under the probability-flow ODE model.

    The flow is integrated forward with Euler steps from ``t_start * T`` to
    ``T``; the divergence of the drift is estimated by central differences
    along Rademacher probes that stay fixed along each trajectory. Leading
    axes beyond ``instance_ndim`` (default: the whole array is one instance)
    are independent instances and the result is their average.
    """
    if not spec.is_identity:
        raise DomainError("log_likelihood is implemented for Sigma = I")
    if int(num_probes) < 1 or int(num_steps) < 1:
        raise DomainError("num_probes and num_steps must be >= 1")
    x = np.array(x0, dtype=np.float64)
    mu = np.broadcast_to(np.asarray(mu, dtype=np.float64), x.shape)
    if instance_ndim is None:
        instance_ndim = x.ndim
    inst_axes = tuple(range(x.ndim - instance_ndim, x.ndim))
    n_probe = int(num_probes)

    t0 = t_start * spec.T
    h = (spec.T - t0) / int(num_steps)
    probes = rng.choice(np.array([-1.0, 1.0]), size=(n_probe,) + x.shape)
    mu_pair = np.broadcast_to(mu, (2 * n_probe,) + x.shape)
    div_int = np.zeros((n_probe,) + x.shape[: x.ndim - instance_ndim])

    def drift(z, m, t):
        return 0.5 * (m - z - _eval_score(score, z, m, t)) * beta_at(spec.schedule, t)

    for k in range(int(num_steps)):
        t = t0 + k * h
        eps = 1e-4 * (1.0 + np.max(np.abs(x)))
        pair = np.concatenate([x[None] + eps * probes, x[None] - eps * probes])
        f_pair = drift(pair, mu_pair, t)
        diff = (f_pair[:n_probe] - f_pair[n_probe:]) / (2 * eps)
        div_int += h * np.sum(probes * diff, axis=tuple(a + 1 for a in inst_axes))
        x = x + h * drift(x, mu, t)
        if not np.all(np.isfinite(x)) or not np.all(np.isfinite(div_int)):
            raise NumericalError(f"likelihood integration became non-finite at t={t:.6g}")

    r = x - mu
    log_prior = -0.5 * np.sum(r * r + LOG_2PI, axis=inst_axes)
    per_probe = (log_prior[None] + div_int).reshape(n_probe, -1).mean(axis=1)
    value = float(per_probe.mean())
    if n_probe > 1:
        std_error = float(per_probe.std(ddof=1) / np.sqrt(n_probe))
    else:
        std_error = float("inf")
    return LikelihoodEstimate(value=value, std_error=std_error, num_probes=n_probe)


def wasserstein1_1d(samples, quantile_fn):
    """W1 between an empirical 1-D sample and a law given by its quantile function.

    Uses the midpoint rule on sorted samples, which is exact up to O(1/M)
    quadrature error for smooth quantile functions.
    """
    xs = np.sort(np.asarray(samples, dtype=np.float64).reshape(-1))
    m = xs.size
    levels = (np.arange(m) + 0.5) / m
    return float(np.mean(np.abs(xs - quantile_fn(levels))))
