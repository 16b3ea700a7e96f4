"""Linear noise schedule and the closed-form conditional marginal of the forward SDE.

All quantities are exact closed forms in float64. Times may be scalars or
arrays; array inputs are evaluated elementwise.
"""

from dataclasses import dataclass, field

import numpy as np

from difftts.errors import DomainError, ShapeError

# slack for float round-off when checking t against [0, T]
_T_EPS = 1e-12


@dataclass(frozen=True)
class NoiseSchedule:
    beta0: float = 0.05
    beta1: float = 20.0
    horizon_T: float = 1.0

    def __post_init__(self):
        if not (self.beta0 >= 0 and self.beta1 >= 0):
            raise DomainError(f"noise rates must be nonnegative, got {self.beta0}, {self.beta1}")
        if not self.horizon_T > 0:
            raise DomainError(f"horizon must be positive, got {self.horizon_T}")

    @property
    def slope(self):
        # d(beta)/dt, so that beta_t = beta0 + slope * t on [0, T]
        return (self.beta1 - self.beta0) / self.horizon_T

    def terminal_survival(self):
        """exp(-B(0, T)): how much of X_0 survives at the horizon."""
        return float(np.exp(-beta_integral(self, 0.0, self.horizon_T)))


@dataclass(frozen=True)
class DiffusionSpec:
    schedule: NoiseSchedule
    sigma_diag: np.ndarray = field(repr=False)
    dim_n: int

    def __post_init__(self):
        sig = np.asarray(self.sigma_diag, dtype=np.float64).reshape(-1)
        if sig.size != self.dim_n:
            raise ShapeError(f"sigma_diag has {sig.size} entries, dim_n is {self.dim_n}")
        if not np.all(sig > 0):
            raise DomainError("terminal covariance diagonal must be strictly positive")
        sig.setflags(write=False)
        object.__setattr__(self, "sigma_diag", sig)

    @classmethod
    def identity(cls, dim_n, schedule=None):
        return cls(schedule or NoiseSchedule(), np.ones(dim_n), dim_n)

    @property
    def is_identity(self):
        return bool(np.all(self.sigma_diag == 1.0))

    @property
    def T(self):
        return self.schedule.horizon_T


@dataclass(frozen=True)
class ConditionalMarginal:
    mean_rho: np.ndarray
    var_diag: np.ndarray


def _check_t(schedule, t, name="t"):
    t = np.asarray(t, dtype=np.float64)
    if np.any(~np.isfinite(t)) or np.any(t < -_T_EPS) or np.any(t > schedule.horizon_T + _T_EPS):
        raise DomainError(f"{name} must lie in [0, {schedule.horizon_T}], got {t}")
    return np.clip(t, 0.0, schedule.horizon_T)


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def beta_at(schedule, t):
    t = _check_t(schedule, t)
    return _out(schedule.beta0 + schedule.slope * t)


def beta_integral(schedule, s, t):
    """Integral of beta over [s, t], exact for the linear schedule."""
    s = _check_t(schedule, s, "s")
    t = _check_t(schedule, t)
    if np.any(s > t):
        raise DomainError(f"need s <= t, got s={s}, t={t}")
    return _out(schedule.beta0 * (t - s) + 0.5 * schedule.slope * (t * t - s * s))


def lambda_scalar(schedule, t):
    """Noise variance 1 - exp(-B(0, t)) of the identity-covariance case."""
    return _out(-np.expm1(-np.asarray(beta_integral(schedule, 0.0, t))))


def _vec(spec, v, name):
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1:] != (spec.dim_n,):
        raise ShapeError(f"{name} must end in dimension {spec.dim_n}, got shape {v.shape}")
    return v


def mean_coefficient(spec, t):
    """Per-coordinate weight exp(-B(0,t) / (2 sigma^2)) that X_0 keeps in the mean.

    For array ``t`` the result has shape ``t.shape + (n,)``.
    """
    big_b = np.asarray(beta_integral(spec.schedule, 0.0, t))[..., None]
    return np.exp(-0.5 * big_b / spec.sigma_diag)


def marginal_variance(spec, t):
    big_b = np.asarray(beta_integral(spec.schedule, 0.0, t))[..., None]
    return -spec.sigma_diag * np.expm1(-big_b / spec.sigma_diag)


def marginal_params(spec, x0, mu, t):
    """Mean and diagonal covariance of X_t given X_0 (Gaussian)."""
    x0 = _vec(spec, x0, "x0")
    mu = _vec(spec, mu, "mu")
    if np.ndim(t) != 0:
        raise ShapeError("marginal_params takes a scalar time")
    keep = mean_coefficient(spec, t)
    rho = keep * x0 + (1.0 - keep) * mu
    return ConditionalMarginal(mean_rho=rho, var_diag=marginal_variance(spec, t))
