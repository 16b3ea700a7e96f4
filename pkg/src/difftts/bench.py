"""Quality-vs-steps benchmark: one row per step count with error and wall-clock."""

import time
from dataclasses import dataclass

import numpy as np
from scipy import stats

from difftts.diffusion import MixturePrior, MixtureScore
from difftts.sampler import Mode, SamplerConfig, solve_reverse, wasserstein1_1d
from difftts.schedule import DiffusionSpec

BENCH_COLUMNS = ["num_steps", "error_mean", "error_std", "ms_mean", "ms_std", "repetitions"]


@dataclass
class BenchCase:
    """What a benchmark needs: ``sample(N, rng)`` and ``error(output)``.

    Only ``sample`` is timed.
    """

    sample: object
    error: object
    name: str = "case"


def bench_steps(case, step_list, repetitions, rng):
    """Time and score ``case`` for every step count in ``step_list``."""
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    # warm-up so one-off costs (imports, caches) do not land on the first row
    case.sample(int(step_list[0]), rng)
    rows = []
    for n_steps in step_list:
        errs, ms = [], []
        for _ in range(repetitions):
            t0 = time.perf_counter()
            out = case.sample(int(n_steps), rng)
            ms.append(1e3 * (time.perf_counter() - t0))
            errs.append(case.error(out))
        rows.append(
            {
                "num_steps": int(n_steps),
                "error_mean": float(np.mean(errs)),
                "error_std": float(np.std(errs, ddof=1)) if repetitions > 1 else None,
                "ms_mean": float(np.mean(ms)),
                "ms_std": float(np.std(ms, ddof=1)) if repetitions > 1 else None,
                "repetitions": repetitions,
            }
        )
    return rows


def affine_r2(x, y):
    """R^2 of the least-squares line y ~ a + b x."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    fit = stats.linregress(x, y)
    return float(fit.rvalue**2)


def mixture_quantile_fn(prior, lo=-50.0, hi=50.0, size=400_001):
    """Quantile function of a 1-D mixture via a dense CDF table."""
    grid = np.linspace(lo, hi, size)
    cdf = np.zeros_like(grid)
    for w, m, v in zip(prior.weights, prior.means[:, 0], prior.var_diag_components[:, 0]):
        cdf += w * stats.norm.cdf(grid, m, np.sqrt(v))
    return lambda u: np.interp(u, cdf, grid)


def default_mixture():
    return MixturePrior([0.3, 0.7], [[-1.5], [1.5]], [[0.1], [0.1]])


def analytic_case(prior=None, num_samples=20_000, mode=Mode.ODE, spec=None):
    """1-D mixture data with its exact score; error is W1 to the true law.

    Terminal points are the quantiles of N(mu, 1) at the midpoints of
    ``num_samples`` equal-probability bins, so in ODE mode the only error left
    is the solver's. ``mu`` is the data mean, which makes N(mu, 1) match the
    law of X_T to within exp(-B(0,T)).
    """
    prior = prior or default_mixture()
    spec = spec or DiffusionSpec.identity(1)
    score = MixtureScore(prior, spec)
    mu = np.array([float(prior.weights @ prior.means[:, 0])])
    levels = (np.arange(num_samples) + 0.5) / num_samples
    x_T = (mu[0] + stats.norm.ppf(levels))[:, None]
    quant = mixture_quantile_fn(prior)

    def sample(n_steps, rng):
        cfg = SamplerConfig(n_steps, mode, 1.0)
        return solve_reverse(score, spec, mu, x_T, cfg, rng)

    return BenchCase(sample, lambda out: wasserstein1_1d(out, quant), name="analytic-mixture")


def model_case(model, corpus, token_lists, tau=1.5, tempo=1.0, mode=Mode.ODE, seed=0):
    """Trained toy model; error is mean per-frame RMS distance to the token patterns."""
    from difftts import tts

    def sample(n_steps, rng):
        cfg = SamplerConfig(n_steps, mode, tau)
        local = np.random.default_rng(seed)
        return [tts.infer(model, tk, cfg, tempo, local, return_alignment=True) for tk in token_lists]

    def error(outs):
        return float(
            np.mean(np.concatenate([tts.frame_error(corpus, tk, a, y) for tk, (y, a) in zip(token_lists, outs)]))
        )

    return BenchCase(sample, error, name="toy-model")
