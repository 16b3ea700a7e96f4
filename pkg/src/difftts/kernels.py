"""Hot inner loops, each with a numba build and a pure-numpy twin.

``maximum_path`` and ``em_forward`` dispatch to the numba version unless
``DIFFTTS_DISABLE_NUMBA`` is set. Both twins are always importable so tests and
the benchmark can compare them directly.
"""

import numpy as np

from difftts._jit import HAVE_NUMBA, jit

NEG_INF = -np.inf


def _maximum_path_py(logp):
    """Best monotonic surjective frame->token path through an L x F log-likelihood grid.

    Returns the 0-based token index of every frame. The backtrack steps to the
    previous token only when that is strictly better, so among equal-score
    paths the earliest tokens get the fewest frames (lexicographically smallest
    duration vector).
    """
    n_tok, n_frm = logp.shape
    value = np.full((n_tok, n_frm), NEG_INF)
    value[0, 0] = logp[0, 0]
    for j in range(1, n_frm):
        prev = value[:, j - 1]
        adv = np.empty(n_tok)
        adv[0] = NEG_INF
        adv[1:] = prev[:-1]
        value[:, j] = np.maximum(prev, adv) + logp[:, j]
        # token i needs i frames before it and L-1-i after it
        lo = max(0, n_tok - (n_frm - j))
        value[:lo, j] = NEG_INF
        value[j + 1 :, j] = NEG_INF
    path = np.empty(n_frm, dtype=np.int64)
    i = n_tok - 1
    for j in range(n_frm - 1, -1, -1):
        path[j] = i
        if j > 0 and i > 0:
            # advance happened at j only if it was strictly better than staying
            if i == j or value[i - 1, j - 1] > value[i, j - 1]:
                i -= 1
    return path


@jit
def _maximum_path_nb(logp):
    n_tok, n_frm = logp.shape
    value = np.full((n_tok, n_frm), -np.inf)
    value[0, 0] = logp[0, 0]
    for j in range(1, n_frm):
        lo = max(0, n_tok - (n_frm - j))
        hi = min(n_tok - 1, j)
        for i in range(lo, hi + 1):
            stay = value[i, j - 1]
            adv = value[i - 1, j - 1] if i > 0 else -np.inf
            best = stay if stay >= adv else adv
            value[i, j] = best + logp[i, j]
    path = np.empty(n_frm, dtype=np.int64)
    i = n_tok - 1
    for j in range(n_frm - 1, -1, -1):
        path[j] = i
        if j > 0 and i > 0:
            if i == j or value[i - 1, j - 1] > value[i, j - 1]:
                i -= 1
    return path


def _em_forward_py(x, mu, inv_sigma, betas, h, noise, out, stride):
    """Euler-Maruyama steps of dX = 0.5 inv_sigma (mu - X) beta dt + sqrt(beta) dW.

    ``x`` is advanced in place through ``len(betas)`` steps; after every
    ``stride``-th step the state is written into the next slot of ``out``.
    """
    slot = 0
    for k in range(betas.shape[0]):
        b = betas[k]
        x += 0.5 * inv_sigma * (mu - x) * (b * h) + np.sqrt(b * h) * noise[k]
        if (k + 1) % stride == 0:
            out[slot] = x
            slot += 1
    return x


@jit
def _em_forward_nb(x, mu, inv_sigma, betas, h, noise, out, stride):
    n_paths, dim = x.shape
    slot = 0
    for k in range(betas.shape[0]):
        bh = betas[k] * h
        sq = np.sqrt(bh)
        for p in range(n_paths):
            for d in range(dim):
                x[p, d] += 0.5 * inv_sigma[d] * (mu[p, d] - x[p, d]) * bh + sq * noise[k, p, d]
        if (k + 1) % stride == 0:
            for p in range(n_paths):
                for d in range(dim):
                    out[slot, p, d] = x[p, d]
            slot += 1
    return x


if HAVE_NUMBA:
    maximum_path = _maximum_path_nb
    em_forward = _em_forward_nb
else:
    maximum_path = _maximum_path_py
    em_forward = _em_forward_py

BACKEND = "numba" if HAVE_NUMBA else "numpy"
