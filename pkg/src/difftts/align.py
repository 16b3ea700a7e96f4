"""Monotonic alignment search, its enumeration oracle, and duration handling.

Token indices are 0-based in memory (frame j belongs to token
``frame_to_token[j]`` in ``range(L)``); CSV files store duration vectors only.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from difftts import kernels
from difftts.errors import ContractError, DomainError, ShapeError

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Alignment:
    frame_to_token: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.frame_to_token, dtype=np.int64).reshape(-1)
        if a.size == 0 or a[0] != 0:
            raise ContractError("alignment must start at token 0")
        steps = np.diff(a)
        if np.any((steps != 0) & (steps != 1)):
            raise ContractError("alignment must be monotonic and skip no token")
        a.setflags(write=False)
        object.__setattr__(self, "frame_to_token", a)

    @classmethod
    def from_durations(cls, durations):
        d = np.asarray(durations, dtype=np.int64).reshape(-1)
        if d.size == 0 or np.any(d < 1):
            raise ContractError(f"durations must all be >= 1, got {d}")
        return cls(np.repeat(np.arange(d.size), d))

    @property
    def num_tokens(self):
        return int(self.frame_to_token[-1]) + 1

    @property
    def num_frames(self):
        return int(self.frame_to_token.size)

    @property
    def durations(self):
        return np.bincount(self.frame_to_token, minlength=self.num_tokens)

    def check(self, num_tokens, num_frames):
        if self.num_tokens != num_tokens or self.num_frames != num_frames:
            raise ContractError(
                f"alignment covers {self.num_tokens} tokens / {self.num_frames} frames, "
                f"expected {num_tokens} / {num_frames}"
            )


def _pair(mu_tilde, y):
    mu_tilde = np.atleast_2d(np.asarray(mu_tilde, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if mu_tilde.shape[1] != y.shape[1]:
        raise ShapeError(f"feature sizes differ: {mu_tilde.shape} vs {y.shape}")
    return mu_tilde, y


def frame_costs(mu_tilde, y):
    """0.5 * ||y_j - mu_i||^2 for every (token i, frame j), shape (L, F)."""
    mu_tilde, y = _pair(mu_tilde, y)
    diff = mu_tilde[:, None, :] - y[None, :, :]
    return 0.5 * np.einsum("ijk,ijk->ij", diff, diff)


def encoder_loss(mu_tilde, y, alignment):
    """Gaussian negative log-likelihood of the frames under the aligned token means."""
    mu_tilde, y = _pair(mu_tilde, y)
    alignment.check(mu_tilde.shape[0], y.shape[0])
    r = y - mu_tilde[alignment.frame_to_token]
    n_frm, n = y.shape
    return float(0.5 * n * LOG_2PI * n_frm + 0.5 * np.sum(r * r))


def mas(mu_tilde, y):
    mu_tilde, y = _pair(mu_tilde, y)
    if y.shape[0] < mu_tilde.shape[0]:
        raise ContractError(f"{y.shape[0]} frames cannot cover {mu_tilde.shape[0]} tokens")
    logp = -frame_costs(mu_tilde, y)
    return Alignment(kernels.maximum_path(np.ascontiguousarray(logp)))


def count_alignments(num_tokens, num_frames):
    return math.comb(num_frames - 1, num_tokens - 1)


def brute_force_alignment(mu_tilde, y, cap=200_000):
    """Exact optimum by enumerating every composition of F into L positive parts.

    Candidates are visited in lexicographic order of their duration vectors and
    only a strictly better loss replaces the incumbent, so ties resolve to the
    lexicographically smallest duration vector.
    """
    mu_tilde, y = _pair(mu_tilde, y)
    n_tok, n_frm = mu_tilde.shape[0], y.shape[0]
    if n_frm < n_tok:
        raise ContractError(f"{n_frm} frames cannot cover {n_tok} tokens")
    total = count_alignments(n_tok, n_frm)
    if total > cap:
        raise DomainError(f"{total} candidate alignments exceeds the cap of {cap}")
    costs = frame_costs(mu_tilde, y)
    cut_sets = np.array(list(itertools.combinations(range(1, n_frm), n_tok - 1)), dtype=np.int64)
    cut_sets = cut_sets.reshape(total, n_tok - 1)
    # token index of frame j = number of cuts <= j
    paths = (cut_sets[:, :, None] <= np.arange(n_frm)[None, None, :]).sum(axis=1)
    losses = costs[paths, np.arange(n_frm)].sum(axis=1)
    return Alignment(paths[int(np.argmin(losses))])


def durations_from_alignment(alignment):
    """Log frame counts per token."""
    return np.log(alignment.durations.astype(np.float64))


def expand_encoded(mu_tilde, durations):
    mu_tilde = np.atleast_2d(np.asarray(mu_tilde, dtype=np.float64))
    d = np.asarray(durations, dtype=np.int64).reshape(-1)
    if d.size != mu_tilde.shape[0]:
        raise ShapeError(f"{d.size} durations for {mu_tilde.shape[0]} tokens")
    if np.any(d < 1):
        raise ContractError(f"durations must all be >= 1, got {d}")
    return np.repeat(mu_tilde, d, axis=0)


def scale_durations(log_durations, factor):
    """Frame counts max(1, round_half_up(factor * exp(d)))."""
    if not factor > 0:
        raise DomainError(f"tempo factor must be > 0, got {factor}")
    raw = factor * np.exp(np.asarray(log_durations, dtype=np.float64))
    return np.maximum(1, np.floor(raw + 0.5)).astype(np.int64)


class DurationPredictor:
    """Per-token two-layer map from encoded features to a log-duration."""

    def __init__(self, dim_n, hidden=16, params=None):
        self.dim_n = int(dim_n)
        self.hidden = int(hidden)
        size = self.num_params
        self.params = np.zeros(size) if params is None else np.asarray(params, dtype=np.float64)
        if self.params.shape != (size,):
            raise ShapeError(f"expected {size} parameters, got {self.params.shape}")

    @property
    def num_params(self):
        return self.dim_n * self.hidden + self.hidden + self.hidden + 1

    @classmethod
    def init(cls, dim_n, rng, hidden=16):
        dp = cls(dim_n, hidden)
        w1, _, _, _ = dp.unpack()
        bound = np.sqrt(3.0 / dim_n)
        w1[...] = rng.uniform(-bound, bound, size=w1.shape)
        return dp

    def unpack(self, flat=None):
        flat = self.params if flat is None else flat
        n, h = self.dim_n, self.hidden
        w1 = flat[: n * h].reshape(n, h)
        b1 = flat[n * h : n * h + h]
        w2 = flat[n * h + h : n * h + 2 * h]
        b2 = flat[n * h + 2 * h :]
        return w1, b1, w2, b2

    def __call__(self, mu_tilde):
        return self.forward(mu_tilde)[0]

    def forward(self, mu_tilde):
        mu_tilde = np.atleast_2d(np.asarray(mu_tilde, dtype=np.float64))
        if mu_tilde.shape[1] != self.dim_n:
            raise ShapeError(f"expected {self.dim_n} features, got {mu_tilde.shape[1]}")
        w1, b1, w2, b2 = self.unpack()
        z = mu_tilde @ w1 + b1
        sig = 0.5 * (1.0 + np.tanh(0.5 * z))
        h = z * sig
        return h @ w2 + b2[0], (mu_tilde, z, sig, h)

    def backward(self, cache, grad_out):
        """Parameter gradient and input gradient for d(loss)/d(output) = grad_out."""
        mu_tilde, z, sig, h = cache
        grad = np.zeros_like(self.params)
        gw1, gb1, gw2, gb2 = self.unpack(grad)
        _, _, w2, _ = self.unpack()
        gw2[...] = h.T @ grad_out
        gb2[...] = grad_out.sum()
        gz = np.outer(grad_out, w2) * (sig + z * sig * (1.0 - sig))
        gw1[...] = mu_tilde.T @ gz
        gb1[...] = gz.sum(axis=0)
        w1, _, _, _ = self.unpack()
        return grad, gz @ w1.T


def duration_loss(dp, mu_tilde, d):
    """MSE between predicted and target log-durations.

    Callers must pass encoder output as a constant; no gradient is propagated
    back through ``mu_tilde`` by the training code.
    """
    pred = dp(mu_tilde) if callable(dp) else np.asarray(dp, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64).reshape(-1)
    if pred.shape != d.shape:
        raise ShapeError(f"prediction {pred.shape} vs target {d.shape}")
    return float(np.mean((pred - d) ** 2))
