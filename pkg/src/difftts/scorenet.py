"""Per-frame feed-forward score network, the weighted diffusion loss and Adam.

The network sees ``[x_t, mu, time_features(t)]`` for every frame and returns
an n-vector; all frames share the same weights. Backprop is written out by
hand and checked against finite differences in the test suite.
"""

from dataclasses import dataclass, replace

import numpy as np

from difftts.errors import DomainError, ShapeError
from difftts.schedule import lambda_scalar


@dataclass(frozen=True)
class ScoreNetArch:
    dim_n: int
    hidden: tuple = (64, 64)
    time_dim: int = 16
    max_freq: float = 1000.0

    def __post_init__(self):
        if self.time_dim % 2:
            raise DomainError("time_dim must be even (sin/cos pairs)")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    @property
    def in_dim(self):
        return 2 * self.dim_n + self.time_dim

    def layer_shapes(self):
        sizes = (self.in_dim,) + self.hidden + (self.dim_n,)
        return [(a, b) for a, b in zip(sizes[:-1], sizes[1:])]

    @property
    def num_params(self):
        return sum(a * b + b for a, b in self.layer_shapes())

    def to_dict(self):
        return {"dim_n": self.dim_n, "hidden": list(self.hidden), "time_dim": self.time_dim, "max_freq": self.max_freq}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["dim_n"]), tuple(d["hidden"]), int(d["time_dim"]), float(d["max_freq"]))


def time_features(t, arch):
    """Sinusoidal features of t on geometrically spaced frequencies in [1, max_freq]."""
    half = arch.time_dim // 2
    freqs = np.exp(np.linspace(0.0, np.log(arch.max_freq), half))
    ang = np.asarray(t, dtype=np.float64)[..., None] * freqs
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=-1)


def _silu(z):
    sig = 0.5 * (1.0 + np.tanh(0.5 * z))
    return z * sig, sig


class ToyScoreNet:
    def __init__(self, arch, params=None):
        self.arch = arch
        if params is None:
            params = np.zeros(arch.num_params)
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (arch.num_params,):
            raise ShapeError(f"expected {arch.num_params} parameters, got {params.shape}")
        self.params = params

    @classmethod
    def init(cls, arch, rng, scale=None):
        """Small uniform hidden weights, zero biases and zero output layer."""
        net = cls(arch)
        layers = net.layers()
        for w, _ in layers[:-1]:
            bound = scale if scale is not None else np.sqrt(3.0 / w.shape[0])
            w[...] = rng.uniform(-bound, bound, size=w.shape)
        return net

    def layers(self, flat=None):
        """(W, b) views into ``flat`` (default: the parameter vector)."""
        flat = self.params if flat is None else flat
        out, pos = [], 0
        for a, b in self.arch.layer_shapes():
            w = flat[pos : pos + a * b].reshape(a, b)
            pos += a * b
            out.append((w, flat[pos : pos + b]))
            pos += b
        return out

    def layer_names(self):
        names = []
        for i in range(len(self.arch.layer_shapes())):
            names += [f"layer{i}.weight", f"layer{i}.bias"]
        return names

    def _inputs(self, x_t, mu, t):
        x_t = np.asarray(x_t, dtype=np.float64)
        mu = np.broadcast_to(np.asarray(mu, dtype=np.float64), x_t.shape)
        if x_t.shape[-1] != self.arch.dim_n:
            raise ShapeError(f"last dimension {x_t.shape[-1]} != {self.arch.dim_n}")
        t = np.asarray(t, dtype=np.float64)
        if t.ndim:
            lead = x_t.ndim - 1
            if t.shape != x_t.shape[: t.ndim]:
                raise ShapeError(f"time array {t.shape} does not match data {x_t.shape}")
            t = t.reshape(t.shape + (1,) * (lead - t.ndim))
        tf = np.broadcast_to(time_features(t, self.arch), x_t.shape[:-1] + (self.arch.time_dim,))
        return np.concatenate([x_t, mu, tf], axis=-1)

    def forward(self, x_t, mu, t, keep=False):
        h = self._inputs(x_t, mu, t)
        acts = [h]
        layers = self.layers()
        for w, b in layers[:-1]:
            z = h @ w + b
            h, sig = _silu(z)
            acts.append((z, sig, h))
        w, b = layers[-1]
        out = h @ w + b
        return (out, acts) if keep else out

    __call__ = forward

    def backward(self, acts, grad_out):
        """Gradients w.r.t. the parameter vector and the (x_t, mu) inputs."""
        n = self.arch.dim_n
        grad = np.zeros_like(self.params)
        glayers = self.layers(grad)
        wl = self.layers()
        g = grad_out.reshape(-1, n)
        for i in range(len(wl) - 1, -1, -1):
            w, _ = wl[i]
            if i == 0:
                h_in = acts[0]
            else:
                h_in = acts[i][2]
            h2 = h_in.reshape(-1, w.shape[0])
            glayers[i][0][...] = h2.T @ g
            glayers[i][1][...] = g.sum(axis=0)
            g = g @ w.T
            if i > 0:
                z, sig, _ = acts[i]
                z2, s2 = z.reshape(-1, w.shape[0]), sig.reshape(-1, w.shape[0])
                g = g * (s2 + z2 * s2 * (1.0 - s2))
        g = g.reshape(acts[0].shape)
        return grad, g[..., :n], g[..., n : 2 * n]


@dataclass
class TrainBatch:
    x0: np.ndarray
    mu: np.ndarray
    t: np.ndarray
    xi: np.ndarray
    mask: np.ndarray | None = None  # per-frame validity, shape x0.shape[:-1]

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=np.float64)
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.xi = np.asarray(self.xi, dtype=np.float64)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(-1)
        if not (self.x0.shape == self.mu.shape == self.xi.shape):
            raise ShapeError(f"x0 {self.x0.shape}, mu {self.mu.shape}, xi {self.xi.shape} must match")
        if self.t.shape != self.x0.shape[:1]:
            raise ShapeError(f"need one time per instance, got {self.t.shape} for {self.x0.shape}")
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=np.float64)

    @classmethod
    def draw(cls, x0, mu, rng, t_min=1e-5, horizon_T=1.0, mask=None):
        x0 = np.asarray(x0, dtype=np.float64)
        t = rng.uniform(t_min * horizon_T, horizon_T, size=x0.shape[0])
        xi = rng.standard_normal(x0.shape)
        return cls(x0, mu, t, xi, mask)

    def __len__(self):
        return self.x0.shape[0]


def _time_col(batch):
    return batch.t.reshape((-1,) + (1,) * (batch.x0.ndim - 1))


def noisy_inputs(batch, spec, t_min=1e-5):
    """X_t = rho(X_0, I, mu, t) + sqrt(lambda_t) xi, with the pieces reused by backprop."""
    if not spec.is_identity:
        raise DomainError("the diffusion loss is defined for Sigma = I")
    if np.any(batch.t < t_min * spec.T * (1 - 1e-12)):
        raise DomainError(f"times must be >= t_min={t_min * spec.T}, got min {batch.t.min()}")
    lam = np.asarray(lambda_scalar(spec.schedule, batch.t)).reshape(_time_col(batch).shape)
    keep = np.sqrt(1.0 - lam)
    x_t = keep * batch.x0 + (1.0 - keep) * batch.mu + np.sqrt(lam) * batch.xi
    return x_t, lam, keep


def _mask_weights(batch):
    if batch.mask is None:
        return np.ones(batch.x0.shape[:-1] + (1,)), batch.x0.size
    m = batch.mask[..., None]
    return m, m.sum() * batch.x0.shape[-1]


def diffusion_loss(net, batch, spec, t_min=1e-5):
    """Mean per element of lambda_t * (s(X_t, mu, t) + xi / sqrt(lambda_t))^2."""
    x_t, lam, _ = noisy_inputs(batch, spec, t_min)
    s = net(x_t, batch.mu, batch.t)
    w, count = _mask_weights(batch)
    r = np.sqrt(lam) * s + batch.xi
    return float(np.sum(w * r * r) / count)


def diffusion_loss_and_grads(net, batch, spec, t_min=1e-5):
    """Loss, gradient over the parameters, and gradient over mu (both input paths)."""
    x_t, lam, keep = noisy_inputs(batch, spec, t_min)
    s, acts = net.forward(x_t, batch.mu, batch.t, keep=True)
    w, count = _mask_weights(batch)
    sq = np.sqrt(lam)
    r = sq * s + batch.xi
    loss = float(np.sum(w * r * r) / count)
    g_s = 2.0 * w * r * sq / count
    g_params, g_x, g_mu = net.backward(acts, g_s)
    g_mu = g_mu + (1.0 - keep) * g_x
    return loss, g_params, g_mu


def score_gradients(net, batch, spec, t_min=1e-5):
    return diffusion_loss_and_grads(net, batch, spec, t_min)[1]


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, size, lr=1e-4, **kw):
        return cls(np.zeros(size), np.zeros(size), 0, lr, **kw)


def adam_step(state, params, grads):
    """One bias-corrected Adam update; returns (new_state, new_params)."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ShapeError(f"params {params.shape}, grads {grads.shape}, state {state.m.shape} disagree")
    step = state.step + 1
    m = state.beta1 * state.m + (1 - state.beta1) * grads
    v = state.beta2 * state.v + (1 - state.beta2) * grads * grads
    m_hat = m / (1 - state.beta1**step)
    v_hat = v / (1 - state.beta2**step)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return replace(state, m=m, v=v, step=step), new_params
