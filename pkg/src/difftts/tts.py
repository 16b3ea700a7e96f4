"""Toy text-to-feature pipeline: encoder, alignment-driven training, inference."""

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from difftts import align
from difftts.errors import ContractError, DomainError, ShapeError
from difftts.sampler import Mode, SamplerConfig, sample_terminal, solve_reverse
from difftts.schedule import DiffusionSpec, NoiseSchedule
from difftts.scorenet import (
    AdamState,
    ScoreNetArch,
    ToyScoreNet,
    TrainBatch,
    adam_step,
    diffusion_loss_and_grads,
)

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# synthetic corpus
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorpusRecipe:
    vocab: int = 12
    dim_n: int = 8
    min_duration: int = 2
    max_duration: int = 6
    min_tokens: int = 4
    max_tokens: int = 10
    noise: float = 0.2
    pattern_scale: float = 1.0

    def validate(self):
        if self.vocab < 2:
            raise DomainError("vocab must be >= 2")
        if self.dim_n < 1:
            raise DomainError("dim_n must be >= 1")
        if not 1 <= self.min_duration <= self.max_duration:
            raise DomainError("need 1 <= min_duration <= max_duration")
        if not 1 <= self.min_tokens <= self.max_tokens:
            raise DomainError("need 1 <= min_tokens <= max_tokens")
        if self.noise < 0 or self.pattern_scale <= 0:
            raise DomainError("noise must be >= 0 and pattern_scale > 0")
        return self


@dataclass
class ToyCorpus:
    recipe: CorpusRecipe
    patterns: np.ndarray  # (vocab, n)
    symbol_durations: np.ndarray  # (vocab,) ground-truth frames per symbol
    tokens: list  # list of int arrays
    features: list  # list of (F, n) arrays
    seed: int | None = None

    def __len__(self):
        return len(self.tokens)

    def true_durations(self, tokens):
        return self.symbol_durations[np.asarray(tokens)]

    def clean_features(self, tokens):
        return np.repeat(self.patterns[tokens], self.true_durations(tokens), axis=0)

    def draw_pairs(self, count, rng, noise=None):
        """New (tokens, features) pairs from the same symbol inventory."""
        noise = self.recipe.noise if noise is None else noise
        toks, feats = [], []
        for _ in range(count):
            tk = _draw_tokens(self.recipe, rng)
            clean = self.clean_features(tk)
            toks.append(tk)
            feats.append(clean + noise * rng.standard_normal(clean.shape))
        return toks, feats


def _draw_tokens(recipe, rng):
    length = int(rng.integers(recipe.min_tokens, recipe.max_tokens + 1))
    toks = [int(rng.integers(recipe.vocab))]
    while len(toks) < length:
        # no immediate repeats: two identical neighbours have no identifiable boundary
        nxt = int(rng.integers(recipe.vocab - 1))
        toks.append(nxt + (nxt >= toks[-1]))
    return np.array(toks, dtype=np.int64)


def gen_corpus(recipe, size, rng, seed=None):
    recipe.validate()
    if size < 1:
        raise DomainError("corpus size must be >= 1")
    patterns = recipe.pattern_scale * rng.standard_normal((recipe.vocab, recipe.dim_n))
    durs = rng.integers(recipe.min_duration, recipe.max_duration + 1, size=recipe.vocab)
    corpus = ToyCorpus(recipe, patterns, durs.astype(np.int64), [], [], seed)
    corpus.tokens, corpus.features = corpus.draw_pairs(size, rng)
    return corpus


# ---------------------------------------------------------------------------
# encoder
# ---------------------------------------------------------------------------


def _silu(z):
    sig = 0.5 * (1.0 + np.tanh(0.5 * z))
    return z * sig, sig


class ToyEncoder:
    """Embedding lookup followed by a residual per-token MLP."""

    def __init__(self, vocab, dim_n, hidden=32, params=None):
        self.vocab, self.dim_n, self.hidden = int(vocab), int(dim_n), int(hidden)
        size = self.num_params
        self.params = np.zeros(size) if params is None else np.asarray(params, dtype=np.float64)
        if self.params.shape != (size,):
            raise ShapeError(f"expected {size} parameters, got {self.params.shape}")

    @property
    def num_params(self):
        v, n, h = self.vocab, self.dim_n, self.hidden
        return v * n + n * h + h + h * n + n

    @classmethod
    def init(cls, vocab, dim_n, rng, hidden=32, emb_scale=0.1):
        enc = cls(vocab, dim_n, hidden)
        emb, w1, _, _, _ = enc.unpack()
        emb[...] = emb_scale * rng.standard_normal(emb.shape)
        w1[...] = rng.uniform(-1, 1, size=w1.shape) * np.sqrt(3.0 / dim_n)
        return enc

    def unpack(self, flat=None):
        flat = self.params if flat is None else flat
        v, n, h = self.vocab, self.dim_n, self.hidden
        sizes = [v * n, n * h, h, h * n, n]
        parts = np.split(flat, np.cumsum(sizes)[:-1])
        return parts[0].reshape(v, n), parts[1].reshape(n, h), parts[2], parts[3].reshape(h, n), parts[4]

    def forward(self, ids):
        ids = np.asarray(ids, dtype=np.int64).reshape(-1)
        if ids.size == 0:
            raise ContractError("empty token sequence")
        if ids.min() < 0 or ids.max() >= self.vocab:
            raise DomainError(f"token id outside [0, {self.vocab})")
        emb, w1, b1, w2, b2 = self.unpack()
        e = emb[ids]
        z = e @ w1 + b1
        h, sig = _silu(z)
        return e + h @ w2 + b2, (ids, e, z, sig, h)

    def __call__(self, ids):
        return self.forward(ids)[0]

    def backward(self, cache, grad_out):
        ids, e, z, sig, h = cache
        grad = np.zeros_like(self.params)
        gemb, gw1, gb1, gw2, gb2 = self.unpack(grad)
        _, w1, _, w2, _ = self.unpack()
        gw2[...] = h.T @ grad_out
        gb2[...] = grad_out.sum(axis=0)
        gz = (grad_out @ w2.T) * (sig + z * sig * (1.0 - sig))
        gw1[...] = e.T @ gz
        gb1[...] = gz.sum(axis=0)
        np.add.at(gemb, ids, grad_out + gz @ w1.T)
        return grad


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------


@dataclass
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 16
    segment_len: int = 32
    iterations: int = 1000
    t_min: float = 1e-5
    weight_enc: float = 1.0
    weight_dp: float = 1.0
    weight_diff: float = 1.0
    log_every: int = 100

    def validate(self):
        if not self.lr > 0:
            raise DomainError("lr must be > 0")
        if self.batch_size < 1 or self.segment_len < 1 or self.iterations < 0:
            raise DomainError("batch_size, segment_len must be >= 1 and iterations >= 0")
        if not 0 < self.t_min < 1:
            raise DomainError("t_min must lie in (0, 1)")
        if min(self.weight_enc, self.weight_dp, self.weight_diff) < 0:
            raise DomainError("loss weights must be >= 0")
        return self


@dataclass
class DiffTtsModel:
    encoder: ToyEncoder
    duration_predictor: align.DurationPredictor
    score_net: ToyScoreNet
    spec: DiffusionSpec
    config: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        n = self.spec.dim_n
        if not (self.encoder.dim_n == self.duration_predictor.dim_n == self.score_net.arch.dim_n == n):
            raise ShapeError("encoder, duration predictor and score network disagree on dim_n")

    @classmethod
    def init(cls, vocab, dim_n, rng, config=None, schedule=None, arch=None, enc_hidden=32, dp_hidden=16):
        spec = DiffusionSpec.identity(dim_n, schedule or NoiseSchedule())
        return cls(
            ToyEncoder.init(vocab, dim_n, rng, enc_hidden),
            align.DurationPredictor.init(dim_n, rng, dp_hidden),
            ToyScoreNet.init(arch or ScoreNetArch(dim_n), rng),
            spec,
            config or TrainConfig(),
        )

    def groups(self):
        return [self.encoder, self.duration_predictor, self.score_net]

    def flat_params(self):
        return np.concatenate([g.params for g in self.groups()])

    def set_flat_params(self, flat):
        pos = 0
        for g in self.groups():
            g.params = np.array(flat[pos : pos + g.params.size])
            pos += g.params.size

    def copy(self):
        other = DiffTtsModel(
            ToyEncoder(self.encoder.vocab, self.encoder.dim_n, self.encoder.hidden, self.encoder.params.copy()),
            align.DurationPredictor(self.duration_predictor.dim_n, self.duration_predictor.hidden,
                                    self.duration_predictor.params.copy()),
            ToyScoreNet(self.score_net.arch, self.score_net.params.copy()),
            self.spec,
            TrainConfig(**asdict(self.config)),
        )
        return other


def encode(model, tokens):
    return model.encoder(tokens)


@dataclass
class LossReport:
    l_enc: float
    l_dp: float
    l_diff: float

    @property
    def total(self):
        return self.l_enc + self.l_dp + self.l_diff


def _segments(mu_frames, ys, seg_len, rng):
    """Random fixed-length windows (uniform start offsets), zero-padded with a mask."""
    b = len(ys)
    n = ys[0].shape[1]
    x0 = np.zeros((b, seg_len, n))
    mu = np.zeros((b, seg_len, n))
    mask = np.zeros((b, seg_len))
    starts = []
    for i, (m, y) in enumerate(zip(mu_frames, ys)):
        f = y.shape[0]
        s = int(rng.integers(0, f - seg_len + 1)) if f > seg_len else 0
        w = min(seg_len, f)
        x0[i, :w] = y[s : s + w]
        mu[i, :w] = m[s : s + w]
        mask[i, :w] = 1.0
        starts.append((s, w))
    return x0, mu, mask, starts


def loss_and_grads(model, tokens, features, rng, alignments=None):
    """Losses of one training step and the gradient of their weighted sum.

    Returns ``(LossReport, flat_gradient, alignments)``. Alignments are found by
    MAS with the current parameters unless supplied. The duration predictor
    sees the encoder output as a constant, so its loss sends nothing back into
    the encoder.
    """
    cfg = model.config
    n = model.spec.dim_n
    enc_out = [model.encoder.forward(tk) for tk in tokens]
    mu_tildes = [o[0] for o in enc_out]
    if alignments is None:
        alignments = [align.mas(m, y) for m, y in zip(mu_tildes, features)]

    total_elems = sum(y.size for y in features)
    # d(weighted loss)/d(mu_tilde), per sequence
    g_mu_tilde = [np.zeros_like(m) for m in mu_tildes]

    # encoder NLL, normalised per feature element
    l_enc = 0.0
    for i, (m, y, a) in enumerate(zip(mu_tildes, features, alignments)):
        l_enc += align.encoder_loss(m, y, a)
        r = m[a.frame_to_token] - y
        np.add.at(g_mu_tilde[i], a.frame_to_token, cfg.weight_enc * r / total_elems)
    l_enc /= total_elems

    # duration predictor on a detached copy of the encoder output
    all_mu = np.concatenate([m.copy() for m in mu_tildes])
    target = np.concatenate([align.durations_from_alignment(a) for a in alignments])
    pred, dp_cache = model.duration_predictor.forward(all_mu)
    l_dp = float(np.mean((pred - target) ** 2))
    g_dp, _ = model.duration_predictor.backward(dp_cache, 2.0 * (pred - target) / target.size)

    # diffusion loss on random fixed-length segments
    mu_frames = [m[a.frame_to_token] for m, a in zip(mu_tildes, alignments)]
    x0, mu_seg, mask, starts = _segments(mu_frames, features, cfg.segment_len, rng)
    batch = TrainBatch.draw(x0, mu_seg, rng, cfg.t_min, model.spec.T, mask)
    l_diff, g_net, g_mu_seg = diffusion_loss_and_grads(model.score_net, batch, model.spec, cfg.t_min)
    for i, ((s, w), a) in enumerate(zip(starts, alignments)):
        np.add.at(g_mu_tilde[i], a.frame_to_token[s : s + w], cfg.weight_diff * g_mu_seg[i, :w])

    g_enc = np.zeros_like(model.encoder.params)
    for (_, cache), g in zip(enc_out, g_mu_tilde):
        g_enc += model.encoder.backward(cache, g)

    grad = np.concatenate([g_enc, cfg.weight_dp * g_dp, cfg.weight_diff * g_net])
    report = LossReport(l_enc, l_dp, l_diff)
    return report, grad, alignments


def train_step(model, tokens, features, rng, opt_state):
    report, grad, _ = loss_and_grads(model, tokens, features, rng)
    opt_state, new_flat = adam_step(opt_state, model.flat_params(), grad)
    model.set_flat_params(new_flat)
    return report, opt_state


def train(model, corpus, rng, iterations=None, opt_state=None, on_checkpoint=None, checkpoint_every=0):
    """Alternate MAS and one Adam step on the summed loss for a fixed budget.

    Returns ``(model, records, opt_state)``; each record is a dict with the
    step number and the three loss terms.
    """
    cfg = model.config.validate()
    if len(corpus) == 0:
        raise ContractError("empty corpus")
    iters = cfg.iterations if iterations is None else int(iterations)
    if opt_state is None:
        opt_state = AdamState.zeros(model.flat_params().size, lr=cfg.lr)
    records = []
    for step in range(1, iters + 1):
        idx = rng.integers(0, len(corpus), size=cfg.batch_size)
        report, opt_state = train_step(
            model, [corpus.tokens[i] for i in idx], [corpus.features[i] for i in idx], rng, opt_state
        )
        records.append({"step": step, "l_enc": report.l_enc, "l_dp": report.l_dp, "l_diff": report.l_diff})
        if cfg.log_every and step % cfg.log_every == 0:
            log.info("step %d  enc %.4f  dp %.4f  diff %.4f", step, report.l_enc, report.l_dp, report.l_diff)
        if on_checkpoint is not None and checkpoint_every and step % checkpoint_every == 0:
            on_checkpoint(model, step)
    return model, records, opt_state


def predict_durations(model, tokens, tempo_factor=1.0):
    mu_tilde = model.encoder(tokens)
    return mu_tilde, align.scale_durations(model.duration_predictor(mu_tilde), tempo_factor)


def infer(model, tokens, sampler_cfg, tempo_factor, rng, return_alignment=False):
    """Tokens -> durations -> aligned means -> terminal noise -> reverse diffusion."""
    mu_tilde, durs = predict_durations(model, tokens, tempo_factor)
    mu = align.expand_encoded(mu_tilde, durs)
    x_T = sample_terminal(mu, sampler_cfg.temperature_tau, rng)
    y = solve_reverse(model.score_net, model.spec, mu, x_T, sampler_cfg, rng)
    if return_alignment:
        return y, align.Alignment.from_durations(durs)
    return y


# ---------------------------------------------------------------------------
# evaluation against the corpus recipe
# ---------------------------------------------------------------------------


def duration_recovery(model, corpus, tokens, features):
    """Fraction of tokens whose MAS duration equals the corpus ground truth."""
    hit = total = 0
    for tk, y in zip(tokens, features):
        a = align.mas(model.encoder(tk), y)
        hit += int(np.sum(a.durations == corpus.true_durations(tk)))
        total += len(tk)
    return hit / total


def encoder_pattern_error(model, corpus):
    """Mean distance between each symbol's encoding and its target pattern."""
    mu = model.encoder(np.arange(corpus.recipe.vocab))
    return float(np.mean(np.linalg.norm(mu - corpus.patterns, axis=1)))


def frame_error(corpus, tokens, alignment, y):
    """Per-frame RMS deviation of ``y`` from the pattern of the token each frame belongs to."""
    target = corpus.patterns[np.asarray(tokens)[alignment.frame_to_token]]
    return np.sqrt(np.mean((y - target) ** 2, axis=1))


def reconstruction_error(model, corpus, token_lists, sampler_cfg, rng, tempo_factor=1.0):
    errs = []
    for tk in token_lists:
        y, a = infer(model, tk, sampler_cfg, tempo_factor, rng, return_alignment=True)
        errs.append(frame_error(corpus, tk, a, y))
    return float(np.mean(np.concatenate(errs)))


def solver_error(model, token_lists, step_list, tau, rng, reference_steps=1000):
    """Mean per-frame RMS gap between N-step ODE outputs and a fine-step reference.

    Every N shares the same terminal draw, so only discretization error is measured.
    """
    errs = {int(n): [] for n in step_list}
    for tk in token_lists:
        mu_tilde, durs = predict_durations(model, tk)
        mu = align.expand_encoded(mu_tilde, durs)
        x_T = sample_terminal(mu, tau, rng)
        ref = solve_reverse(model.score_net, model.spec, mu, x_T, SamplerConfig(reference_steps, Mode.ODE, tau))
        for n in errs:
            y = solve_reverse(model.score_net, model.spec, mu, x_T, SamplerConfig(n, Mode.ODE, tau))
            errs[n].append(np.sqrt(np.mean((y - ref) ** 2, axis=1)))
    return {n: float(np.mean(np.concatenate(v))) for n, v in errs.items()}


def default_sampler(num_steps=100, tau=1.5, mode=Mode.ODE, seed=0):
    return SamplerConfig(num_steps, mode, tau, seed)
