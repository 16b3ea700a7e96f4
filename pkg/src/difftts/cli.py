"""Command-line entry point: ``difftts <subcommand> [flags]``.

Exit codes: 0 success, 2 usage error, 3 configuration/validation error,
4 numerical failure. Logs go to stderr; data goes to files under ``--out``.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from difftts import __version__, align, bench, config, io, tts
from difftts.diffusion import simulate_forward_em
from difftts.errors import ConfigError, DiffTTSError, NumericalError
from difftts.sampler import Mode, log_likelihood, sample_terminal, solve_reverse
from difftts.schedule import DiffusionSpec

log = logging.getLogger("difftts")

EXIT_USAGE, EXIT_CONFIG, EXIT_NUMERIC = 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser():
    p = _Parser(prog="difftts", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory (default: config out_dir or $DIFFTTS_OUT)")

    def sampler_flags(sp):
        sp.add_argument("--steps", type=int, dest="num_steps", help="reverse-diffusion steps N")
        sp.add_argument("--mode", choices=[m.value for m in Mode])
        sp.add_argument("--tau", type=float, help="terminal temperature")

    sp = sub.add_parser("gen-corpus", help="write a synthetic corpus")
    common(sp)
    sp.add_argument("--size", type=int)
    sp.add_argument("--noise", type=float)

    sp = sub.add_parser("train", help="train the toy model on a corpus")
    common(sp)
    sp.add_argument("--corpus", required=True, help="corpus directory")
    sp.add_argument("--iterations", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--checkpoint-every", type=int, default=0)

    sp = sub.add_parser("infer", help="generate features for a token sequence")
    common(sp)
    sampler_flags(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--tokens", required=True, type=_int_list)
    sp.add_argument("--tempo", type=float)
    sp.add_argument("--trace", action="store_true", help="also write the per-step trajectory CSV")

    sp = sub.add_parser("align", help="monotonic alignment of features to encoded tokens")
    common(sp)
    sp.add_argument("--encoded", required=True, help="CSV, one encoded token per row")
    sp.add_argument("--features", required=True, help="CSV, one frame per row")

    sp = sub.add_parser("simulate", help="Euler-Maruyama forward diffusion paths")
    common(sp)
    sp.add_argument("--x0", type=_float_list, required=True)
    sp.add_argument("--mu", type=_float_list)
    sp.add_argument("--sigma", type=_float_list, help="diagonal of the terminal covariance")
    sp.add_argument("--steps", type=int, default=200)
    sp.add_argument("--paths", type=int, default=1)

    sp = sub.add_parser("loglik", help="probability-flow log-likelihood of corpus pairs")
    common(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--limit", type=int, default=10)
    sp.add_argument("--steps", type=int, default=200, dest="num_steps")
    sp.add_argument("--probes", type=int, default=8)

    sp = sub.add_parser("bench", help="error and wall-clock versus step count")
    common(sp)
    sp.add_argument("--steps", type=_int_list, default=[4, 10, 100, 1000], dest="step_list")
    sp.add_argument("--repetitions", type=int, default=3)
    sp.add_argument("--samples", type=int, default=20_000, help="analytic case sample count")
    sp.add_argument("--model", help="benchmark a trained model instead of the analytic score")
    sp.add_argument("--corpus", help="corpus for --model (patterns are the reference)")
    sp.add_argument("--sentences", type=int, default=20)
    return p


def _load_config(args):
    raw = {}
    if args.config:
        raw = json.loads(json.dumps(config.load(args.config).to_dict()))
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.out:
        raw["out_dir"] = args.out
    overrides = {
        "sampler": {"num_steps": getattr(args, "num_steps", None), "mode": getattr(args, "mode", None),
                    "tau": getattr(args, "tau", None), "tempo": getattr(args, "tempo", None)},
        "train": {"iterations": getattr(args, "iterations", None), "lr": getattr(args, "lr", None)},
        "corpus": {"size": getattr(args, "size", None), "noise": getattr(args, "noise", None)},
    }
    for section, values in overrides.items():
        for key, val in values.items():
            if val is not None:
                raw.setdefault(section, {})[key] = val
    return config.from_dict(raw).validate()


def _out_dir(cfg):
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out, cfg, command, extra=None):
    manifest = {"command": command, "version": __version__, "seed": cfg.seed, "config": cfg.to_dict()}
    manifest.update(extra or {})
    with open(out / "run_manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


def cmd_gen_corpus(args, cfg):
    out = _out_dir(cfg)
    rng = np.random.default_rng(cfg.seed)
    corpus = tts.gen_corpus(cfg.corpus.recipe(), int(cfg.corpus.size), rng, seed=cfg.seed)
    io.save_corpus(out, corpus)
    log.info("wrote %d pairs to %s", len(corpus), out)


def cmd_train(args, cfg):
    corpus = io.load_corpus(args.corpus)
    out = _out_dir(cfg)
    rng = np.random.default_rng(cfg.seed)
    recipe = corpus.recipe
    model = tts.DiffTtsModel.init(
        recipe.vocab, recipe.dim_n, rng, config=cfg.train, schedule=cfg.noise_schedule(),
        arch=cfg.arch(recipe.dim_n), enc_hidden=cfg.model.enc_hidden, dp_hidden=cfg.model.dp_hidden,
    )

    def checkpoint(m, step):
        io.save_model(out / f"model_step{step:07d}.ckpt", m)

    model, records, _ = tts.train(model, corpus, rng, on_checkpoint=checkpoint,
                                  checkpoint_every=args.checkpoint_every)
    io.save_model(out / "model.ckpt", model)
    io.write_loss_curve(out / "loss_curve.csv", records)
    _write_manifest(out, cfg, "train", {"corpus": str(args.corpus)})


def cmd_infer(args, cfg):
    model = io.load_model(args.model)
    out = _out_dir(cfg)
    scfg = cfg.sampler_config()
    rng = np.random.default_rng(cfg.seed)
    mu_tilde, durs = tts.predict_durations(model, args.tokens, float(cfg.sampler.tempo))
    mu = align.expand_encoded(mu_tilde, durs)
    x_T = sample_terminal(mu, scfg.temperature_tau, rng)
    trace = out / "trajectory.csv" if args.trace else None
    y = solve_reverse(model.score_net, model.spec, mu, x_T, scfg, rng, trace_path=trace)
    io.write_matrix(out / "features.csv", y)
    io.write_durations(out / "durations.csv", durs)


def cmd_align(args, cfg):
    mu_tilde = io.read_matrix(args.encoded)
    y = io.read_matrix(args.features)
    out = _out_dir(cfg)
    a = align.mas(mu_tilde, y)
    io.write_durations(out / "durations.csv", a.durations)
    log.info("encoder loss %.6f", align.encoder_loss(mu_tilde, y, a))


def cmd_simulate(args, cfg):
    x0 = np.asarray(args.x0)
    n = x0.size
    mu = np.asarray(args.mu) if args.mu else np.zeros(n)
    sigma = np.asarray(args.sigma) if args.sigma else np.ones(n)
    if mu.size != n or sigma.size != n:
        raise ConfigError("--x0, --mu and --sigma must have the same length")
    spec = DiffusionSpec(cfg.noise_schedule(), sigma, n)
    out = _out_dir(cfg)
    rng = np.random.default_rng(cfg.seed)
    start = np.broadcast_to(x0, (args.paths, n))
    path = simulate_forward_em(spec, start, mu, args.steps, rng, seed=cfg.seed)
    for i in range(args.paths):
        path.to_csv(out / f"path_{i:04d}.csv", index=i)


def cmd_loglik(args, cfg):
    model = io.load_model(args.model)
    corpus = io.load_corpus(args.corpus)
    out = _out_dir(cfg)
    rng = np.random.default_rng(cfg.seed)
    rows = []
    for i in range(min(args.limit, len(corpus))):
        tk, y = corpus.tokens[i], corpus.features[i]
        mu_tilde = model.encoder(tk)
        mu = align.expand_encoded(mu_tilde, align.mas(mu_tilde, y).durations)
        est = log_likelihood(model.score_net, model.spec, mu, y, args.num_steps, args.probes, rng)
        rows.append({"index": i, "frames": int(y.shape[0]), "value": est.value, "std_error": est.std_error,
                     "per_element": est.value / y.size, "num_probes": est.num_probes})
    io.write_rows(out / "loglik.csv", ["index", "frames", "value", "std_error", "per_element", "num_probes"], rows)


def cmd_bench(args, cfg):
    out = _out_dir(cfg)
    rng = np.random.default_rng(cfg.seed)
    if args.model:
        if not args.corpus:
            raise ConfigError("--model needs --corpus")
        model = io.load_model(args.model)
        corpus = io.load_corpus(args.corpus)
        toks, _ = corpus.draw_pairs(args.sentences, np.random.default_rng(cfg.seed + 1))
        case = bench.model_case(model, corpus, toks, tau=cfg.sampler.tau, seed=cfg.seed)
    else:
        case = bench.analytic_case(num_samples=args.samples, mode=Mode(cfg.sampler.mode))
    rows = bench.bench_steps(case, args.step_list, args.repetitions, rng)
    io.write_rows(out / "bench.csv", bench.BENCH_COLUMNS, rows)
    if len(rows) >= 3:
        log.info("timing affine R^2 = %.4f", bench.affine_r2([r["num_steps"] for r in rows],
                                                            [r["ms_mean"] for r in rows]))


COMMANDS = {
    "gen-corpus": cmd_gen_corpus,
    "train": cmd_train,
    "infer": cmd_infer,
    "align": cmd_align,
    "simulate": cmd_simulate,
    "loglik": cmd_loglik,
    "bench": cmd_bench,
}


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    try:
        cfg = _load_config(args)
        COMMANDS[args.command](args, cfg)
    except NumericalError as exc:
        print(f"difftts: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DiffTTSError, OSError) as exc:
        print(f"difftts: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
