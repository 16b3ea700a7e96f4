"""On-disk formats.

Parameter checkpoint::

    DIFFTTS-PARAMS <format_version>\\n
    <one line of JSON: sections with name/count/shape info, spec, config>\\n
    <float64 little-endian values of every section, in order>

Corpus directory: ``manifest.json`` plus ``features/pair_XXXXX.csv`` (header
``f_1..f_n``, one frame per row). Loss curves and benchmark rows are CSV with
fixed headers. Floats are written with ``repr`` so a round trip is exact.
"""

import csv
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from difftts.align import DurationPredictor
from difftts.errors import ConfigError
from difftts.schedule import DiffusionSpec, NoiseSchedule
from difftts.scorenet import ScoreNetArch, ToyScoreNet
from difftts.tts import CorpusRecipe, DiffTtsModel, ToyCorpus, ToyEncoder, TrainConfig

MAGIC = "DIFFTTS-PARAMS"
FORMAT_VERSION = 1


def _fmt(v):
    return repr(float(v))


def write_params(path, sections, meta=None):
    """``sections`` is a list of (name, info_dict, flat_array)."""
    header = {"format_version": FORMAT_VERSION, "sections": [], **(meta or {})}
    blobs = []
    for name, info, arr in sections:
        arr = np.ascontiguousarray(arr, dtype="<f8").reshape(-1)
        header["sections"].append({"name": name, "count": int(arr.size), **info})
        blobs.append(arr.tobytes())
    header["param_count"] = sum(s["count"] for s in header["sections"])
    with open(path, "wb") as fh:
        fh.write(f"{MAGIC} {FORMAT_VERSION}\n".encode())
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode())
        for b in blobs:
            fh.write(b)


def read_params(path):
    """Returns (header, {name: flat array})."""
    try:
        with open(path, "rb") as fh:
            first = fh.readline().decode().split()
            if len(first) != 2 or first[0] != MAGIC:
                raise ConfigError(f"{path}: not a parameter file")
            if int(first[1]) != FORMAT_VERSION:
                raise ConfigError(f"{path}: unsupported format version {first[1]}")
            header = json.loads(fh.readline().decode())
            data = np.frombuffer(fh.read(), dtype="<f8")
    except (OSError, UnicodeDecodeError, json.JSONDecodeError, ValueError) as exc:
        raise ConfigError(f"cannot read parameter file {path}: {exc}") from exc
    if data.size != header["param_count"]:
        raise ConfigError(f"{path}: header declares {header['param_count']} values, found {data.size}")
    out, pos = {}, 0
    for sec in header["sections"]:
        out[sec["name"]] = data[pos : pos + sec["count"]].astype(np.float64)
        pos += sec["count"]
    return header, out


def save_score_net(path, net):
    write_params(path, [("score_net", {"arch": net.arch.to_dict()}, net.params)])


def load_score_net(path):
    header, arrays = read_params(path)
    info = {s["name"]: s for s in header["sections"]}["score_net"]
    return ToyScoreNet(ScoreNetArch.from_dict(info["arch"]), arrays["score_net"])


def _spec_dict(spec):
    s = spec.schedule
    return {"beta0": s.beta0, "beta1": s.beta1, "T": s.horizon_T, "sigma_diag": spec.sigma_diag.tolist()}


def save_model(path, model):
    enc, dp, net = model.encoder, model.duration_predictor, model.score_net
    write_params(
        path,
        [
            ("encoder", {"vocab": enc.vocab, "dim_n": enc.dim_n, "hidden": enc.hidden}, enc.params),
            ("duration_predictor", {"dim_n": dp.dim_n, "hidden": dp.hidden}, dp.params),
            ("score_net", {"arch": net.arch.to_dict()}, net.params),
        ],
        {"spec": _spec_dict(model.spec), "train_config": asdict(model.config)},
    )


def load_model(path):
    header, arrays = read_params(path)
    info = {s["name"]: s for s in header["sections"]}
    try:
        e, d, s = info["encoder"], info["duration_predictor"], info["score_net"]
        sp = header["spec"]
    except KeyError as exc:
        raise ConfigError(f"{path}: missing section {exc}") from exc
    spec = DiffusionSpec(NoiseSchedule(sp["beta0"], sp["beta1"], sp["T"]), np.asarray(sp["sigma_diag"]),
                         len(sp["sigma_diag"]))
    return DiffTtsModel(
        ToyEncoder(e["vocab"], e["dim_n"], e["hidden"], arrays["encoder"]),
        DurationPredictor(d["dim_n"], d["hidden"], arrays["duration_predictor"]),
        ToyScoreNet(ScoreNetArch.from_dict(s["arch"]), arrays["score_net"]),
        spec,
        TrainConfig(**header.get("train_config", {})),
    )


# -- matrices ----------------------------------------------------------------


def write_matrix(path, mat, prefix="f"):
    mat = np.atleast_2d(np.asarray(mat, dtype=np.float64))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"{prefix}_{i + 1}" for i in range(mat.shape[1])])
        for row in mat:
            w.writerow([_fmt(v) for v in row])


def read_matrix(path):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if len(rows) < 2:
        raise ConfigError(f"{path}: expected a header and at least one row")
    try:
        return np.array([[float(v) for v in r] for r in rows[1:]], dtype=np.float64)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow(["" if r.get(k) is None else (_fmt(r[k]) if isinstance(r[k], float) else r[k]) for k in header])


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_loss_curve(path, records):
    write_rows(path, ["step", "l_enc", "l_dp", "l_diff"], records)


def write_durations(path, durations):
    d = np.asarray(durations, dtype=np.int64)
    rows = [{"token": i + 1, "duration": int(v), "log_duration": float(np.log(v))} for i, v in enumerate(d)]
    write_rows(path, ["token", "duration", "log_duration"], rows)


def read_durations(path):
    return np.array([int(r["duration"]) for r in read_rows(path)], dtype=np.int64)


# -- corpus ------------------------------------------------------------------


def save_corpus(directory, corpus):
    directory = Path(directory)
    (directory / "features").mkdir(parents=True, exist_ok=True)
    pairs = []
    for i, (tk, y) in enumerate(zip(corpus.tokens, corpus.features)):
        name = f"features/pair_{i:05d}.csv"
        write_matrix(directory / name, y)
        pairs.append({"file": name, "tokens": [int(v) for v in tk]})
    manifest = {
        "format_version": FORMAT_VERSION,
        "seed": corpus.seed,
        "recipe": asdict(corpus.recipe),
        "vocab": corpus.recipe.vocab,
        "noise": corpus.recipe.noise,
        "patterns": [[float(v) for v in row] for row in corpus.patterns],
        "durations": [int(v) for v in corpus.symbol_durations],
        "pairs": pairs,
    }
    with open(directory / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_corpus(directory):
    directory = Path(directory)
    try:
        with open(directory / "manifest.json") as fh:
            m = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read corpus manifest in {directory}: {exc}") from exc
    recipe = CorpusRecipe(**m["recipe"])
    return ToyCorpus(
        recipe,
        np.asarray(m["patterns"], dtype=np.float64),
        np.asarray(m["durations"], dtype=np.int64),
        [np.asarray(p["tokens"], dtype=np.int64) for p in m["pairs"]],
        [read_matrix(directory / p["file"]) for p in m["pairs"]],
        m.get("seed"),
    )
