"""Run configuration: a JSON file with every field optional.

Schema (defaults shown)::

    {
      "seed": 0,
      "out_dir": "runs",                      # or $DIFFTTS_OUT
      "schedule": {"beta0": 0.05, "beta1": 20.0, "T": 1.0},
      "sampler":  {"num_steps": 100, "mode": "ode", "tau": 1.5, "tempo": 1.0},
      "model":    {"hidden": [64, 64], "time_dim": 16, "max_freq": 1000.0,
                   "enc_hidden": 32, "dp_hidden": 16},
      "train":    {"lr": 1e-4, "batch_size": 16, "segment_len": 32,
                   "iterations": 1000, "t_min": 1e-5, "weight_enc": 1.0,
                   "weight_dp": 1.0, "weight_diff": 1.0, "log_every": 100},
      "corpus":   {"size": 400, "vocab": 12, "dim_n": 8, "min_duration": 2,
                   "max_duration": 6, "min_tokens": 4, "max_tokens": 10,
                   "noise": 0.2, "pattern_scale": 1.0}
    }

Unknown keys are rejected so typos fail loudly.
"""

import json
import os
from dataclasses import asdict, dataclass, field, fields

from difftts.errors import ConfigError, DiffTTSError
from difftts.sampler import Mode, SamplerConfig
from difftts.schedule import NoiseSchedule
from difftts.scorenet import ScoreNetArch
from difftts.tts import CorpusRecipe, TrainConfig

OUT_ENV = "DIFFTTS_OUT"


@dataclass
class ScheduleSection:
    beta0: float = 0.05
    beta1: float = 20.0
    T: float = 1.0


@dataclass
class SamplerSection:
    num_steps: int = 100
    mode: str = "ode"
    tau: float = 1.5
    tempo: float = 1.0


@dataclass
class ModelSection:
    hidden: list = field(default_factory=lambda: [64, 64])
    time_dim: int = 16
    max_freq: float = 1000.0
    enc_hidden: int = 32
    dp_hidden: int = 16


@dataclass(frozen=True)
class CorpusSection(CorpusRecipe):
    size: int = 400

    def recipe(self):
        d = asdict(self)
        d.pop("size")
        return CorpusRecipe(**d)


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str = field(default_factory=lambda: os.environ.get(OUT_ENV, "runs"))
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    sampler: SamplerSection = field(default_factory=SamplerSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainConfig = field(default_factory=TrainConfig)
    corpus: CorpusSection = field(default_factory=CorpusSection)

    # -- derived objects ------------------------------------------------------

    def noise_schedule(self):
        s = self.schedule
        return NoiseSchedule(float(s.beta0), float(s.beta1), float(s.T))

    def sampler_config(self):
        s = self.sampler
        return SamplerConfig(int(s.num_steps), Mode(s.mode), float(s.tau), int(self.seed))

    def arch(self, dim_n):
        m = self.model
        return ScoreNetArch(dim_n, tuple(m.hidden), int(m.time_dim), float(m.max_freq))

    def validate(self):
        """Build every derived object once so bad values fail before any work."""
        try:
            sched = self.noise_schedule()
            if sched.terminal_survival() >= 1e-4:
                raise ConfigError(
                    f"schedule leaves exp(-B(0,T)) = {sched.terminal_survival():.3g} >= 1e-4 of the data at T"
                )
            self.sampler_config()
            if not float(self.sampler.tempo) > 0:
                raise ConfigError("sampler.tempo must be > 0")
            self.arch(self.corpus.dim_n)
            if int(self.model.enc_hidden) < 1 or int(self.model.dp_hidden) < 1:
                raise ConfigError("hidden sizes must be >= 1")
            self.train.validate()
            self.corpus.recipe().validate()
            if int(self.corpus.size) < 1:
                raise ConfigError("corpus.size must be >= 1")
        except ConfigError:
            raise
        except (DiffTTSError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def to_dict(self):
        return asdict(self)


_SECTIONS = {
    "schedule": ScheduleSection,
    "sampler": SamplerSection,
    "model": ModelSection,
    "train": TrainConfig,
    "corpus": CorpusSection,
}


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    return cls(**data)


def from_dict(data):
    data = dict(data)
    top = {}
    for key in ("seed", "out_dir"):
        if key in data:
            top[key] = data.pop(key)
    sections = {}
    for key, cls in _SECTIONS.items():
        sections[key] = _build(cls, data.pop(key, {}), key)
    if data:
        raise ConfigError(f"unknown top-level keys: {sorted(data)}")
    return RunConfig(**top, **sections)


def load(path=None):
    if path is None:
        return RunConfig()
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return from_dict(data)


def save(path, cfg):
    with open(path, "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")
