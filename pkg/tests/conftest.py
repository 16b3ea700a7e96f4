import time

import numpy as np
import pytest

from difftts import tts


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


TOY_ITERATIONS = 4000
TOY_LR = 1e-3


def train_toy(seed, weight_enc=1.0, iterations=TOY_ITERATIONS):
    """Corpus + trained model for one seed; shared by the pipeline tests."""
    recipe = tts.CorpusRecipe()
    corpus = tts.gen_corpus(recipe, 400, np.random.default_rng(seed), seed=seed)
    cfg = tts.TrainConfig(lr=TOY_LR, iterations=iterations, weight_enc=weight_enc, log_every=0)
    model = tts.DiffTtsModel.init(recipe.vocab, recipe.dim_n, np.random.default_rng(seed + 100), cfg)
    untrained = model.copy()
    start = time.perf_counter()
    model, records, _ = tts.train(model, corpus, np.random.default_rng(seed + 300))
    seconds = time.perf_counter() - start
    held = corpus.draw_pairs(50, np.random.default_rng(seed + 200), noise=0.0)
    return {"corpus": corpus, "model": model, "untrained": untrained, "records": records, "held": held,
            "seconds": seconds}


@pytest.fixture(scope="session")
def toy_run():
    return train_toy(0)


_ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """``acceptance(number, ok, detail)`` records one criterion line for the summary."""

    def record(number, ok, detail):
        _ACCEPTANCE.append((number, bool(ok), detail))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
