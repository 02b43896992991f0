import pathlib

import numpy as np
import pytest

from strokeguess.corpus import parse_corpus
from strokeguess.lexicon import load_lexicon

DATA_DIR = pathlib.Path(__file__).resolve().parent.parent / "data"


@pytest.fixture(scope="session")
def data_dir():
    return DATA_DIR


@pytest.fixture(scope="session")
def lexicon():
    return load_lexicon(DATA_DIR / "lexicon")


@pytest.fixture(scope="session")
def mini_corpus():
    return parse_corpus(DATA_DIR / "mini_corpus.jsonl", strict=True)


@pytest.fixture(scope="session")
def separable_corpus():
    return parse_corpus(DATA_DIR / "separable_corpus.jsonl", strict=True)


def central_diff(f, x, eps=1e-5):
    """Central finite-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(x.size):
        up = x.copy()
        up.flat[i] += eps
        down = x.copy()
        down.flat[i] -= eps
        grad.flat[i] = (f(up) - f(down)) / (2.0 * eps)
    return grad


def relative_error(analytic, numeric):
    analytic = np.asarray(analytic).ravel()
    numeric = np.asarray(numeric).ravel()
    denom = max(float(np.linalg.norm(numeric)), 1e-12)
    return float(np.linalg.norm(analytic - numeric)) / denom
