import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from synth_data import make_synth_dataset  # noqa: E402

from qshield import dataio  # noqa: E402

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CACHE_ROOT = os.path.join(REPO_ROOT, ".qshield_cache")


CRITERION_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERION_LINES:
            terminalreporter.write_line(line)


def _has_real_mnist(data_dir: str) -> bool:
    try:
        split = dataio.load_split(data_dir, "mnist", normalized=False)
    except Exception:
        return False
    return split.train_images.count == 60000 and split.test_images.count == 10000


def resolve_data_dir() -> tuple[str, bool]:
    """Returns (data_dir, is_real_mnist).

    Prefers $QSHIELD_DATA_DIR, then ./data; falls back to the deterministic
    synthetic digits written under the repo cache dir.
    """
    for candidate in (os.environ.get("QSHIELD_DATA_DIR"), os.path.join(REPO_ROOT, "data")):
        if candidate and os.path.isdir(candidate):
            try:
                dataio.load_split(candidate, "mnist", normalized=False)
                return candidate, _has_real_mnist(candidate)
            except Exception:
                continue
    synth_root = os.path.join(CACHE_ROOT, "synth-data")
    make_synth_dataset(synth_root)
    return synth_root, False


@pytest.fixture(scope="session")
def data_env():
    data_dir, is_real = resolve_data_dir()
    if not is_real:
        print(
            "\n[data] official MNIST not found; using the deterministic synthetic "
            "digit dataset (see tests/synth_data.py). Set QSHIELD_DATA_DIR to run "
            "against the real files."
        )
    return {"data_dir": data_dir, "real_mnist": is_real}


@pytest.fixture()
def rng_np():
    return np.random.default_rng(1234)
