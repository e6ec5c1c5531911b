import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from poel.model import build_model  # noqa: E402


@pytest.fixture(scope="session")
def toy_model():
    model = build_model(seed=0)
    model.eval()
    return model


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    from helpers import make_corpus

    d = tmp_path_factory.mktemp("corpus")
    make_corpus(d, 8, size=192, seed=7)
    return d


@pytest.fixture(autouse=True)
def _fixed_torch_seed():
    torch.manual_seed(1234)
