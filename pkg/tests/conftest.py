from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from helpers import write_blob_tree, write_pair_tree, write_volume_tree  # noqa: E402


@pytest.fixture()
def pair_root(tmp_path):
    return write_pair_tree(tmp_path, "das_event", train_n=4, test_n=2)


@pytest.fixture()
def volume_root(tmp_path):
    return write_volume_tree(tmp_path)


@pytest.fixture(scope="session")
def blob_root(tmp_path_factory):
    return write_blob_tree(tmp_path_factory.mktemp("blobs"))
