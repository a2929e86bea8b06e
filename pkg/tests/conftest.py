import sys
from pathlib import Path

import numpy as np
import pytest

TESTS_DIR = Path(__file__).parent
if str(TESTS_DIR) not in sys.path:
    sys.path.insert(0, str(TESTS_DIR))

from nids_ensemble import SampleMatrix


def make_matrix(values, labels, names=None) -> SampleMatrix:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    if names is None:
        names = tuple(f"f{i}" for i in range(values.shape[1]))
    return SampleMatrix(values, np.asarray(labels, dtype=np.int64), tuple(names))


@pytest.fixture
def tiny_blobs():
    """Separable two-class blobs with one informative feature."""
    rng = np.random.default_rng(11)
    n = 300
    labels = (rng.random(n) < 0.3).astype(np.int64)
    values = rng.normal(size=(n, 4))
    values[:, 2] += 3.0 * labels
    return make_matrix(values, labels)
