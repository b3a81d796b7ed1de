import numpy as np
import pytest

from sensealloc import NoiseModel


@pytest.fixture
def inverse_sqrt():
    return NoiseModel("inverse_sqrt")


@pytest.fixture
def inverse():
    return NoiseModel("inverse")


@pytest.fixture
def quantization():
    return NoiseModel("quantization")


@pytest.fixture
def tabulated():
    """Monotone convex table mimicking 1/sqrt(r) on [0.01, 50]."""
    grid = np.geomspace(0.01, 50.0, 400)
    return NoiseModel("tabulated", table=(grid, 1.0 / np.sqrt(grid)), floor=0.01)


def skin_lines(rows):
    """Render (b, g, r, label) rows in the skin-segmentation file format."""
    return "".join(f"{int(b)}\t{int(g)}\t{int(r)}\t{int(lab)}\n" for b, g, r, lab in rows)


def breast_lines(rows):
    """Render (id, f1..f9, cls) rows in the breast-cancer file format."""
    out = []
    for row in rows:
        out.append(",".join(str(v) for v in row) + "\n")
    return "".join(out)
