import numpy as np
import pytest
from scipy import ndimage

FIG_VALUES = [4.6, 0.7, 4.0, 1.3, 3.0, 1.5]

EIGHT_CONN = np.ones((3, 3), dtype=int)


def sublevel_components(values: np.ndarray, t: float) -> int:
    """Independent flood-fill oracle: number of 8-connected components of
    the pixel set {f <= t}."""
    _, count = ndimage.label(np.asarray(values) <= t, structure=EIGHT_CONN)
    return count


@pytest.fixture
def fig_image():
    from tdanet import ImageTensor

    return ImageTensor(np.array([FIG_VALUES]))


@pytest.fixture
def fig_diagram(fig_image):
    from tdanet import diagram_for_image

    return diagram_for_image(fig_image)
