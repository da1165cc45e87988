import numpy as np
import pytest

from rbmkit import RbmParams


@pytest.fixture
def ref_model() -> RbmParams:
    """Pinned 2x2 binary model used across the suite.

    Small enough for hand expansion and exact enumeration, asymmetric
    enough that index mix-ups show up.
    """
    return RbmParams(
        w=np.array([[1.0, -1.0], [0.5, 0.2]]),
        a=np.array([0.1, -0.2]),
        b=np.array([0.3, 0.0]),
    )


@pytest.fixture
def zero_model():
    def build(n_visible=2, n_hidden=2, visible_kind="binary"):
        return RbmParams(np.zeros((n_visible, n_hidden)), np.zeros(n_visible),
                         np.zeros(n_hidden), visible_kind)
    return build
