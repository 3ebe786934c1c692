import numpy as np
import pytest

from bkhm.fields import ChannelGrid


@pytest.fixture
def grid() -> ChannelGrid:
    # default channel: circumference 2 pi, height pi
    return ChannelGrid(L=2 * np.pi, a=0.0, b=np.pi, N1=32, N2=15)


@pytest.fixture
def offset_grid() -> ChannelGrid:
    # anisotropic cells, walls away from zero
    return ChannelGrid(L=5.0, a=-0.3, b=2.4, N1=24, N2=11)
