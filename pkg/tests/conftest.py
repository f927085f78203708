import numpy as np
import pytest

from mesoplast.dd.materials import JunctionParams, MaterialParams
from mesoplast.dd.network import DislocationNetwork, Segment


@pytest.fixture
def mat():
    return MaterialParams()


@pytest.fixture
def therm_off():
    return JunctionParams(enabled=False)


def add_line(net, p0, p1, burgers, normal, system=0, mobile=True, n_nodes=2):
    """Insert a straight line with n_nodes equally spaced nodes."""
    p0 = np.asarray(p0, float)
    p1 = np.asarray(p1, float)
    t = np.linspace(0.0, 1.0, n_nodes)
    pts = p0[None] + t[:, None] * (p1 - p0)[None]
    ids = net.new_node_ids(n_nodes)
    seg = Segment(pts, ids, np.asarray(burgers, float),
                  np.asarray(normal, float), system, mobile)
    return net.add_segment(seg)


def make_net(box=1.02e-6, seed=0):
    return DislocationNetwork(box_size=box, rng=np.random.default_rng(seed))
