import mpmath
import numpy as np
import pytest

from pvsa.feeder_io import load_feeder
from pvsa.loadflow import solve
from pvsa.network import FeederGraph, LineSegment, LoadSpec, PhaseImpedanceMatrix


def z_line(r, x, phases="abc", mutual=0.3):
    """Symmetric phase-frame matrix with self r+jx and mutuals ``mutual`` times that."""
    k = len(phases)
    block = np.full((k, k), mutual * (r + 1j * x))
    np.fill_diagonal(block, r + 1j * x)
    return PhaseImpedanceMatrix.from_block(block, phases)


def y_feeder(v_base=2400.0):
    """Six-bus feeder with one lateral split::

        0 -- 1 -- 2 -- 3 -- 5(a)
                   \\
                    4(ac)
    """
    buses = {"0": "abc", "1": "abc", "2": "abc", "3": "abc", "4": "ac", "5": "a"}
    z = {
        ("0", "1"): z_line(0.10, 0.20),
        ("1", "2"): z_line(0.30, 0.25),
        ("2", "3"): z_line(0.20, 0.40),
        ("2", "4"): z_line(0.50, 0.30, "ac"),
        ("3", "5"): z_line(0.40, 0.10, "a"),
    }
    segs = [LineSegment(a, b, m) for (a, b), m in z.items()]
    return FeederGraph(buses, segs, "0", v_base, name="y"), z


@pytest.fixture(scope="session")
def ieee37():
    g, loads = load_feeder("ieee37")
    return g, loads, solve(g, loads)


@pytest.fixture(scope="session")
def ieee123():
    g, loads = load_feeder("ieee123")
    return g, loads, solve(g, loads)


@pytest.fixture
def yfeed():
    return y_feeder()


def y_loads():
    return LoadSpec({"3": (40e3 + 15e3j, 30e3 + 10e3j, 35e3 + 12e3j), "4": (20e3 + 5e3j, 0, 25e3 + 8e3j), "5": (15e3 + 4e3j, 0, 0)})


def lower_gamma_quad(a, x):
    """Regularized lower incomplete gamma by 40-digit adaptive quadrature."""
    mpmath.mp.dps = 40
    a, x = mpmath.mpf(a), mpmath.mpf(x)
    if x == 0:
        return 0.0
    if a < 1:
        # t = u^(1/a) removes the endpoint singularity
        val = mpmath.quad(lambda u: mpmath.exp(-(u ** (1 / a))), mpmath.linspace(0, x**a, 9)) / a
    else:
        pts = sorted(set(mpmath.linspace(0, x, 17) + ([a - 1] if a - 1 < x else [])))
        val = mpmath.quad(lambda t: t ** (a - 1) * mpmath.exp(-t), pts)
    return float(val / mpmath.gamma(a))
