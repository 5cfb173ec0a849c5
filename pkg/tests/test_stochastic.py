import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize, stats
from scipy.spatial.distance import jensenshannon

from pvsa.errors import BinningMismatch, DegenerateDistribution, DimensionMismatch, InvalidShape, NotPositiveSemidefinite
from pvsa.feeder_io import Stochastic, StochasticActor, load_scenario
from pvsa.loadflow import SolutionState, solve
from pvsa.network import FeederGraph, LineSegment, LoadSpec, Phase, PhaseImpedanceMatrix, shared_path_impedance
from pvsa.stochastic import (
    EmpiricalHistogram,
    GammaParams,
    GaussianMoments,
    NakagamiParams,
    PowerChangeCovariance,
    SensitivityVectors,
    assemble_covariance,
    bin_probabilities,
    build_sensitivity_vectors,
    fitted_js_distance,
    gamma_params,
    js_distance,
    layout_index,
    mc_distribution,
    moments,
    nakagami_cdf,
    nakagami_params,
    nakagami_pdf,
    pack_injections,
    regularized_lower_incomplete_gamma,
    sample_power_changes,
    unpack_injections,
    violation_probability,
)
from pvsa.vsa import ActorPerturbation, delta_v_multi

from conftest import lower_gamma_quad, z_line


@pytest.fixture(scope="module")
def odd37(ieee37):
    g, loads, base = ieee37
    sc = load_scenario("odd-nodes")
    cov = assemble_covariance(g, sc)
    cv = build_sensitivity_vectors(g, base, "9", "a")
    return g, loads, base, sc, cov, cv


@pytest.fixture(scope="module")
def linear_mc(odd37):
    g, loads, base, _, cov, _ = odd37
    return mc_distribution(g, loads, cov, "9", "a", 100_000, 20240, base=base)


# -- incomplete gamma -------------------------------------------------------


def test_incomplete_gamma_trivial_values():
    assert regularized_lower_incomplete_gamma(2.5, 0.0) == 0.0
    for x in (0.1, 1.0, 7.0, 40.0):
        assert regularized_lower_incomplete_gamma(1.0, x) == pytest.approx(1 - math.exp(-x), abs=1e-14)
    with pytest.raises(InvalidShape):
        regularized_lower_incomplete_gamma(0.0, 1.0)


def test_incomplete_gamma_half():
    ref = lower_gamma_quad(0.5, 0.5)
    assert ref == pytest.approx(math.erf(math.sqrt(0.5)), abs=1e-14)
    assert abs(regularized_lower_incomplete_gamma(0.5, 0.5) - ref) <= 1e-10
    assert abs(ref - 0.682689492137) < 1e-12


@pytest.mark.parametrize("a", [0.05, 0.3, 0.5, 0.8846, 1.7, 6.0, 25.5, 60.0])
@pytest.mark.parametrize("x", [1e-3, 0.4, 1.0, 3.0, 20.0, 90.0])
def test_incomplete_gamma_against_quadrature(a, x):
    assert abs(regularized_lower_incomplete_gamma(a, x) - lower_gamma_quad(a, x)) <= 1e-10


@settings(max_examples=80, deadline=None)
@given(st.floats(0.05, 60.0), st.floats(0.0, 150.0))
def test_incomplete_gamma_against_mpmath(a, x):
    got = regularized_lower_incomplete_gamma(a, x)
    assert 0.0 <= got <= 1.0
    mpmath.mp.dps = 30
    assert abs(got - float(mpmath.gammainc(a, 0, x, regularized=True))) <= 1e-10


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 30.0), st.lists(st.floats(0.0, 80.0), min_size=2, max_size=10))
def test_incomplete_gamma_monotone(a, xs):
    xs = sorted(xs)
    vals = regularized_lower_incomplete_gamma(a, np.array(xs))
    assert np.all(np.diff(vals) >= -1e-15)


# -- Nakagami / Gamma -------------------------------------------------------


def test_pdf_special_cases():
    p = NakagamiParams(1.0, 1.0)
    x = np.linspace(0, 4, 9)
    np.testing.assert_allclose(nakagami_pdf(p, x), 2 * x * np.exp(-x * x), rtol=1e-14)
    assert nakagami_pdf(NakagamiParams(2.3, 0.7), 0.0) == 0.0


@pytest.mark.parametrize("m, omega", [(0.5, 1.0), (0.88, 215.6), (1.0, 3.0), (4.7, 0.02)])
def test_pdf_normalized_and_matches_cdf(m, omega):
    p = NakagamiParams(m, omega)
    total, _ = integrate.quad(lambda x: nakagami_pdf(p, x), 0, np.inf, limit=200)
    assert abs(total - 1) <= 1e-6
    for x in np.sqrt(omega) * np.array([0.3, 1.0, 2.0]):
        part, _ = integrate.quad(lambda t: nakagami_pdf(p, t), 0, x, limit=200)
        assert nakagami_cdf(p, x) == pytest.approx(part, abs=1e-8)


@pytest.mark.parametrize("m, omega", [(0.75, 2.0), (1.0, 1.0), (3.2, 0.5)])
def test_mode_by_numeric_argmax(m, omega):
    p = NakagamiParams(m, omega)
    res = optimize.minimize_scalar(lambda x: -nakagami_pdf(p, x), bounds=(1e-9, 5 * math.sqrt(omega)), method="bounded",
                                   options={"xatol": 1e-10})
    assert p.mode == pytest.approx(res.x, rel=1e-5)


def test_gamma_examples():
    g = gamma_params(GaussianMoments(2.0, 2.0, 0.0))
    assert g.k == pytest.approx(1.0, rel=1e-14) and g.theta == pytest.approx(4.0, rel=1e-14)
    g = gamma_params(GaussianMoments(3.0, 0.0, 0.0))
    assert g.k == pytest.approx(0.5, rel=1e-14) and g.theta == pytest.approx(6.0, rel=1e-14)
    with pytest.raises(DegenerateDistribution):
        gamma_params(GaussianMoments(0.0, 0.0, 0.0))


def test_nakagami_from_gamma():
    n = nakagami_params(GammaParams(1.0, 2.0))
    assert n.m == 1.0 and n.omega == 2.0
    assert nakagami_params(GammaParams(0.5, 3.0)).m == 0.5


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-6, 1e6), st.floats(0, 1e6), st.floats(-1, 1))
def test_gamma_moment_identities(vr, vi, rho):
    c = rho * math.sqrt(vr * vi)
    g = gamma_params(GaussianMoments(vr, vi, c))
    assert g.k * g.theta == pytest.approx(vr + vi, rel=1e-12)
    assert g.k * g.theta**2 == pytest.approx(2 * (vr**2 + vi**2 + 2 * c * c), rel=1e-12)
    n = nakagami_params(g)
    assert n.m == g.k and n.omega == pytest.approx(g.k * g.theta, rel=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-4, 1e4), st.floats(0.0, 5.0))
def test_rayleigh_reduction(s2, t):
    n = nakagami_params(gamma_params(GaussianMoments(s2, s2, 0.0)))
    assert abs(n.m - 1) <= 1e-12
    vb = 1.0
    thr = t * math.sqrt(n.omega)
    assert violation_probability(n, thr, vb) == pytest.approx(math.exp(-thr * thr / n.omega), abs=1e-12)


def test_violation_threshold_zero():
    assert violation_probability(NakagamiParams(0.8, 3.0), 0.0, 2400.0) == 1.0


# -- covariance -------------------------------------------------------------


def test_covariance_structure(odd37):
    g, _, _, sc, cov, _ = odd37
    n = len(g)
    m = cov.matrix
    i3, i5, i2 = g.index("3"), g.index("5"), g.index("2")
    P = lambda p, i: layout_index(n, p, 0, i)
    Q = lambda p, i: layout_index(n, p, 1, i)
    sp, sq = math.sqrt(5e7), math.sqrt(4e7)
    assert m[P(0, i3), P(0, i3)] == pytest.approx(5e7)
    assert m[Q(1, i3), Q(1, i3)] == pytest.approx(4e7)
    assert m[P(0, i3), P(0, i5)] == pytest.approx(0.6 * 5e7)
    assert m[Q(2, i3), Q(2, i5)] == pytest.approx(0.5 * 4e7)
    assert m[P(0, i3), Q(0, i3)] == pytest.approx(-0.2 * sp * sq)
    assert m[P(0, i3), Q(0, i5)] == pytest.approx(-0.2 * sp * sq)
    assert m[P(0, i3), P(1, i3)] == 0 and m[P(0, i3), Q(1, i5)] == 0
    # bus 2 is not an actor
    assert np.all(m[P(0, i2)] == 0) and np.all(m[:, Q(2, i2)] == 0)
    assert np.allclose(m, m.T, rtol=0, atol=0)
    assert np.linalg.eigvalsh(m[np.ix_(cov.support, cov.support)]).min() > 0


def test_covariance_rejects_indefinite(ieee37):
    g = ieee37[0]
    sc = Stochastic(actors=tuple(StochasticActor(str(b)) for b in range(2, 12)), var_p=1e6, var_q=1e6, rho_pp=-0.5)
    with pytest.raises(NotPositiveSemidefinite):
        assemble_covariance(g, sc)


def test_nonactor_variance(ieee37):
    g = ieee37[0]
    sc = Stochastic(actors=(StochasticActor("3"),), var_p=1e6, var_q=1e6, nonactor_var_p=4.0, nonactor_var_q=9.0)
    m = assemble_covariance(g, sc).matrix
    n = len(g)
    i = g.index("4")
    assert m[layout_index(n, 0, 0, i), layout_index(n, 0, 0, i)] == 4.0
    assert m[layout_index(n, 2, 1, i), layout_index(n, 2, 1, i)] == 9.0
    assert m[layout_index(n, 0, 0, i), layout_index(n, 0, 0, g.index("3"))] == 0.0


def test_pack_roundtrip():
    rng = np.random.default_rng(4)
    s = rng.normal(size=(5, 7, 3)) + 1j * rng.normal(size=(5, 7, 3))
    np.testing.assert_array_equal(unpack_injections(pack_injections(s), 7), s)
    x = np.zeros(6 * 7)
    x[layout_index(7, Phase.b, 1, 4)] = 2.0
    assert unpack_injections(x, 7)[4, 1] == 2j


# -- sensitivity vectors ----------------------------------------------------


def test_vectors_trivial_case():
    r = 0.8
    g = FeederGraph({"s": "abc", "x": "abc"}, [LineSegment("s", "x", PhaseImpedanceMatrix(np.eye(3) * r))], "s", 1000.0)
    v = np.array([g.source_voltage.v, [1000.0, 0, 0]])
    v[1, 1:] = g.source_voltage.v[1:]
    cv = build_sensitivity_vectors(g, SolutionState(g, v, 1, 0.0), "x", "a")
    ix = g.index("x")
    assert cv.c_r[layout_index(2, 0, 0, ix)] == pytest.approx(-r / 1000.0)
    assert cv.c_i[layout_index(2, 0, 0, ix)] == pytest.approx(0.0, abs=1e-18)
    # the source shares no path with anything
    assert cv.c_r[layout_index(2, 0, 0, g.index("s"))] == 0.0


def test_vectors_zero_outside_shared_path():
    # two laterals leave the source, so buses on the other lateral share nothing
    buses = {"s": "abc", "l1": "abc", "l2": "abc", "r1": "abc", "r2": "abc"}
    segs = [LineSegment("s", "l1", z_line(0.2, 0.4)), LineSegment("l1", "l2", z_line(0.3, 0.3)),
            LineSegment("s", "r1", z_line(0.5, 0.2)), LineSegment("r1", "r2", z_line(0.1, 0.2))]
    g = FeederGraph(buses, segs, "s", 2400.0)
    base = solve(g, LoadSpec({"l2": (3e4, 2e4, 1e4), "r2": (1e4, 1e4, 1e4)}))
    n = len(g)
    for ph in "abc":
        cv = build_sensitivity_vectors(g, base, "l2", ph)
        for b in g.bus_ids:
            shared = np.any(shared_path_impedance(g, "l2", b).z != 0)
            ks = [layout_index(n, h, t, g.index(b)) for h in range(3) for t in range(2)]
            assert np.any(cv.c_r[ks] != 0) == shared
            assert np.any(cv.c_i[ks] != 0) == shared


def test_linear_map_matches_delta_v_multi(odd37):
    g, _, base, _, _, _ = odd37
    n = len(g)
    rng = np.random.default_rng(9)
    for obs in ("9", "22", "35"):
        for ph in g.phases(obs):
            cv = build_sensitivity_vectors(g, base, obs, ph)
            for _ in range(5):
                s = (rng.normal(0, 2e4, (n, 3)) + 1j * rng.normal(0, 2e4, (n, 3))) * g.phase_mask
                x = pack_injections(s)
                lin = cv.apply(x)
                ref = delta_v_multi(g, base, [ActorPerturbation(b, s[i]) for i, b in enumerate(g.bus_ids)], obs)[ph]
                assert abs(lin - ref) <= 1e-12 * abs(ref)


def test_linear_map_on_ieee123(ieee123):
    # buses with fewer phases than the shared path must not trip the zero-voltage check
    g, _, base = ieee123
    sc = load_scenario("123-pvsa")
    cv = build_sensitivity_vectors(g, base, sc.observation, sc.phase)
    n = len(g)
    rng = np.random.default_rng(12)
    s = (rng.normal(0, 1e4, (n, 3)) + 1j * rng.normal(0, 1e4, (n, 3))) * g.phase_mask
    ref = delta_v_multi(g, base, [ActorPerturbation(b, s[i]) for i, b in enumerate(g.bus_ids)], sc.observation)
    assert abs(cv.apply(pack_injections(s)) - ref[sc.phase]) <= 1e-12 * abs(ref[sc.phase])
    mo = moments(cv, assemble_covariance(g, sc))
    assert mo.var_r > 0 and mo.var_i > 0


# -- moments ----------------------------------------------------------------


def test_moments_trivial(odd37):
    g, _, _, _, _, cv = odd37
    n6 = cv.c_r.size
    zero = moments(cv, np.zeros((n6, n6)))
    assert (zero.var_r, zero.var_i, zero.c) == (0.0, 0.0, 0.0)
    v2 = 3.5e6
    m = moments(cv, np.eye(n6) * v2)
    assert m.var_r == pytest.approx(v2 * cv.c_r @ cv.c_r, rel=1e-13)
    assert m.var_i == pytest.approx(v2 * cv.c_i @ cv.c_i, rel=1e-13)
    assert m.c == pytest.approx(v2 * cv.c_r @ cv.c_i, rel=1e-13)
    with pytest.raises(DimensionMismatch):
        moments(cv, np.eye(6))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_cauchy_schwarz(seed):
    rng = np.random.default_rng(seed)
    k = 12
    a = rng.normal(size=(k, k))
    cov = a @ a.T * rng.uniform(0.1, 1e6)
    cv = SensitivityVectors(rng.normal(size=k), rng.normal(size=k), "x", Phase.a)
    m = moments(cv, cov)
    assert m.var_r >= 0 and m.var_i >= 0
    assert m.c**2 <= m.var_r * m.var_i * (1 + 1e-12)


# -- sampling ---------------------------------------------------------------


def test_sampling_zero_and_diagonal():
    ids = tuple(str(i) for i in range(2))
    zero = PowerChangeCovariance(np.zeros((12, 12)), ids)
    assert np.all(sample_power_changes(zero, 1000, 1) == 0)
    d = np.diag(np.linspace(1.0, 12.0, 12) * 1e6)
    x = sample_power_changes(PowerChangeCovariance(d, ids), 100_000, 2)
    np.testing.assert_allclose(x.var(axis=0), np.diag(d), rtol=0.03)
    assert np.all(np.abs(x.mean(axis=0)) < 4 * np.sqrt(np.diag(d) / 1e5))


def test_sampling_correlations(odd37):
    g, _, _, _, cov, _ = odd37
    x = sample_power_changes(cov, 100_000, 5)
    n = len(g)
    i3, i5 = g.index("3"), g.index("5")
    pairs = {
        (layout_index(n, 0, 0, i3), layout_index(n, 0, 0, i5)): 0.6,
        (layout_index(n, 1, 1, i3), layout_index(n, 1, 1, i5)): 0.5,
        (layout_index(n, 2, 0, i3), layout_index(n, 2, 1, i3)): -0.2,
        (layout_index(n, 2, 0, i3), layout_index(n, 2, 1, i5)): -0.2,
        (layout_index(n, 0, 0, i3), layout_index(n, 1, 0, i3)): 0.0,
    }
    for (i, j), rho in pairs.items():
        assert abs(np.corrcoef(x[:, i], x[:, j])[0, 1] - rho) <= 0.02


def test_sampling_is_seeded(odd37):
    cov = odd37[4]
    a = sample_power_changes(cov, 3000, 77, block=1000)
    b = sample_power_changes(cov, 3000, 77, block=1000)
    c = sample_power_changes(cov, 3000, 78, block=1000)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_rank_deficient_covariance_samples():
    ids = ("0", "1")
    v = np.zeros(12)
    v[[0, 2, 6]] = [1.0, 2.0, -1.0]
    cov = np.outer(v, v) * 1e6  # rank one
    x = sample_power_changes(PowerChangeCovariance(cov, ids), 20_000, 3)
    np.testing.assert_allclose(x[:, 2], 2 * x[:, 0], rtol=1e-9, atol=1e-6)
    np.testing.assert_allclose(np.cov(x.T), cov, atol=0.05 * 4e6)


# -- Monte-Carlo ------------------------------------------------------------


def test_mc_zero_covariance(odd37):
    g, loads, base, _, cov, _ = odd37
    zero = PowerChangeCovariance(np.zeros_like(cov.matrix), cov.bus_ids)
    for mode in ("linear", "oracle"):
        r = mc_distribution(g, loads, zero, "9", "a", 500, 1, mode=mode, base=base, block=200)
        assert r.histogram.counts[0] == 500
        assert r.histogram.counts.sum() == r.histogram.total == 500


def test_mc_moments(odd37, linear_mc):
    g, _, _, _, cov, cv = odd37
    mo = moments(cv, cov)
    dv = linear_mc.dv
    assert np.var(dv.real) == pytest.approx(mo.var_r, rel=0.02)
    assert np.var(dv.imag) == pytest.approx(mo.var_i, rel=0.02)
    gp = gamma_params(mo)
    sq = np.abs(dv) ** 2
    assert sq.mean() == pytest.approx(gp.mean, rel=0.03)
    assert sq.var() == pytest.approx(gp.variance, rel=0.03)
    nk = nakagami_params(gp)
    assert np.abs(dv).mean() == pytest.approx(nk.mean, rel=0.03)


def test_mc_real_part_is_exactly_gaussian(odd37, linear_mc):
    mo = moments(odd37[5], odd37[4])
    x = linear_mc.dv.real
    ks = stats.kstest(x, "norm", args=(0.0, math.sqrt(mo.var_r))).statistic
    assert ks < 1.628 / math.sqrt(x.size)  # 1% critical value


def test_violation_matches_exceedance(odd37, linear_mc):
    g, _, _, _, cov, cv = odd37
    nk = nakagami_params(gamma_params(moments(cv, cov)))
    for t in (0.005, 0.01, 0.05):
        assert abs(violation_probability(nk, t, g.v_base) - np.mean(linear_mc.magnitudes > t)) <= 0.01


def test_mc_job_count_does_not_matter(odd37):
    g, loads, base, _, cov, _ = odd37
    for mode in ("linear", "oracle"):
        a = mc_distribution(g, loads, cov, "9", "a", 2500, 11, mode=mode, base=base, block=500, jobs=1)
        b = mc_distribution(g, loads, cov, "9", "a", 2500, 11, mode=mode, base=base, block=500, jobs=3)
        np.testing.assert_array_equal(a.magnitudes, b.magnitudes)
        np.testing.assert_array_equal(a.histogram.counts, b.histogram.counts)


def test_linear_mode_error_is_first_order(odd37):
    # the linear map ignores how the other constant-power loads react, which
    # is itself a first-order effect: the relative gap to the full solve is
    # small and stays put as the perturbations shrink
    g, loads, base, _, cov, _ = odd37
    errs = []
    for scale in (1.0, 1e-2, 1e-4, 1e-6):
        small = PowerChangeCovariance(cov.matrix * scale, cov.bus_ids)
        lin = mc_distribution(g, loads, small, "9", "a", 400, 3, mode="linear", base=base)
        orc = mc_distribution(g, loads, small, "9", "a", 400, 3, mode="oracle", base=base)
        errs.append(np.linalg.norm(lin.dv - orc.dv) / np.linalg.norm(orc.dv))
    assert max(errs) < 0.05
    assert np.ptp(errs[1:]) < 0.005


# -- histogram and JS distance ----------------------------------------------


def test_histogram_binning():
    h = EmpiricalHistogram.from_samples([0.0, 0.5, 1.0, 1.0], bins=4)
    assert h.edges[-1] == pytest.approx(1.05)
    assert h.counts.sum() == h.total == 4
    assert np.sum(h.density * np.diff(h.edges)) == pytest.approx(1.0)


def test_js_trivial():
    p = np.array([0.2, 0.3, 0.5])
    assert js_distance(p, p) == 0.0
    assert js_distance(np.array([1.0, 0, 0]), np.array([0, 0.5, 0.5])) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(BinningMismatch):
        js_distance(p, np.ones(4))
    with pytest.raises(BinningMismatch):
        js_distance((np.arange(4.0), p), (np.arange(4.0) * 2, p))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 100), min_size=2, max_size=30), st.integers(0, 2**31))
def test_js_against_scipy(ws, seed):
    p = np.array(ws)
    q = np.random.default_rng(seed).uniform(0, 100, p.size)
    if p.sum() == 0:
        p[0] = 1.0
    d = js_distance(p, q)
    assert d == pytest.approx(jensenshannon(p, q, base=2), abs=1e-7)
    assert d == js_distance(q, p) or abs(d - js_distance(q, p)) < 1e-15
    assert 0.0 <= d <= 1.0


def test_bin_probabilities_sum(odd37, linear_mc):
    g, _, _, _, cov, cv = odd37
    nk = nakagami_params(gamma_params(moments(cv, cov)))
    probs = bin_probabilities(nk, linear_mc.histogram.edges, g.v_base)
    assert np.all(probs >= 0) and probs.sum() == pytest.approx(1.0, abs=1e-3)
    assert fitted_js_distance(linear_mc.histogram, nk, g.v_base) < 0.1
