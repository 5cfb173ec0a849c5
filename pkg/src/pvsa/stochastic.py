"""Probabilistic voltage sensitivity: distribution of |dV| under random power changes.

Power changes at every bus are stacked into one real vector of length ``6n``
laid out phase by phase, ``[dP_1..dP_n, dQ_1..dQ_n]`` per phase, so entry
``p*2n + t*n + i`` is bus ``i`` (in ``graph.bus_ids`` order), quantity ``t``
(0 for P, 1 for Q) on phase ``p``. All power changes are *injections* in W/var,
the same convention as :class:`pvsa.vsa.ActorPerturbation`.

For an observation bus and phase the real and imaginary parts of ``dV`` are
linear in that vector, ``dV_r = C_R . dS`` and ``dV_i = C_I . dS``. With
Gaussian ``dS ~ N(0, Sigma)`` the pair is jointly Gaussian, ``|dV|^2`` is fitted
by a Gamma law matching its first two moments and ``|dV|`` is then Nakagami.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import (
    BinningMismatch,
    DegenerateDistribution,
    DimensionMismatch,
    InvalidShape,
    NotPositiveSemidefinite,
    ZeroActorVoltage,
)
from .loadflow import SolutionState, SolveSettings, solve, sweep
from .network import FeederGraph, LoadSpec, Phase, shared_path_impedance

PSD_TOLERANCE = 1e-9
BLOCK_SIZE = 8192
DEFAULT_BINS = 200
BIN_HEADROOM = 1.05


def layout_index(n: int, phase, quantity: int, i: int) -> int:
    """Position of bus ``i``'s P (``quantity=0``) or Q (``1``) on ``phase``."""
    return int(Phase.parse(phase)) * 2 * n + quantity * n + i


def unpack_injections(x: np.ndarray, n: int) -> np.ndarray:
    """``(..., 6n)`` real -> ``(..., n, 3)`` complex per-bus, per-phase injections."""
    x = np.asarray(x, dtype=float)
    blk = x.reshape(x.shape[:-1] + (3, 2, n))
    s = blk[..., 0, :] + 1j * blk[..., 1, :]  # (..., 3, n)
    return np.swapaxes(s, -1, -2)


def pack_injections(s: np.ndarray) -> np.ndarray:
    """Inverse of :func:`unpack_injections`."""
    s = np.swapaxes(np.asarray(s, dtype=complex), -1, -2)  # (..., 3, n)
    blk = np.stack([s.real, s.imag], axis=-2)  # (..., 3, 2, n)
    return blk.reshape(blk.shape[:-3] + (-1,))


# --------------------------------------------------------------------------
# covariance


@dataclass(frozen=True, eq=False)
class PowerChangeCovariance:
    matrix: np.ndarray  # (6n, 6n) VA^2
    bus_ids: tuple

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        n = len(self.bus_ids)
        if m.shape != (6 * n, 6 * n):
            raise DimensionMismatch(f"covariance must be {6 * n}x{6 * n}, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise DimensionMismatch("covariance has non-finite entries")
        scale = max(np.max(np.abs(m)), 1e-300) if m.size else 1.0
        if np.max(np.abs(m - m.T), initial=0.0) > 1e-12 * scale:
            raise NotPositiveSemidefinite("covariance is not symmetric")
        m = 0.5 * (m + m.T)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "bus_ids", tuple(self.bus_ids))

    @property
    def n(self) -> int:
        return len(self.bus_ids)

    @property
    def support(self) -> np.ndarray:
        """Indices with nonzero variance."""
        return np.flatnonzero(np.diag(self.matrix) > 0)

    def factor(self) -> tuple[np.ndarray, np.ndarray]:
        """``(support, L)`` with ``Sigma[support][:, support] == L @ L.T``.

        Uses a symmetric eigendecomposition so rank-deficient matrices work.
        Eigenvalues within tolerance of zero are treated as exact zeros, so
        rank-deficient inputs keep their exact linear relations. More
        negative ones raise.
        """
        sup = self.support
        if sup.size == 0:
            return sup, np.zeros((0, 0))
        sub = self.matrix[np.ix_(sup, sup)]
        w, u = np.linalg.eigh(sub)
        floor = -PSD_TOLERANCE * float(np.trace(self.matrix)) / self.matrix.shape[0]
        if w.min() < floor:
            raise NotPositiveSemidefinite(f"smallest eigenvalue {w.min():.6g} below tolerance {floor:.3g}")
        w = np.where(w > PSD_TOLERANCE * max(w.max(), 0.0), w, 0.0)
        return sup, u * np.sqrt(w)


def assemble_covariance(graph: FeederGraph, scenario) -> PowerChangeCovariance:
    """Covariance of the stacked power-change vector for a stochastic scenario.

    Within a phase, P changes at two different actors have correlation
    ``rho_pp`` and Q changes ``rho_qq``; P and Q have ``rho_pq`` whether they
    belong to the same actor or not. Between different phases, P-P and Q-Q
    pairs (same or different actor) have ``rho_cross`` and P-Q pairs are
    uncorrelated. Buses that are not actors get independent variances
    ``nonactor_var_p``/``nonactor_var_q`` (zero by default) on wired phases.
    """
    ids = graph.bus_ids
    n = len(ids)
    sd = np.zeros((3, 2, n))  # standard deviation per phase, quantity, bus
    is_actor = np.zeros((3, n), dtype=bool)
    for a in scenario.actors:
        i = graph.index(a.bus)
        wired = graph.phases(a.bus)
        phases = wired if a.phases is None else a.phases
        vp = scenario.var_p if a.var_p is None else a.var_p
        vq = scenario.var_q if a.var_q is None else a.var_q
        for p in phases:
            if p not in wired:
                continue
            sd[int(p), 0, i] = math.sqrt(vp)
            sd[int(p), 1, i] = math.sqrt(vq)
            is_actor[int(p), i] = True
    other = graph.phase_mask.T & ~is_actor  # (3, n)
    sd_na = np.zeros_like(sd)
    sd_na[:, 0, :] = np.where(other, math.sqrt(scenario.nonactor_var_p), 0.0)
    sd_na[:, 1, :] = np.where(other, math.sqrt(scenario.nonactor_var_q), 0.0)

    rho = np.zeros((3, 2, 3, 2))  # [p, t, q, u] between *different* actors
    for p in range(3):
        for q in range(3):
            if p == q:
                rho[p, 0, q, 0] = scenario.rho_pp
                rho[p, 1, q, 1] = scenario.rho_qq
                rho[p, 0, q, 1] = rho[p, 1, q, 0] = scenario.rho_pq
            else:
                rho[p, 0, q, 0] = rho[p, 1, q, 1] = scenario.rho_cross
    same = rho.copy()  # same actor: unit variance on the diagonal instead of rho_pp/rho_qq
    for p in range(3):
        same[p, 0, p, 0] = same[p, 1, p, 1] = 1.0

    s = sd.reshape(6, n)
    big = np.einsum("ai,bj,ab->aibj", s, s, rho.reshape(6, 6))
    diag = np.einsum("ai,bi,ab->aib", s, s, same.reshape(6, 6))
    idx = np.arange(n)
    big[:, idx, :, idx] = np.moveaxis(diag, 1, 0)
    cov = big.reshape(6 * n, 6 * n)
    cov[np.diag_indices(6 * n)] += (sd_na.reshape(-1)) ** 2
    out = PowerChangeCovariance(cov, ids)
    out.factor()  # PSD check
    return out


# --------------------------------------------------------------------------
# linear map and moments


@dataclass(frozen=True, eq=False)
class SensitivityVectors:
    c_r: np.ndarray  # (6n,) volts per VA
    c_i: np.ndarray
    observation: str
    phase: Phase
    v_base: float = 1.0

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Complex ``dV`` in volts for power-change vectors ``x`` (``(..., 6n)``)."""
        x = np.asarray(x, dtype=float)
        return x @ self.c_r + 1j * (x @ self.c_i)


def build_sensitivity_vectors(graph: FeederGraph, base_voltages: SolutionState, observation, phase) -> SensitivityVectors:
    obs = graph._check(observation)
    p = int(Phase.parse(phase))
    ids = graph.bus_ids
    n = len(ids)
    z_row = np.zeros((n, 3), dtype=complex)
    for i, b in enumerate(ids):
        z_row[i] = shared_path_impedance(graph, obs, b).z[p]
    v = base_voltages.v  # (n, 3)
    mag = np.abs(v)
    # phases not wired at a bus never carry a power change
    coupled = (z_row != 0) & graph.phase_mask
    if np.any(coupled & (mag == 0)):
        raise ZeroActorVoltage("zero base voltage on a phase coupled to the observation")
    safe = np.where(coupled, mag, 1.0)
    w = np.angle(v)
    r, x = z_row.real, z_row.imag
    cos, sin = np.cos(w), np.sin(w)
    cr_p = np.where(coupled, -(r * cos - x * sin) / safe, 0.0)
    cr_q = np.where(coupled, -(r * sin + x * cos) / safe, 0.0)
    ci_p = np.where(coupled, -(r * sin + x * cos) / safe, 0.0)
    ci_q = np.where(coupled, -(x * sin - r * cos) / safe, 0.0)
    # (n, 3) per quantity -> layout [phase][quantity][bus]
    c_r = np.stack([cr_p.T, cr_q.T], axis=1).reshape(-1)
    c_i = np.stack([ci_p.T, ci_q.T], axis=1).reshape(-1)
    return SensitivityVectors(c_r, c_i, obs, Phase(p), graph.v_base)


@dataclass(frozen=True)
class GaussianMoments:
    var_r: float  # volts^2
    var_i: float
    c: float  # cov(dV_r, dV_i)


def moments(cv: SensitivityVectors, cov: PowerChangeCovariance) -> GaussianMoments:
    m = cov.matrix if isinstance(cov, PowerChangeCovariance) else np.asarray(cov, dtype=float)
    if m.shape != (cv.c_r.size, cv.c_r.size):
        raise DimensionMismatch(f"covariance {m.shape} does not match vectors of length {cv.c_r.size}")
    sr = m @ cv.c_r
    return GaussianMoments(float(cv.c_r @ sr), float(cv.c_i @ (m @ cv.c_i)), float(cv.c_i @ sr))


@dataclass(frozen=True)
class GammaParams:
    k: float
    theta: float  # volts^2

    @property
    def mean(self) -> float:
        return self.k * self.theta

    @property
    def variance(self) -> float:
        return self.k * self.theta**2


def gamma_params(m: GaussianMoments) -> GammaParams:
    """Two-moment Gamma fit to ``|dV|^2 = dV_r^2 + dV_i^2``.

    Mean ``var_r + var_i``; variance ``2 (var_r^2 + var_i^2 + 2 c^2)`` (the
    squared terms of correlated Gaussians have covariance ``2 c^2``).
    """
    total = m.var_r + m.var_i
    if not total > 0:
        raise DegenerateDistribution("voltage change has zero variance at this observation")
    var2 = 2.0 * (m.var_r**2 + m.var_i**2 + 2.0 * m.c**2)
    theta = var2 / total
    return GammaParams(total / theta, theta)


@dataclass(frozen=True)
class NakagamiParams:
    m: float
    omega: float  # E[|dV|^2], volts^2

    @property
    def mean(self) -> float:
        return math.exp(math.lgamma(self.m + 0.5) - math.lgamma(self.m)) * math.sqrt(self.omega / self.m)

    @property
    def mode(self) -> float:
        return math.sqrt(self.omega * max(2 * self.m - 1, 0.0) / (2 * self.m))


def nakagami_params(g: GammaParams) -> NakagamiParams:
    return NakagamiParams(g.k, g.k * g.theta)


def fit_nakagami(cv: SensitivityVectors, cov: PowerChangeCovariance) -> NakagamiParams:
    return nakagami_params(gamma_params(moments(cv, cov)))


# --------------------------------------------------------------------------
# special functions


def _gamma_series(a: float, x: float) -> float:
    ap, term = a, 1.0 / a
    total = term
    for _ in range(100000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * 1e-17:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cont_frac(a: float, x: float) -> float:
    """Upper tail Q(a, x) by modified Lentz."""
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 100000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-17:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def _lower_gamma_scalar(a: float, x: float) -> float:
    if x <= 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return min(1.0, _gamma_series(a, x))
    return max(0.0, 1.0 - _gamma_cont_frac(a, x))


def regularized_lower_incomplete_gamma(a, x):
    """``P(a, x) = gamma(a, x) / Gamma(a)``; scalar or array ``x``."""
    a = float(a)
    if not a > 0:
        raise InvalidShape(f"shape must be positive, got {a}")
    if np.ndim(x) == 0:
        if x < 0:
            raise ValueError("x must be non-negative")
        return _lower_gamma_scalar(a, float(x))
    xs = np.asarray(x, dtype=float)
    if np.any(xs < 0):
        raise ValueError("x must be non-negative")
    return np.array([_lower_gamma_scalar(a, v) for v in xs.ravel()]).reshape(xs.shape)


def nakagami_pdf(p: NakagamiParams, x):
    x = np.asarray(x, dtype=float)
    m, om = p.m, p.omega
    with np.errstate(divide="ignore", invalid="ignore"):
        logc = math.log(2.0) + m * math.log(m) - math.lgamma(m) - m * math.log(om)
        out = np.exp(logc + (2 * m - 1) * np.log(x) - m * x * x / om)
    out = np.where(x > 0, out, 0.0 if m > 0.5 else (np.inf if m < 0.5 else math.exp(logc)))
    return out if out.ndim else float(out)


def nakagami_cdf(p: NakagamiParams, x):
    x = np.clip(np.asarray(x, dtype=float), 0.0, None)
    return regularized_lower_incomplete_gamma(p.m, p.m * x * x / p.omega)


def violation_probability(p: NakagamiParams, threshold: float, v_base: float) -> float:
    """``P(|dV| > threshold)`` for a threshold in pu."""
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    t = threshold * v_base
    return float(min(1.0, max(0.0, 1.0 - nakagami_cdf(p, t))))


# --------------------------------------------------------------------------
# sampling and Monte-Carlo


def _blocks(count: int, block: int):
    starts = list(range(0, count, block))
    return [(s, min(block, count - s)) for s in starts]


def _block_draws(factor, seed_seq, size: int) -> np.ndarray:
    sup, lower = factor
    z = np.random.default_rng(seed_seq).standard_normal((size, sup.size))
    return z @ lower.T


def sample_power_changes(cov: PowerChangeCovariance, count: int, seed, block: int = BLOCK_SIZE) -> np.ndarray:
    """``count x 6n`` zero-mean Gaussian samples with covariance ``cov`` (VA).

    Samples are drawn in fixed-size blocks, each from its own substream of
    ``SeedSequence(seed)``, so any consumer that walks the same blocks sees
    the same numbers regardless of how the blocks are distributed.
    """
    factor = cov.factor()
    out = np.zeros((count, cov.matrix.shape[0]))
    children = np.random.SeedSequence(seed).spawn(len(_blocks(count, block)))
    for ss, (start, size) in zip(children, _blocks(count, block)):
        out[start : start + size, factor[0]] = _block_draws(factor, ss, size)
    return out


@dataclass(frozen=True, eq=False)
class EmpiricalHistogram:
    edges: np.ndarray  # pu
    counts: np.ndarray
    total: int

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        c = np.asarray(self.counts)
        if e.ndim != 1 or c.shape != (e.size - 1,):
            raise BinningMismatch("counts must have one entry per bin")
        if np.any(c < 0):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "counts", c)

    @property
    def probabilities(self) -> np.ndarray:
        return self.counts / self.total if self.total else np.zeros(self.counts.size)

    @property
    def density(self) -> np.ndarray:
        """Probability per pu."""
        return self.probabilities / np.diff(self.edges)

    @classmethod
    def from_samples(cls, magnitudes_pu, bins: int = DEFAULT_BINS, upper: float | None = None):
        x = np.asarray(magnitudes_pu, dtype=float)
        top = upper if upper is not None else BIN_HEADROOM * (x.max() if x.size else 0.0)
        if not top > 0:
            top = 1e-12  # everything sits in the first bin
        edges = np.linspace(0.0, top, bins + 1)
        counts, _ = np.histogram(x, bins=edges)
        return cls(edges, counts, int(x.size))


@dataclass(frozen=True, eq=False)
class MonteCarloResult:
    histogram: EmpiricalHistogram
    magnitudes: np.ndarray  # pu, one per sample
    dv: np.ndarray  # complex volts


def _evaluate_block(graph, base, loads_arr, cv, obs_i, p, mode, settings, factor, ss, size):
    draws = _block_draws(factor, ss, size)
    x = np.zeros((size, 6 * len(graph.bus_ids)))
    x[:, factor[0]] = draws
    if mode == "linear":
        return cv.apply(x)
    inj = unpack_injections(x, len(graph.bus_ids))  # (size, n, 3)
    s = loads_arr[:, :, None] - np.moveaxis(inj, 0, -1)
    v, _, _ = sweep(graph, s, graph.source_voltage.v if base is None else base.v[graph.index(graph.source)], settings)
    return base.v[obs_i, p] - v[obs_i, p, :]


def mc_distribution(
    graph: FeederGraph,
    loads: LoadSpec,
    cov: PowerChangeCovariance,
    observation,
    phase,
    count: int,
    seed,
    mode: str = "linear",
    jobs: int = 1,
    bins: int = DEFAULT_BINS,
    block: int = BLOCK_SIZE,
    settings: SolveSettings | None = None,
    base: SolutionState | None = None,
) -> MonteCarloResult:
    """Monte-Carlo distribution of ``|dV|`` at one observation phase.

    ``mode="linear"`` evaluates each draw through the sensitivity vectors;
    ``mode="oracle"`` solves the perturbed load flow for each draw (batched).
    Output depends only on ``seed``, never on ``jobs``.
    """
    if mode not in ("linear", "oracle"):
        raise ValueError(f"unknown mode {mode!r}")
    settings = settings or SolveSettings()
    base = base or solve(graph, loads, settings=settings)
    obs = graph._check(observation)
    p = int(Phase.parse(phase))
    cv = build_sensitivity_vectors(graph, base, obs, p)
    factor = cov.factor()
    blocks = _blocks(count, block)
    children = np.random.SeedSequence(seed).spawn(len(blocks))
    loads_arr = loads.to_array(graph)
    obs_i = graph.index(obs)

    def run(k):
        ss, (_, size) = children[k], blocks[k]
        return _evaluate_block(graph, base, loads_arr, cv, obs_i, p, mode, settings, factor, ss, size)

    if jobs > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(run, range(len(blocks))))
    else:
        parts = [run(k) for k in range(len(blocks))]
    dv = np.concatenate(parts) if parts else np.zeros(0, dtype=complex)
    mags = np.abs(dv) / graph.v_base
    return MonteCarloResult(EmpiricalHistogram.from_samples(mags, bins), mags, dv)


def bin_probabilities(p: NakagamiParams, edges_pu, v_base: float) -> np.ndarray:
    """Fitted probability mass in each bin (edges in pu)."""
    cdf = nakagami_cdf(p, np.asarray(edges_pu, dtype=float) * v_base)
    return np.diff(cdf)


def bin_densities(p: NakagamiParams, edges_pu, v_base: float) -> np.ndarray:
    """Bin-averaged fitted density, per pu."""
    return bin_probabilities(p, edges_pu, v_base) / np.diff(np.asarray(edges_pu, dtype=float))


def _as_distribution(h):
    if isinstance(h, EmpiricalHistogram):
        return h.edges, h.counts.astype(float)
    if isinstance(h, tuple) and len(h) == 2:
        return np.asarray(h[0], dtype=float), np.asarray(h[1], dtype=float)
    return None, np.asarray(h, dtype=float)


def js_distance(p, q) -> float:
    """Jensen-Shannon distance (base-2) between two distributions on the same bins.

    Each argument is an :class:`EmpiricalHistogram`, an ``(edges, masses)``
    tuple or a bare mass array; masses are normalized to sum to one.
    """
    ep, wp = _as_distribution(p)
    eq, wq = _as_distribution(q)
    if wp.shape != wq.shape:
        raise BinningMismatch(f"bin counts differ: {wp.size} vs {wq.size}")
    if ep is not None and eq is not None and (ep.shape != eq.shape or not np.allclose(ep, eq, rtol=1e-12, atol=0)):
        raise BinningMismatch("bin edges differ")
    if np.any(wp < 0) or np.any(wq < 0) or wp.sum() <= 0 or wq.sum() <= 0:
        raise ValueError("masses must be non-negative with positive total")
    wp = wp / wp.sum()
    wq = wq / wq.sum()
    mid = 0.5 * (wp + wq)

    def kl(a):
        nz = a > 0
        return float(np.sum(a[nz] * np.log2(a[nz] / mid[nz])))

    jsd = 0.5 * kl(wp) + 0.5 * kl(wq)
    return float(math.sqrt(min(1.0, max(0.0, jsd))))


def fitted_js_distance(hist: EmpiricalHistogram, p: NakagamiParams, v_base: float) -> float:
    return js_distance(hist, (hist.edges, bin_probabilities(p, hist.edges, v_base)))
