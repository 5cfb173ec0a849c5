"""Closed-form voltage change for power changes at actor buses, and its error bound.

Sign conventions
----------------
``ActorPerturbation.ds`` is the change in complex power *injected* at the
actor (a PV output increase is positive, extra load is negative).
``VoltageChange.dv`` is ``V_before - V_after`` at the observation bus. With
these two conventions a single actor gives

    dV^p = -sum_h conj(dS^h) Z_OA^{ph} / conj(V_A^h)

and a load increase (negative injection) produces a positive drop, the same
quantity :func:`pvsa.loadflow.delta_v_oracle` returns.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .errors import ZeroActorVoltage
from .loadflow import SolutionState
from .network import FeederGraph, NodeVoltage, Phase, PhaseImpedanceMatrix, mask_of, shared_path_impedance


@dataclass(frozen=True, eq=False)
class ActorPerturbation:
    bus: str
    ds: np.ndarray  # (3,) complex VA injected

    def __post_init__(self):
        ds = np.array(self.ds, dtype=complex).reshape(3)
        ds.setflags(write=False)
        object.__setattr__(self, "ds", ds)
        object.__setattr__(self, "bus", str(self.bus))

    @classmethod
    def from_load_change(cls, bus, drawn) -> "ActorPerturbation":
        """Build from a change in *drawn* power (the scenario convention)."""
        return cls(bus, -np.asarray(drawn, dtype=complex))


def perturbations_from_scenario(scenario) -> list:
    """Group a deterministic scenario's load changes into per-bus injections."""
    changes = scenario.load_changes() if hasattr(scenario, "load_changes") else dict(scenario)
    per_bus: dict = {}
    for (bus, phase), ds in changes.items():
        row = per_bus.setdefault(str(bus), np.zeros(3, dtype=complex))
        row[int(Phase.parse(phase))] += complex(ds)
    return [ActorPerturbation.from_load_change(b, s) for b, s in per_bus.items()]


@dataclass(frozen=True, eq=False)
class VoltageChange:
    dv: np.ndarray  # (3,) complex volts, V_before - V_after
    v_base: float
    phases: frozenset = frozenset(Phase)

    def __post_init__(self):
        dv = np.array(self.dv, dtype=complex).reshape(3)
        dv[~mask_of(self.phases)] = 0.0
        object.__setattr__(self, "dv", dv)

    @property
    def magnitude_pu(self) -> np.ndarray:
        return np.abs(self.dv) / self.v_base

    def __getitem__(self, phase) -> complex:
        return complex(self.dv[int(Phase.parse(phase))])

    def __add__(self, other: "VoltageChange") -> "VoltageChange":
        return VoltageChange(self.dv + other.dv, self.v_base, self.phases | other.phases)


def _coupled(z: np.ndarray, ds: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Phases h that contribute (nonzero dS^h and a nonzero column of Z); checks V^h."""
    active = (ds != 0) & np.any(z != 0, axis=0)
    if np.any(np.abs(v[active]) == 0):
        bad = [Phase(h).name for h in np.flatnonzero(active & (np.abs(v) == 0))]
        raise ZeroActorVoltage(f"actor voltage is zero on coupled phase(s) {''.join(bad)}")
    return active


def delta_v_single(z_oa: PhaseImpedanceMatrix, ds, v_actor: NodeVoltage, v_base: float = 1.0) -> VoltageChange:
    """Voltage change at the observation bus caused by one actor."""
    z = z_oa.z if isinstance(z_oa, PhaseImpedanceMatrix) else np.asarray(z_oa, dtype=complex)
    ds = ds.ds if isinstance(ds, ActorPerturbation) else np.asarray(ds, dtype=complex).reshape(3)
    v = v_actor.v if isinstance(v_actor, NodeVoltage) else np.asarray(v_actor, dtype=complex).reshape(3)
    active = _coupled(z, ds, v)
    term = np.zeros(3, dtype=complex)
    term[active] = np.conj(ds[active]) / np.conj(v[active])
    return VoltageChange(-(z @ term), v_base)


def delta_v_multi(
    graph: FeederGraph,
    base_voltages: SolutionState,
    scenario,
    observation,
) -> VoltageChange:
    """Superposition of single-actor changes at ``observation``.

    ``scenario`` may be a deterministic scenario (drawn-power changes) or an
    iterable of :class:`ActorPerturbation`.
    """
    actors = _as_perturbations(scenario)
    obs = str(observation)
    total = np.zeros(3, dtype=complex)
    v_all = base_voltages.v
    for a in actors:
        z = shared_path_impedance(graph, obs, a.bus).z
        v = v_all[graph.index(a.bus)]
        active = _coupled(z, a.ds, v)
        if active.all():
            total -= z @ (np.conj(a.ds) / np.conj(v))
        else:
            term = np.zeros(3, dtype=complex)
            term[active] = np.conj(a.ds[active]) / np.conj(v[active])
            total -= z @ term
    return VoltageChange(total, graph.v_base, graph.phases(obs))


def _as_perturbations(scenario) -> list:
    if hasattr(scenario, "load_changes") or isinstance(scenario, Mapping):
        return perturbations_from_scenario(scenario)
    return list(scenario)


@dataclass(frozen=True, eq=False)
class ErrorBoundTerms:
    """Per phase pair ``[p, h]`` (observation phase p, actor phase h) constants and bounds.

    ``k1 = dP R + dQ X`` and ``k2 = dP X - dQ R`` for the entry ``Z^{ph} = R + jX``
    and the actor's phase-h power change; ``c1 = (V_i / V_r)^2`` and
    ``c2 = 1 / c1`` of the actor's phase-h voltage. Bounds are in volts.
    """

    k1: np.ndarray
    k2: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    bound_real: np.ndarray  # (3,) per observation phase
    bound_imag: np.ndarray
    v_base: float = 1.0

    @property
    def bound_mag(self) -> np.ndarray:
        return np.hypot(self.bound_real, self.bound_imag)

    @property
    def bound_mag_pu(self) -> np.ndarray:
        return self.bound_mag / self.v_base

    def __add__(self, other: "ErrorBoundTerms") -> "ErrorBoundTerms":
        # per-actor constants do not aggregate; keep the bounds only
        nan = np.full((3, 3), np.nan)
        return ErrorBoundTerms(
            nan, nan, nan, nan, self.bound_real + other.bound_real, self.bound_imag + other.bound_imag, self.v_base
        )


def error_bound(z_oa: PhaseImpedanceMatrix, ds, v_actor: NodeVoltage, v_base: float = 1.0) -> ErrorBoundTerms:
    """Upper bound on the approximation error of :func:`delta_v_single`.

    Each phase pair contributes ``(|k1| |V_r| + |k2| |V_i|) / |V|^2`` to the
    real-part bound and ``(|k2| |V_r| + |k1| |V_i|) / |V|^2`` to the
    imaginary-part bound; these equal ``k / (1 + c) / V`` with ``c1``/``c2``
    but stay finite when a voltage component is zero.
    """
    z = z_oa.z if isinstance(z_oa, PhaseImpedanceMatrix) else np.asarray(z_oa, dtype=complex)
    ds = ds.ds if isinstance(ds, ActorPerturbation) else np.asarray(ds, dtype=complex).reshape(3)
    v = v_actor.v if isinstance(v_actor, NodeVoltage) else np.asarray(v_actor, dtype=complex).reshape(3)
    active = _coupled(z, ds, v)
    r, x = z.real, z.imag
    dp, dq = ds.real[None, :], ds.imag[None, :]
    k1 = dp * r + dq * x
    k2 = dp * x - dq * r
    vr, vi = v.real, v.imag
    with np.errstate(divide="ignore", invalid="ignore"):
        c1 = np.broadcast_to((vi / vr) ** 2, (3, 3)).copy()
        c2 = np.broadcast_to((vr / vi) ** 2, (3, 3)).copy()
        v2 = np.where(active, np.abs(v) ** 2, 1.0)
    ar, ai = np.abs(vr) / v2, np.abs(vi) / v2
    w = active[None, :]
    br = np.where(w, np.abs(k1) * ar + np.abs(k2) * ai, 0.0).sum(axis=1)
    bi = np.where(w, np.abs(k2) * ar + np.abs(k1) * ai, 0.0).sum(axis=1)
    return ErrorBoundTerms(k1, k2, c1, c2, br, bi, v_base)


def error_bound_multi(graph: FeederGraph, base_voltages: SolutionState, scenario, observation) -> ErrorBoundTerms:
    """Sum of single-actor bounds (valid by the triangle inequality)."""
    obs = str(observation)
    total = None
    for a in _as_perturbations(scenario):
        z = shared_path_impedance(graph, obs, a.bus)
        eb = error_bound(z, a, base_voltages.node(a.bus), graph.v_base)
        total = eb if total is None else total + eb
    if total is None:
        zero = np.zeros(3)
        nan = np.full((3, 3), np.nan)
        total = ErrorBoundTerms(nan, nan, nan, nan, zero, zero.copy(), graph.v_base)
    return total


def delta_v_all(graph: FeederGraph, base_voltages: SolutionState, scenario) -> dict:
    """``{(bus, phase): dV}`` over every wired phase of every bus."""
    actors = _as_perturbations(scenario)
    out = {}
    for b in graph.bus_ids:
        dv = delta_v_multi(graph, base_voltages, actors, b)
        for p in sorted(graph.phases(b)):
            out[(b, p)] = dv[p]
    return out


def iter_phases(graph: FeederGraph) -> Iterable:
    for b in graph.bus_ids:
        for p in sorted(graph.phases(b)):
            yield b, p
