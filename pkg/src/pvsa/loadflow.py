"""Backward/forward sweep load flow for radial feeders with constant-power wye loads.

The solver is the ground truth the analytic approximations are checked
against. It iterates

* backward: ``I_n = conj(S_n) / conj(V_n)`` at every bus, accumulated up the
  tree into branch currents, then
* forward: ``V_child = V_parent - Z_e I_e`` from the source outwards,

until successive voltage iterates differ by less than ``tolerance * v_base``.
Buses are processed one depth level at a time, and an optional trailing batch
axis lets many load cases be solved in lockstep (Monte-Carlo fan-out).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonConvergence, VoltageCollapse
from .network import FeederGraph, LoadSpec, NodeVoltage, Phase


@dataclass(frozen=True)
class SolveSettings:
    tolerance: float = 1e-9  # pu
    max_iterations: int = 100
    v_floor: float = 0.3  # pu

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass(frozen=True, eq=False)
class SolutionState:
    graph: FeederGraph
    v: np.ndarray  # (n, 3) complex volts, zero on absent phases
    iterations: int
    mismatch: float  # pu

    @property
    def voltages(self) -> dict:
        return {b: self.node(b) for b in self.graph.bus_ids}

    def node(self, bus) -> NodeVoltage:
        return NodeVoltage(self.v[self.graph.index(bus)], self.graph.phases(bus))

    def __getitem__(self, bus) -> NodeVoltage:
        return self.node(bus)

    @property
    def v_pu(self) -> np.ndarray:
        """Per-unit magnitudes, NaN on absent phases."""
        return np.where(self.graph.phase_mask, np.abs(self.v), np.nan) / self.graph.v_base


def sweep(graph: FeederGraph, s: np.ndarray, v_source: np.ndarray, settings: SolveSettings):
    """Solve for loads ``s`` of shape ``(n, 3)`` or ``(n, 3, batch)`` (VA drawn).

    Returns ``(v, iterations, mismatch_pu)``; ``v`` has the shape of ``s``.
    Convergence is judged on the worst case across the batch.
    """
    s = np.asarray(s, dtype=complex)
    batched = s.ndim == 3
    if not batched:
        s = s[:, :, None]
    n = len(graph.bus_ids)
    if s.shape[:2] != (n, 3):
        raise ValueError(f"load array must be ({n}, 3[, batch]), got {s.shape}")
    mask = graph.phase_mask[:, :, None]
    s = np.where(mask, s, 0.0)
    v_src = np.asarray(v_source, dtype=complex).reshape(3)
    v = np.broadcast_to(v_src[None, :, None], s.shape) * mask
    v = np.array(v, dtype=complex)
    parent = graph.parent_index
    z = graph.z_in
    levels = graph.levels
    src = graph.index(graph.source)
    tol = settings.tolerance * graph.v_base
    floor = settings.v_floor * graph.v_base
    safe = np.where(mask, 1.0, 0.0)

    mismatch = np.inf
    for it in range(1, settings.max_iterations + 1):
        with np.errstate(divide="ignore", invalid="ignore"):
            i_bus = np.where(mask, np.conj(s) / np.conj(np.where(mask, v, 1.0)), 0.0)
        i_branch = i_bus.copy()
        for lev in reversed(levels[1:]):
            np.add.at(i_branch, parent[lev], i_branch[lev])
        v_new = np.empty_like(v)
        v_new[src] = v_src[:, None]
        for lev in levels[1:]:
            drop = np.einsum("kij,kjb->kib", z[lev], i_branch[lev])
            v_new[lev] = (v_new[parent[lev]] - drop) * safe[lev]
        mismatch = float(np.max(np.abs(v_new - v))) if v.size else 0.0
        v = v_new
        low = np.abs(v)[np.broadcast_to(mask, v.shape)]
        if low.size and (not np.all(np.isfinite(low)) or low.min() < floor):
            raise VoltageCollapse(
                f"voltage fell below {settings.v_floor} pu at iteration {it} (min {np.nanmin(low) / graph.v_base:.3f} pu)"
            )
        if mismatch < tol:
            break
    else:
        raise NonConvergence(
            f"no convergence in {settings.max_iterations} iterations (mismatch {mismatch / graph.v_base:.3e} pu)"
        )
    if not batched:
        v = v[:, :, 0]
    return v, it, mismatch / graph.v_base


def solve(
    graph: FeederGraph,
    loads: LoadSpec,
    source_voltage: NodeVoltage | None = None,
    settings: SolveSettings | None = None,
) -> SolutionState:
    settings = settings or SolveSettings()
    src = (source_voltage or graph.source_voltage).v
    v, it, mismatch = sweep(graph, loads.to_array(graph), src, settings)
    return SolutionState(graph, v, it, mismatch)


def solve_batch(
    graph: FeederGraph,
    s: np.ndarray,
    source_voltage: NodeVoltage | None = None,
    settings: SolveSettings | None = None,
) -> np.ndarray:
    """Voltages ``(n, 3, batch)`` for a stack of load cases ``(n, 3, batch)``."""
    settings = settings or SolveSettings()
    src = (source_voltage or graph.source_voltage).v
    v, _, _ = sweep(graph, s, src, settings)
    return v


def delta_v_oracle(graph, loads, scenario, settings=None, source_voltage=None, base=None) -> dict:
    """``{(bus, phase): V_base - V_perturbed}`` for every wired phase.

    ``scenario`` is a :class:`~pvsa.feeder_io.Deterministic` scenario or a
    ``{(bus, phase): delta_S}`` mapping of changes in drawn power (VA).
    """
    changes = scenario.load_changes() if hasattr(scenario, "load_changes") else dict(scenario)
    if base is None:
        base = solve(graph, loads, source_voltage, settings)
    pert = solve(graph, loads.perturbed(changes), source_voltage, settings)
    dv = base.v - pert.v
    out = {}
    for b in graph.bus_ids:
        i = graph.index(b)
        for p in sorted(graph.phases(b)):
            out[(b, p)] = complex(dv[i, int(p)])
    return out


def phase_key(bus, phase) -> tuple:
    return (str(bus), Phase.parse(phase))
