"""Radial three-phase feeder model.

All per-phase quantities use a fixed ``(a, b, c)`` layout. Phases that are
absent at a bus or on a segment are carried as explicit masks plus zero
rows/columns, so every impedance is a 3x3 matrix and every voltage or power a
length-3 vector regardless of how many phases are wired.
"""
from __future__ import annotations

import enum
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    CycleDetected,
    Disconnected,
    PhaseMismatch,
    UnknownBus,
    ZeroNeutralSelfImpedance,
)

BusId = str

#: Floor on ``|Z_nn|`` (ohm) below which Kron reduction refuses to divide.
NEUTRAL_FLOOR = 1e-12


class Phase(enum.IntEnum):
    a = 0
    b = 1
    c = 2

    @classmethod
    def parse(cls, text) -> "Phase":
        if isinstance(text, Phase):
            return text
        if isinstance(text, (int, np.integer)) and not isinstance(text, bool):
            if 0 <= text <= 2:
                return cls(int(text))
            raise ValueError(f"unknown phase {text!r}")
        try:
            return cls[str(text).strip().lower()]
        except KeyError:
            raise ValueError(f"unknown phase {text!r}") from None

    def __str__(self):
        return self.name


ALL_PHASES = frozenset(Phase)


def parse_phases(text) -> frozenset:
    """``"abc"`` / ``"ac"`` / iterable of phases -> frozenset of :class:`Phase`."""
    if isinstance(text, str):
        items = [ch for ch in text.strip().lower() if ch not in ", "]
    else:
        items = list(text)
    phases = frozenset(Phase.parse(p) for p in items)
    if not phases:
        raise ValueError("empty phase set")
    return phases


def phases_str(phases: Iterable[Phase]) -> str:
    return "".join(p.name for p in sorted(phases))


def mask_of(phases: Iterable[Phase]) -> np.ndarray:
    m = np.zeros(3, dtype=bool)
    for p in phases:
        m[int(p)] = True
    return m


@dataclass(frozen=True, eq=False)
class PhaseImpedanceMatrix:
    """3x3 complex impedance (ohm) with a phase-availability mask.

    Rows and columns of phases outside ``phases`` are forced to zero.
    """

    z: np.ndarray
    phases: frozenset = ALL_PHASES

    def __post_init__(self):
        z = np.array(self.z, dtype=complex)
        if z.shape != (3, 3):
            raise ValueError(f"impedance matrix must be 3x3, got {z.shape}")
        phases = frozenset(Phase.parse(p) for p in self.phases)
        m = mask_of(phases)
        z[~m, :] = 0.0
        z[:, ~m] = 0.0
        z.setflags(write=False)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "phases", phases)

    @classmethod
    def zeros(cls, phases=ALL_PHASES) -> "PhaseImpedanceMatrix":
        return cls(np.zeros((3, 3), dtype=complex), phases)

    @classmethod
    def from_block(cls, block, phases) -> "PhaseImpedanceMatrix":
        """Embed a k x k matrix ordered by the sorted ``phases`` into 3x3."""
        phases = sorted(parse_phases(phases))
        block = np.atleast_2d(np.asarray(block, dtype=complex))
        if block.shape != (len(phases), len(phases)):
            raise ValueError(f"block shape {block.shape} does not match phases {phases}")
        z = np.zeros((3, 3), dtype=complex)
        idx = [int(p) for p in phases]
        z[np.ix_(idx, idx)] = block
        return cls(z, frozenset(phases))

    @property
    def mask(self) -> np.ndarray:
        return mask_of(self.phases)

    def __add__(self, other: "PhaseImpedanceMatrix") -> "PhaseImpedanceMatrix":
        return PhaseImpedanceMatrix(self.z + other.z, self.phases | other.phases)

    def scaled(self, factor: float) -> "PhaseImpedanceMatrix":
        return PhaseImpedanceMatrix(self.z * factor, self.phases)

    def is_symmetric(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.z - self.z.T) <= tol))

    def __repr__(self):
        return f"PhaseImpedanceMatrix(phases={phases_str(self.phases)!r}, z={self.z.tolist()!r})"


def kron_reduce(z4) -> PhaseImpedanceMatrix:
    """Eliminate the neutral (last row/column) of a 4x4 primitive matrix.

    ``Z'_ij = Z_ij - Z_in Z_nj / Z_nn`` for ``i, j`` in ``a, b, c``.
    """
    z4 = np.asarray(z4, dtype=complex)
    if z4.shape != (4, 4):
        raise ValueError(f"kron_reduce expects a 4x4 matrix, got {z4.shape}")
    return PhaseImpedanceMatrix(eliminate_last_conductor(z4))


def eliminate_last_conductor(z) -> np.ndarray:
    """Kron-eliminate the last conductor of a k x k matrix, returning (k-1) x (k-1)."""
    z = np.asarray(z, dtype=complex)
    znn = z[-1, -1]
    if abs(znn) < NEUTRAL_FLOOR:
        raise ZeroNeutralSelfImpedance(f"neutral self-impedance {znn} below {NEUTRAL_FLOOR} ohm")
    return z[:-1, :-1] - np.outer(z[:-1, -1], z[-1, :-1]) / znn


@dataclass(frozen=True, eq=False)
class LineSegment:
    from_bus: BusId
    to_bus: BusId
    impedance: PhaseImpedanceMatrix

    @property
    def phases(self) -> frozenset:
        return self.impedance.phases

    def reversed(self) -> "LineSegment":
        return LineSegment(self.to_bus, self.from_bus, self.impedance)


@dataclass(frozen=True, eq=False)
class NodeVoltage:
    """Per-phase complex voltage (V). Absent phases hold 0 and report NaN magnitude."""

    v: np.ndarray
    phases: frozenset = ALL_PHASES

    def __post_init__(self):
        v = np.array(self.v, dtype=complex).reshape(3)
        phases = frozenset(Phase.parse(p) for p in self.phases)
        v[~mask_of(phases)] = 0.0
        v.setflags(write=False)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "phases", phases)

    @classmethod
    def balanced(cls, magnitude: float, phases=ALL_PHASES) -> "NodeVoltage":
        angles = np.deg2rad([0.0, -120.0, 120.0])
        return cls(magnitude * np.exp(1j * angles), phases)

    @property
    def magnitude(self) -> np.ndarray:
        return np.where(mask_of(self.phases), np.abs(self.v), np.nan)

    @property
    def angle(self) -> np.ndarray:
        return np.where(mask_of(self.phases), np.angle(self.v), np.nan)

    def __getitem__(self, phase) -> complex:
        return complex(self.v[int(Phase.parse(phase))])


@dataclass(frozen=True)
class LoadSpec:
    """Constant-power wye loads: bus -> (S_a, S_b, S_c) in VA drawn from the network."""

    power: Mapping[BusId, tuple] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for bus, s in self.power.items():
            arr = tuple(complex(x) for x in s)
            if len(arr) != 3:
                raise ValueError(f"load at bus {bus} must have three phase entries")
            clean[str(bus)] = arr
        object.__setattr__(self, "power", clean)

    def to_array(self, graph: "FeederGraph") -> np.ndarray:
        out = np.zeros((len(graph.bus_ids), 3), dtype=complex)
        for bus, s in self.power.items():
            out[graph.index(bus)] = s
        return out

    @classmethod
    def from_array(cls, graph: "FeederGraph", arr) -> "LoadSpec":
        arr = np.asarray(arr, dtype=complex)
        return cls({b: tuple(arr[i]) for i, b in enumerate(graph.bus_ids) if np.any(arr[i] != 0)})

    def perturbed(self, changes: Mapping) -> "LoadSpec":
        """Add ``{(bus, phase): delta_S}`` load changes (VA, drawn)."""
        power = {b: list(s) for b, s in self.power.items()}
        for (bus, phase), ds in changes.items():
            row = power.setdefault(str(bus), [0j, 0j, 0j])
            row[int(Phase.parse(phase))] += complex(ds)
        return LoadSpec({b: tuple(s) for b, s in power.items()})

    def total(self) -> np.ndarray:
        if not self.power:
            return np.zeros(3, dtype=complex)
        return np.sum(np.array(list(self.power.values())), axis=0)


class FeederGraph:
    """Immutable, validated radial feeder.

    Segments may be supplied in either direction; they are re-oriented away
    from the source during validation. ``v_base`` is the line-to-neutral
    nominal voltage in volts.
    """

    def __init__(
        self,
        buses: Mapping[BusId, Iterable],
        segments: Sequence[LineSegment],
        source: BusId,
        v_base: float,
        name: str = "",
        source_voltage: NodeVoltage | None = None,
    ):
        self.name = name
        self.v_base = float(v_base)
        if not self.v_base > 0:
            raise ValueError("v_base must be positive")
        self.source = str(source)
        self._bus_ids = tuple(str(b) for b in buses)
        self._phases = {str(b): parse_phases(p) for b, p in buses.items()}
        if len(self._phases) != len(self._bus_ids):
            raise ValueError("duplicate bus ids")
        self._index = {b: i for i, b in enumerate(self._bus_ids)}
        self._build_topology(list(segments))
        if source_voltage is None:
            source_voltage = NodeVoltage.balanced(self.v_base)
        self.source_voltage = source_voltage
        self._cache: dict = {}
        self._lock = threading.Lock()

    # -- construction -----------------------------------------------------
    def _build_topology(self, segments):
        if self.source not in self._index:
            raise UnknownBus(f"source bus {self.source!r} is not in the bus table")
        if self._phases[self.source] != ALL_PHASES:
            raise PhaseMismatch(f"source bus {self.source} must carry phases abc")
        adj: dict[str, list] = {b: [] for b in self._bus_ids}
        for k, seg in enumerate(segments):
            for b in (seg.from_bus, seg.to_bus):
                if b not in self._index:
                    raise UnknownBus(f"segment {seg.from_bus}-{seg.to_bus} references unknown bus {b!r}")
            if seg.from_bus == seg.to_bus:
                raise CycleDetected(f"self-loop at bus {seg.from_bus}")
            adj[seg.from_bus].append((seg.to_bus, k))
            adj[seg.to_bus].append((seg.from_bus, k))
        n = len(self._bus_ids)
        if len(segments) > n - 1:
            raise CycleDetected(f"{len(segments)} segments for {n} buses; a radial feeder has {n - 1}")

        parent: dict[str, str | None] = {self.source: None}
        into: dict[str, LineSegment] = {}
        into_k: dict[str, int] = {}
        order = [self.source]
        queue = deque([self.source])
        while queue:
            b = queue.popleft()
            for nb, k in adj[b]:
                seg = segments[k]
                if into_k.get(b) == k:
                    continue
                if nb in parent:
                    raise CycleDetected(f"bus {nb} reachable by more than one path")
                parent[nb] = b
                into[nb] = seg if seg.from_bus == b else seg.reversed()
                into_k[nb] = k
                order.append(nb)
                queue.append(nb)
        if len(order) != n:
            missing = sorted(set(self._bus_ids) - set(order))
            raise Disconnected(f"buses not reachable from source: {missing[:10]}")

        for b, seg in into.items():
            up = self._phases[parent[b]]
            if not seg.phases <= up:
                raise PhaseMismatch(
                    f"segment {seg.from_bus}-{seg.to_bus} carries {phases_str(seg.phases)} "
                    f"but bus {seg.from_bus} has {phases_str(up)}"
                )
            if self._phases[b] != seg.phases:
                raise PhaseMismatch(
                    f"bus {b} declares {phases_str(self._phases[b])} but its feeding segment "
                    f"carries {phases_str(seg.phases)}"
                )
            zr = seg.impedance.z
            if np.any(np.diag(zr).real < 0):
                raise PhaseMismatch(f"segment {seg.from_bus}-{seg.to_bus} has negative resistance")

        self._parent = parent
        self._into = into
        self._order = tuple(order)
        self._segments = tuple(into[b] for b in order[1:])
        children: dict[str, list] = {b: [] for b in self._bus_ids}
        for b in order[1:]:
            children[parent[b]].append(b)
        self._children = {b: tuple(c) for b, c in children.items()}
        depth = {self.source: 0}
        for b in order[1:]:
            depth[b] = depth[parent[b]] + 1
        self._depth = depth

        # dense views used by the solvers
        self.phase_mask = np.array([mask_of(self._phases[b]) for b in self._bus_ids])
        self.z_in = np.zeros((n, 3, 3), dtype=complex)
        self.parent_index = np.full(n, -1, dtype=int)
        for b, seg in into.items():
            i = self._index[b]
            self.z_in[i] = seg.impedance.z
            self.parent_index[i] = self._index[parent[b]]
        self.z_in.setflags(write=False)
        self.phase_mask.setflags(write=False)
        self.parent_index.setflags(write=False)
        max_depth = max(depth.values())
        self.levels = tuple(
            np.array([self._index[b] for b in order if depth[b] == d], dtype=int) for d in range(max_depth + 1)
        )

    # -- accessors ---------------------------------------------------------
    @property
    def bus_ids(self) -> tuple:
        return self._bus_ids

    @property
    def segments(self) -> tuple:
        """Segments oriented away from the source, in breadth-first order."""
        return self._segments

    @property
    def order(self) -> tuple:
        """Buses in breadth-first order from the source."""
        return self._order

    def __len__(self):
        return len(self._bus_ids)

    def __contains__(self, bus) -> bool:
        return str(bus) in self._index

    def _check(self, bus) -> str:
        bus = str(bus)
        if bus not in self._index:
            raise UnknownBus(f"unknown bus {bus!r}")
        return bus

    def index(self, bus) -> int:
        return self._index[self._check(bus)]

    def phases(self, bus) -> frozenset:
        return self._phases[self._check(bus)]

    def parent(self, bus) -> BusId | None:
        return self._parent[self._check(bus)]

    def children(self, bus) -> tuple:
        return self._children[self._check(bus)]

    def depth(self, bus) -> int:
        return self._depth[self._check(bus)]

    def segment_into(self, bus) -> LineSegment | None:
        return self._into.get(self._check(bus))

    def __repr__(self):
        return f"FeederGraph(name={self.name!r}, buses={len(self)}, source={self.source!r})"

    # -- paths ---------------------------------------------------------------
    def path_edges(self, bus) -> list:
        return path_edges(self, bus)

    def shared_path_impedance(self, observation, actor) -> PhaseImpedanceMatrix:
        return shared_path_impedance(self, observation, actor)


def path_edges(graph: FeederGraph, bus) -> list:
    """Source-to-bus segments in order; empty for the source."""
    bus = graph._check(bus)
    out = []
    while bus != graph.source:
        seg = graph._into[bus]
        out.append(seg)
        bus = seg.from_bus
    out.reverse()
    return out


def shared_path_impedance(graph: FeederGraph, observation, actor) -> PhaseImpedanceMatrix:
    """Sum of segment impedances common to the source->observation and source->actor paths.

    Results are memoised per unordered bus pair; the computation is pure so
    concurrent fills are harmless.
    """
    o = graph._check(observation)
    a = graph._check(actor)
    key = (o, a) if o <= a else (a, o)
    hit = graph._cache.get(key)
    if hit is not None:
        return hit
    shared = {id(s) for s in path_edges(graph, a)}
    total = PhaseImpedanceMatrix.zeros()
    common = [s for s in path_edges(graph, o) if id(s) in shared]
    if common:
        z = np.zeros((3, 3), dtype=complex)
        for seg in common:
            z = z + seg.impedance.z
        total = PhaseImpedanceMatrix(z, common[-1].phases)
    with graph._lock:
        graph._cache.setdefault(key, total)
    return total


def validate(graph: FeederGraph, loads: LoadSpec | None = None) -> bool:
    """Re-check the feeder invariants and, optionally, that loads sit on wired phases.

    Topology checks already run when a :class:`FeederGraph` is built, so for a
    graph obtained through the constructor only the load check can fail.
    """
    FeederGraph(
        {b: graph.phases(b) for b in graph.bus_ids},
        graph.segments,
        graph.source,
        graph.v_base,
    )
    for seg in graph.segments:
        if not seg.impedance.is_symmetric(tol=1e-9 * max(1.0, float(np.abs(seg.impedance.z).max()))):
            raise PhaseMismatch(f"segment {seg.from_bus}-{seg.to_bus} impedance is not symmetric")
    if loads is not None:
        for bus, s in loads.power.items():
            if bus not in graph:
                raise UnknownBus(f"load references unknown bus {bus!r}")
            present = graph.phases(bus)
            for p in Phase:
                if s[int(p)] != 0 and p not in present:
                    raise PhaseMismatch(f"load on phase {p} of bus {bus}, which carries {phases_str(present)}")
    return True
