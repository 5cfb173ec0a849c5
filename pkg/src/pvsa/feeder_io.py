"""Feeder and scenario documents, bundled datasets and CSV result tables.

Feeder documents are line oriented. Blank lines and ``#`` comments are
ignored; the first statement names the schema version::

    pvsa-feeder 1
    name   demo
    vbase_ll 4160            # or: vbase_ln 2401.77  (volts)
    source 1
    source_pu 1.0 0 1.0 -120 1.0 120    # optional |V| pu and angle (deg) per phase

    config 601 phases=abc per=mile      # k rows of k complex entries, ohm/unit
      0.3465+1.0179j 0.1560+0.5017j 0.1580+0.4236j
      0.1560+0.5017j 0.3375+1.0478j 0.1535+0.3849j
      0.1580+0.4236j 0.1535+0.3849j 0.3414+1.0348j
    end
    config ug phases=abc per=km neutral # 4x4 primitive, Kron-reduced at ingest
      ...
    end
    config xf phases=abc per=total      # total ohms, used without a length

    bus 1 abc label=650
    bus 2 abc
    line 1 2 2000ft 601                 # lengths take ft, mi, m or km
    switch 2 3 abc                      # zero-impedance connection
    load 2 a 170kW 125kvar              # W/kW/MW and var/kvar/Mvar

Scenario documents use the same lexical rules::

    pvsa-scenario 1
    kind deterministic
    observation 9 a
    threshold 0.05                      # pu
    actor 22 c 21kW 0kvar               # change in power drawn by the load

    pvsa-scenario 1
    kind stochastic
    observation 9 a
    var_p 50kW2                         # squared units are mandatory
    var_q 40kvar2
    rho_pp 0.6                          # same phase, between actors
    rho_qq 0.5
    rho_pq -0.2                         # same phase, P with Q
    rho_cross 0                         # between phases, P with P and Q with Q
    actor 3                             # every phase wired at bus 3
    actor 5 ab var_p=20kW2              # per-actor override
"""
from __future__ import annotations

import csv
import io
import math
import os
import re
import tempfile
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidCorrelation, NegativeVariance, SchemaError, UnknownBusReference
from .network import (
    FeederGraph,
    LineSegment,
    LoadSpec,
    NodeVoltage,
    Phase,
    PhaseImpedanceMatrix,
    eliminate_last_conductor,
    parse_phases,
    phases_str,
    validate,
)

FEEDER_MAGIC = "pvsa-feeder"
SCENARIO_MAGIC = "pvsa-scenario"
SCHEMA_VERSION = 1

_LENGTH_TO_MILE = {"mi": 1.0, "mile": 1.0, "ft": 1.0 / 5280.0, "m": 1.0 / 1609.344, "km": 1.0 / 1.609344}
_POWER = {"W": 1.0, "kW": 1e3, "MW": 1e6, "var": 1.0, "kvar": 1e3, "Mvar": 1e6, "VA": 1.0, "kVA": 1e3}
_REAL_UNITS = {"W", "kW", "MW"}
_REACTIVE_UNITS = {"var", "kvar", "Mvar"}
_QUANTITY = re.compile(r"^([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)([A-Za-z]+2?)$")


# ---------------------------------------------------------------------------
# feeder documents

@dataclass(frozen=True)
class ConfigRow:
    id: str
    phases: str
    per: str
    matrix: tuple  # tuple of row tuples of complex
    neutral: bool = False


@dataclass(frozen=True)
class BusRow:
    id: str
    phases: str
    label: str = ""


@dataclass(frozen=True)
class SegmentRow:
    from_bus: str
    to_bus: str
    kind: str  # "line" or "switch"
    config: str = ""
    length: float = 0.0
    unit: str = ""
    phases: str = ""


@dataclass(frozen=True)
class LoadRow:
    bus: str
    phase: str
    p: float  # W
    q: float  # var


@dataclass
class FeederDocument:
    name: str = ""
    v_base: float = 0.0  # line-to-neutral volts
    source: str = ""
    source_pu: tuple | None = None  # (mag_a, deg_a, mag_b, deg_b, mag_c, deg_c)
    configs: dict = field(default_factory=dict)
    buses: list = field(default_factory=list)
    segments: list = field(default_factory=list)
    loads: list = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION


def _statements(text: str):
    """Yield (line number, tokens) for non-empty, comment-stripped lines."""
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


def _fail(lineno, msg):
    raise SchemaError(f"line {lineno}: {msg}")


def _float(tok, lineno, what):
    try:
        x = float(tok)
    except ValueError:
        _fail(lineno, f"bad {what} {tok!r}")
    if not math.isfinite(x):
        _fail(lineno, f"non-finite {what} {tok!r}")
    return x


def _quantity(tok, lineno, allowed):
    m = _QUANTITY.match(tok)
    if not m or m.group(2) not in allowed:
        _fail(lineno, f"expected a number with unit in {sorted(allowed)}, got {tok!r}")
    return float(m.group(1)), m.group(2)


def _power(tok, lineno, units):
    value, unit = _quantity(tok, lineno, units)
    return value * _POWER[unit]


def _squared_power(tok, lineno, units):
    value, unit = _quantity(tok, lineno, {u + "2" for u in units})
    return value * _POWER[unit[:-1]] ** 2


def _options(tokens, lineno, allowed):
    opts, flags = {}, set()
    for tok in tokens:
        if "=" in tok:
            k, v = tok.split("=", 1)
            if k not in allowed:
                _fail(lineno, f"unknown option {k!r}")
            opts[k] = v
        else:
            flags.add(tok)
    return opts, flags


def _check_magic(statements, magic):
    try:
        lineno, toks = next(statements)
    except StopIteration:
        raise SchemaError("empty document") from None
    if toks[0] != magic or len(toks) != 2:
        _fail(lineno, f"document must start with '{magic} <version>'")
    if toks[1] != str(SCHEMA_VERSION):
        _fail(lineno, f"unsupported schema version {toks[1]!r}")


def parse_document(text: str) -> FeederDocument:
    """Parse feeder document text without building the graph."""
    st = _statements(text)
    _check_magic(st, FEEDER_MAGIC)
    doc = FeederDocument()
    pending = None  # open config block: (lineno, header, rows)
    for lineno, toks in st:
        head = toks[0]
        if pending is not None:
            if head == "end":
                doc.configs[pending[1].id] = _close_config(*pending)
                pending = None
            else:
                try:
                    pending[2].append(tuple(complex(t) for t in toks))
                except ValueError:
                    _fail(lineno, f"bad complex entry in config {pending[1].id}")
            continue
        if head == "name":
            doc.name = " ".join(toks[1:])
        elif head in ("vbase_ll", "vbase_ln"):
            if len(toks) != 2:
                _fail(lineno, f"{head} takes one value in volts")
            v = _float(toks[1], lineno, "voltage")
            if v <= 0:
                _fail(lineno, "v_base must be positive")
            doc.v_base = v / math.sqrt(3.0) if head == "vbase_ll" else v
        elif head == "source":
            if len(toks) != 2:
                _fail(lineno, "source takes one bus id")
            doc.source = toks[1]
        elif head == "source_pu":
            if len(toks) != 7:
                _fail(lineno, "source_pu takes magnitude and angle for each of a, b, c")
            doc.source_pu = tuple(_float(t, lineno, "source voltage") for t in toks[1:])
        elif head == "config":
            if len(toks) < 2:
                _fail(lineno, "config needs an id")
            opts, flags = _options(toks[2:], lineno, {"phases", "per"})
            if flags - {"neutral"}:
                _fail(lineno, f"unknown config flags {sorted(flags - {'neutral'})}")
            per = opts.get("per", "mile")
            if per not in _LENGTH_TO_MILE and per != "total":
                _fail(lineno, f"unknown impedance length unit {per!r}")
            try:
                ph = phases_str(parse_phases(opts.get("phases", "abc")))
            except ValueError as e:
                _fail(lineno, str(e))
            if toks[1] in doc.configs:
                _fail(lineno, f"duplicate config {toks[1]!r}")
            header = ConfigRow(toks[1], ph, "mi" if per == "mile" else per, (), "neutral" in flags)
            pending = (lineno, header, [])
        elif head == "bus":
            if len(toks) < 3:
                _fail(lineno, "bus needs an id and a phase set")
            opts, flags = _options(toks[3:], lineno, {"label"})
            if flags:
                _fail(lineno, f"unexpected tokens {sorted(flags)}")
            try:
                ph = phases_str(parse_phases(toks[2]))
            except ValueError as e:
                _fail(lineno, str(e))
            doc.buses.append(BusRow(toks[1], ph, opts.get("label", "")))
        elif head == "line":
            if len(toks) != 5:
                _fail(lineno, "line takes: from to <length><unit> config")
            length, unit = _quantity(toks[3], lineno, set(_LENGTH_TO_MILE))
            if length <= 0:
                _fail(lineno, "line length must be positive")
            doc.segments.append(SegmentRow(toks[1], toks[2], "line", toks[4], length, unit))
        elif head == "switch":
            if len(toks) != 4:
                _fail(lineno, "switch takes: from to phases")
            try:
                ph = phases_str(parse_phases(toks[3]))
            except ValueError as e:
                _fail(lineno, str(e))
            doc.segments.append(SegmentRow(toks[1], toks[2], "switch", phases=ph))
        elif head == "load":
            if len(toks) != 5:
                _fail(lineno, "load takes: bus phase <P><unit> <Q><unit>")
            try:
                ph = Phase.parse(toks[2]).name
            except ValueError as e:
                _fail(lineno, str(e))
            doc.loads.append(
                LoadRow(toks[1], ph, _power(toks[3], lineno, _REAL_UNITS), _power(toks[4], lineno, _REACTIVE_UNITS))
            )
        else:
            _fail(lineno, f"unknown statement {head!r}")
    if pending is not None:
        _fail(pending[0], f"config {pending[1].id} is missing 'end'")
    if not doc.source:
        raise SchemaError("missing 'source'")
    if doc.v_base <= 0:
        raise SchemaError("missing 'vbase_ll' or 'vbase_ln'")
    return doc


def _close_config(lineno, header: ConfigRow, rows):
    k = len(header.phases) + (1 if header.neutral else 0)
    if len(rows) != k or any(len(r) != k for r in rows):
        _fail(lineno, f"config {header.id} needs {k} rows of {k} entries")
    return ConfigRow(header.id, header.phases, header.per, tuple(rows), header.neutral)


def config_impedance(cfg: ConfigRow) -> PhaseImpedanceMatrix:
    """Per-unit-length (or total) phase impedance, Kron-reduced when a neutral is listed."""
    block = np.array(cfg.matrix, dtype=complex)
    if cfg.neutral:
        block = eliminate_last_conductor(block)
    return PhaseImpedanceMatrix.from_block(block, cfg.phases)


def _fmt(x: float) -> str:
    return repr(float(x))


def _fmt_complex(z: complex) -> str:
    z = complex(z)
    return f"{_fmt(z.real)}{'+' if z.imag >= 0 or math.isnan(z.imag) else '-'}{_fmt(abs(z.imag))}j"


def serialize_document(doc: FeederDocument) -> str:
    out = [f"{FEEDER_MAGIC} {doc.schema_version}"]
    if doc.name:
        out.append(f"name {doc.name}")
    out.append(f"vbase_ln {_fmt(doc.v_base)}")
    out.append(f"source {doc.source}")
    if doc.source_pu is not None:
        out.append("source_pu " + " ".join(_fmt(x) for x in doc.source_pu))
    for cfg in doc.configs.values():
        per = "mile" if cfg.per == "mi" else cfg.per
        out.append(f"config {cfg.id} phases={cfg.phases} per={per}" + (" neutral" if cfg.neutral else ""))
        for row in cfg.matrix:
            out.append("  " + " ".join(_fmt_complex(z) for z in row))
        out.append("end")
    for b in doc.buses:
        out.append(f"bus {b.id} {b.phases}" + (f" label={b.label}" if b.label else ""))
    for s in doc.segments:
        if s.kind == "switch":
            out.append(f"switch {s.from_bus} {s.to_bus} {s.phases}")
        else:
            out.append(f"line {s.from_bus} {s.to_bus} {_fmt(s.length)}{s.unit} {s.config}")
    for ld in doc.loads:
        out.append(f"load {ld.bus} {ld.phase} {_fmt(ld.p)}W {_fmt(ld.q)}var")
    return "\n".join(out) + "\n"


def build_feeder(doc: FeederDocument) -> tuple[FeederGraph, LoadSpec]:
    """Resolve configs and lengths into a validated graph plus its base-case loads."""
    bus_ids = {b.id for b in doc.buses}
    if len(bus_ids) != len(doc.buses):
        raise SchemaError("duplicate bus ids")
    if doc.source not in bus_ids:
        raise UnknownBusReference(f"source {doc.source!r} is not a declared bus")
    segments = []
    for s in doc.segments:
        for b in (s.from_bus, s.to_bus):
            if b not in bus_ids:
                raise UnknownBusReference(f"segment {s.from_bus}-{s.to_bus} references undeclared bus {b!r}")
        if s.kind == "switch":
            z = PhaseImpedanceMatrix.zeros(parse_phases(s.phases))
        else:
            if s.config not in doc.configs:
                raise SchemaError(f"segment {s.from_bus}-{s.to_bus} uses unknown config {s.config!r}")
            cfg = doc.configs[s.config]
            zc = config_impedance(cfg)
            if cfg.per == "total":
                z = zc
            else:
                miles = s.length * _LENGTH_TO_MILE[s.unit]
                z = zc.scaled(miles / _LENGTH_TO_MILE[cfg.per])
        segments.append(LineSegment(s.from_bus, s.to_bus, z))
    source_voltage = None
    if doc.source_pu is not None:
        sp = doc.source_pu
        v = [sp[2 * i] * doc.v_base * np.exp(1j * np.deg2rad(sp[2 * i + 1])) for i in range(3)]
        source_voltage = NodeVoltage(np.array(v))
    graph = FeederGraph(
        {b.id: b.phases for b in doc.buses},
        segments,
        doc.source,
        doc.v_base,
        name=doc.name,
        source_voltage=source_voltage,
    )
    power: dict = {}
    for ld in doc.loads:
        if ld.bus not in bus_ids:
            raise UnknownBusReference(f"load references undeclared bus {ld.bus!r}")
        row = power.setdefault(ld.bus, [0j, 0j, 0j])
        row[int(Phase.parse(ld.phase))] += complex(ld.p, ld.q)
    loads = LoadSpec({b: tuple(s) for b, s in power.items()})
    validate(graph, loads)
    return graph, loads


def parse_feeder(text: str) -> tuple[FeederGraph, LoadSpec]:
    return build_feeder(parse_document(text))


# ---------------------------------------------------------------------------
# scenarios

@dataclass(frozen=True)
class ActorChange:
    """Change in power drawn at one bus and phase (W, var); positive means more load."""

    bus: str
    phase: Phase
    dp: float
    dq: float

    @property
    def ds(self) -> complex:
        return complex(self.dp, self.dq)


@dataclass(frozen=True)
class StochasticActor:
    bus: str
    phases: frozenset | None = None  # None: every phase wired at the bus
    var_p: float | None = None  # W^2; None: scenario default
    var_q: float | None = None  # var^2


@dataclass(frozen=True)
class Scenario:
    name: str = ""
    observation: str | None = None
    phase: Phase | None = None
    threshold: float = 0.05  # pu


@dataclass(frozen=True)
class Deterministic(Scenario):
    actors: tuple = ()

    def load_changes(self) -> dict:
        """``{(bus, phase): delta_S drawn}`` with repeated entries summed."""
        out: dict = {}
        for a in self.actors:
            key = (a.bus, a.phase)
            out[key] = out.get(key, 0j) + a.ds
        return out

    def buses(self) -> list:
        return list(dict.fromkeys(a.bus for a in self.actors))

    def scaled(self, factor: float) -> "Deterministic":
        acts = tuple(ActorChange(a.bus, a.phase, a.dp * factor, a.dq * factor) for a in self.actors)
        return Deterministic(self.name, self.observation, self.phase, self.threshold, acts)


@dataclass(frozen=True)
class Stochastic(Scenario):
    actors: tuple = ()
    var_p: float = 0.0  # W^2
    var_q: float = 0.0  # var^2
    rho_pp: float = 0.0
    rho_qq: float = 0.0
    rho_pq: float = 0.0
    rho_cross: float = 0.0
    nonactor_var_p: float = 0.0
    nonactor_var_q: float = 0.0


def _check_rho(value, lineno, name):
    if not -1.0 <= value <= 1.0:
        raise InvalidCorrelation(f"line {lineno}: {name}={value} outside [-1, 1]")
    return value


def _check_var(value, lineno, name):
    if value < 0:
        raise NegativeVariance(f"line {lineno}: {name}={value} is negative")
    return value


def parse_scenario(text: str) -> Deterministic | Stochastic:
    st = _statements(text)
    _check_magic(st, SCENARIO_MAGIC)
    common = {"name": "", "observation": None, "phase": None, "threshold": 0.05}
    kind = None
    det_actors, sto_actors = [], []
    params = {"var_p": 0.0, "var_q": 0.0, "nonactor_var_p": 0.0, "nonactor_var_q": 0.0,
              "rho_pp": 0.0, "rho_qq": 0.0, "rho_pq": 0.0, "rho_cross": 0.0}
    for lineno, toks in st:
        head = toks[0]
        if head == "name":
            common["name"] = " ".join(toks[1:])
        elif head == "kind":
            if len(toks) != 2 or toks[1] not in ("deterministic", "stochastic"):
                _fail(lineno, "kind must be 'deterministic' or 'stochastic'")
            if kind is not None:
                _fail(lineno, "kind given twice")
            kind = toks[1]
        elif head == "observation":
            if len(toks) not in (2, 3):
                _fail(lineno, "observation takes a bus and an optional phase")
            common["observation"] = toks[1]
            if len(toks) == 3:
                try:
                    common["phase"] = Phase.parse(toks[2])
                except ValueError as e:
                    _fail(lineno, str(e))
        elif head == "threshold":
            if len(toks) != 2:
                _fail(lineno, "threshold takes one value in pu")
            t = _float(toks[1], lineno, "threshold")
            if t < 0:
                _fail(lineno, "threshold must be non-negative")
            common["threshold"] = t
        elif head in ("var_p", "nonactor_var_p"):
            _need(toks, 2, lineno)
            params[head] = _check_var(_squared_power(toks[1], lineno, _REAL_UNITS), lineno, head)
        elif head in ("var_q", "nonactor_var_q"):
            _need(toks, 2, lineno)
            params[head] = _check_var(_squared_power(toks[1], lineno, _REACTIVE_UNITS), lineno, head)
        elif head in ("rho_pp", "rho_qq", "rho_pq", "rho_cross"):
            _need(toks, 2, lineno)
            params[head] = _check_rho(_float(toks[1], lineno, head), lineno, head)
        elif head == "actor":
            if kind is None:
                _fail(lineno, "'kind' must precede actors")
            if kind == "deterministic":
                if len(toks) != 5:
                    _fail(lineno, "deterministic actor takes: bus phase <dP><unit> <dQ><unit>")
                try:
                    ph = Phase.parse(toks[2])
                except ValueError as e:
                    _fail(lineno, str(e))
                det_actors.append(
                    ActorChange(toks[1], ph, _power(toks[3], lineno, _REAL_UNITS), _power(toks[4], lineno, _REACTIVE_UNITS))
                )
            else:
                if len(toks) < 2:
                    _fail(lineno, "actor needs a bus")
                rest = toks[2:]
                phases = None
                if rest and "=" not in rest[0]:
                    try:
                        phases = parse_phases(rest[0])
                    except ValueError as e:
                        _fail(lineno, str(e))
                    rest = rest[1:]
                opts, flags = _options(rest, lineno, {"var_p", "var_q"})
                if flags:
                    _fail(lineno, f"unexpected tokens {sorted(flags)}")
                vp = vq = None
                if "var_p" in opts:
                    vp = _check_var(_squared_power(opts["var_p"], lineno, _REAL_UNITS), lineno, "var_p")
                if "var_q" in opts:
                    vq = _check_var(_squared_power(opts["var_q"], lineno, _REACTIVE_UNITS), lineno, "var_q")
                sto_actors.append(StochasticActor(toks[1], phases, vp, vq))
        else:
            _fail(lineno, f"unknown statement {head!r}")
    if kind is None:
        raise SchemaError("missing 'kind'")
    if kind == "deterministic":
        return Deterministic(actors=tuple(det_actors), **common)
    return Stochastic(actors=tuple(sto_actors), **common, **params)


def _need(toks, n, lineno):
    if len(toks) != n:
        _fail(lineno, f"{toks[0]} takes {n - 1} value(s)")


def check_scenario(scenario: Scenario, graph: FeederGraph) -> None:
    """Raise if the scenario references buses or phases the feeder lacks."""
    buses = []
    if scenario.observation is not None:
        buses.append(scenario.observation)
    buses.extend(a.bus for a in scenario.actors)
    for b in buses:
        if b not in graph:
            raise UnknownBusReference(f"scenario references unknown bus {b!r}")
    if scenario.observation is not None and scenario.phase is not None:
        if scenario.phase not in graph.phases(scenario.observation):
            raise UnknownBusReference(f"bus {scenario.observation} has no phase {scenario.phase}")
    if isinstance(scenario, Deterministic):
        for a in scenario.actors:
            if a.phase not in graph.phases(a.bus) and a.ds != 0:
                raise UnknownBusReference(f"actor at bus {a.bus} uses unwired phase {a.phase}")


# ---------------------------------------------------------------------------
# bundled data

BUNDLED_FEEDERS = {"ieee37": "ieee37.feeder", "ieee123": "ieee123.feeder"}
BUNDLED_SCENARIOS = {
    "table1": "table1.scenario",
    "fig4": "fig4.scenario",
    "odd-nodes": "odd-nodes.scenario",
    "123-seven-actors": "123-seven-actors.scenario",
    "123-fig4b": "123-fig4b.scenario",
    "123-pvsa": "123-pvsa.scenario",
}


def _read_bundled(filename: str) -> str:
    return resources.files("pvsa.data").joinpath(filename).read_text()


def _resolve(name_or_path, bundled: dict) -> str:
    key = str(name_or_path)
    if key in bundled:
        return _read_bundled(bundled[key])
    path = Path(key)
    if not path.exists():
        raise SchemaError(f"no bundled entry or file named {key!r} (bundled: {sorted(bundled)})")
    return path.read_text()


def load_feeder(name_or_path) -> tuple[FeederGraph, LoadSpec]:
    """Load a bundled feeder (``ieee37``, ``ieee123``) or a feeder document path."""
    return parse_feeder(_resolve(name_or_path, BUNDLED_FEEDERS))


def load_feeder_document(name_or_path) -> FeederDocument:
    return parse_document(_resolve(name_or_path, BUNDLED_FEEDERS))


def load_scenario(name_or_path) -> Deterministic | Stochastic:
    return parse_scenario(_resolve(name_or_path, BUNDLED_SCENARIOS))


# ---------------------------------------------------------------------------
# result tables

def format_value(x) -> str:
    if isinstance(x, Phase):
        return x.name
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    return str(x)


def render_csv(rows: Iterable, columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        if isinstance(row, dict):
            row = [row[c] for c in columns]
        if len(row) != len(columns):
            raise ValueError(f"row has {len(row)} fields, expected {len(columns)}")
        w.writerow([format_value(v) for v in row])
    return buf.getvalue()


def atomic_write(destination, text: str) -> Path:
    """Write ``text`` next to ``destination`` and rename it into place."""
    dest = Path(destination)
    dest.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=dest.parent, prefix=f".{dest.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, dest)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return dest


def write_results(rows: Iterable, destination, columns: Sequence[str]) -> Path:
    """Write a CSV table with a fixed column order and 12-significant-digit floats."""
    return atomic_write(destination, render_csv(rows, columns))
