"""Halted-clock logic evaluation and expansion into optical emitters."""

from __future__ import annotations

from dataclasses import dataclass, field
from graphlib import CycleError, TopologicalSorter
from typing import NamedTuple

import numpy as np

from .fabric import CONST_NETS, CellRef, FabricConfig, FabricError
from .floorplan import FloorPlan

KINDS = ("pass_transistor", "config_cell", "ff_core", "buffer")
KIND_CODE = {k: i for i, k in enumerate(KINDS)}


class CombinationalLoopError(FabricError):
    def __init__(self, nets):
        self.nets = list(nets)
        super().__init__(f"combinational loop through nets: {' -> '.join(self.nets)}")


class UndrivenNetError(FabricError):
    def __init__(self, net: str, consumer: str):
        self.net = net
        super().__init__(f"net {net} is undriven (read by {consumer})")


class Driver(NamedTuple):
    kind: str                 # "const" | "pin" | "lut" | "ff" | "route"
    cell: CellRef | None
    inputs: tuple[str, ...]   # nets this driver reads combinationally


@dataclass
class Netlist:
    nodes: list[str]
    drivers: dict[str, Driver]
    order: list[str]
    consumers: dict[str, list[str]] = field(default_factory=dict)


def build_netlist(cfg: FabricConfig) -> Netlist:
    """Collect drivers and a topological order; FF outputs act as sources."""
    drivers: dict[str, Driver] = {c: Driver("const", None, ()) for c in CONST_NETS}
    consumers: dict[str, list[str]] = {}

    def add(net: str, drv: Driver):
        if net in drivers:
            raise FabricError(f"net {net} is multiply driven")
        drivers[net] = drv

    for net, _ in cfg.pins:
        add(net, Driver("pin", None, ()))
    for ref, lut in cfg.iter_luts():
        if lut.used:
            add(lut.output_net, Driver("lut", ref, tuple(lut.input_nets)))
            for n in lut.input_nets:
                consumers.setdefault(n, []).append(ref.name)
    for ref, ff in cfg.iter_ffs():
        if ff.used:
            add(ff.q_net, Driver("ff", ref, ()))
            consumers.setdefault(ff.d_net, []).append(ref.name)
    for ref, (src, sink) in cfg.iter_routes():
        add(sink, Driver("route", ref, (src,)))
        consumers.setdefault(src, []).append(f"{ref.name} {src}->{sink}")

    graph = {net: set(drv.inputs) for net, drv in drivers.items()}
    ts = TopologicalSorter(graph)
    try:
        order = list(ts.static_order())
    except CycleError as exc:
        cycle = exc.args[1]
        raise CombinationalLoopError(cycle) from None
    nodes = sorted(set(order) | set(consumers))
    return Netlist(nodes, drivers, order, consumers)


def lut_index(inputs) -> int:
    return sum(int(b) << i for i, b in enumerate(inputs))


def lut_eval(init, inputs) -> int:
    """``init[sum(inputs[i] << i)]``; input 0 is the least significant selector."""
    if len(init) != 1 << len(inputs):
        raise ValueError(f"init has {len(init)} bits, {len(inputs)} inputs need {1 << len(inputs)}")
    return int(init[lut_index(inputs)])


class MuxRecord(NamedTuple):
    level: int
    index: int
    select: int
    in0: int
    in1: int
    out: int


def lut_mux_states(init, inputs) -> list[MuxRecord]:
    """Evaluate the LUT as a balanced tree of 2:1 muxes.

    Level 0 muxes pick between adjacent INIT bits using input 0; level ``l``
    muxes pick between level ``l-1`` outputs using input ``l``.  The last
    record is the root.
    """
    if len(init) != 1 << len(inputs):
        raise ValueError(f"init has {len(init)} bits, {len(inputs)} inputs need {1 << len(inputs)}")
    records = []
    values = [int(b) for b in init]
    for level, sel in enumerate(inputs):
        sel = int(sel)
        nxt = []
        for j in range(len(values) // 2):
            a, b = values[2 * j], values[2 * j + 1]
            out = b if sel else a
            records.append(MuxRecord(level, j, sel, a, b, out))
            nxt.append(out)
        values = nxt
    return records


def evaluate_logic(nl: Netlist, cfg: FabricConfig) -> dict[str, int]:
    """Value of every net with the clock halted."""
    pins = cfg.pin_values()
    ff_state = {ff.q_net: ff.state for _, ff in cfg.iter_ffs() if ff.used}
    luts = {ref: lut for ref, lut in cfg.iter_luts()}
    values: dict[str, int] = {}
    for net in nl.order:
        drv = nl.drivers.get(net)
        if drv is None:
            who = nl.consumers.get(net, ["?"])[0]
            raise UndrivenNetError(net, who)
        if drv.kind == "const":
            values[net] = int(net)
        elif drv.kind == "pin":
            values[net] = pins[net]
        elif drv.kind == "ff":
            values[net] = ff_state[net]
        elif drv.kind == "route":
            values[net] = values[drv.inputs[0]]
        else:
            lut = luts[drv.cell]
            values[net] = lut_eval(lut.init, [values[n] for n in lut.input_nets])
    for _, ff in cfg.iter_ffs():
        if ff.used and ff.d_net not in values:
            raise UndrivenNetError(ff.d_net, ff.name)
    return values


# -- device response --------------------------------------------------------


@dataclass(frozen=True)
class DeviceResponseTable:
    """Modulation amplitude for each ``(kind, conducting, value)``."""

    amplitudes: tuple  # sorted ((kind, conducting, value), amplitude) pairs

    @classmethod
    def from_dict(cls, table: dict) -> "DeviceResponseTable":
        missing = [(k, c, v) for k in KINDS for c in (0, 1) for v in (0, 1) if (k, c, v) not in table]
        if missing:
            raise ValueError(f"response table lacks entries {missing}")
        unknown = [key for key in table if key[0] not in KINDS]
        if unknown:
            raise ValueError(f"unknown device kinds {unknown}")
        for key, amp in table.items():
            if not amp >= 0:
                raise ValueError(f"negative amplitude for {key}: {amp}")
        for k in KINDS:
            for v in (0, 1):
                if not table[(k, 1, v)] > table[(k, 0, v)]:
                    raise ValueError(f"{k}: conducting amplitude must exceed non-conducting (value {v})")
        return cls(tuple(sorted((key, float(a)) for key, a in table.items())))

    @classmethod
    def default(cls) -> "DeviceResponseTable":
        on_off = {"pass_transistor": (1.0, 0.25), "config_cell": (0.6, 0.4),
                  "ff_core": (0.9, 0.5), "buffer": (0.7, 0.45)}
        return cls.from_dict({(k, c, v): on_off[k][0 if c else 1]
                              for k in KINDS for c in (0, 1) for v in (0, 1)})

    def as_dict(self) -> dict:
        return dict(self.amplitudes)

    def lookup(self, kind: str, conducting: int, value: int) -> float:
        return self.as_dict()[(kind, int(conducting), int(value))]

    def to_text(self) -> str:
        return "".join(f"{k} {c} {v} {a!r}\n" for (k, c, v), a in self.amplitudes)

    @classmethod
    def from_text(cls, text: str) -> "DeviceResponseTable":
        table = cls.default().as_dict()
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].split()
            if not line:
                continue
            if len(line) != 4:
                raise ValueError(f"line {lineno}: expected 'kind conducting value amplitude'")
            kind, c, v, a = line
            if kind not in KINDS or c not in ("0", "1") or v not in ("0", "1"):
                raise ValueError(f"line {lineno}: bad key {kind} {c} {v}")
            table[(kind, int(c), int(v))] = float(a)
        return cls.from_dict(table)


@dataclass
class EmitterMap:
    x: np.ndarray
    y: np.ndarray
    kind: np.ndarray         # int8 index into KINDS
    conducting: np.ndarray   # uint8
    value: np.ndarray        # uint8
    amplitude: np.ndarray
    origin: list             # (CellRef, device index) per emitter

    def __len__(self) -> int:
        return len(self.x)

    def __eq__(self, other):
        if not isinstance(other, EmitterMap):
            return NotImplemented
        return (self.origin == other.origin
                and all(np.array_equal(getattr(self, f), getattr(other, f))
                        for f in ("x", "y", "kind", "conducting", "value", "amplitude")))

    def records(self):
        for i in range(len(self)):
            yield ((float(self.x[i]), float(self.y[i])), KINDS[self.kind[i]], int(self.conducting[i]),
                   int(self.value[i]), float(self.amplitude[i]), self.origin[i])

    def subset(self, mask) -> "EmitterMap":
        mask = np.asarray(mask, bool)
        return EmitterMap(self.x[mask], self.y[mask], self.kind[mask], self.conducting[mask],
                          self.value[mask], self.amplitude[mask],
                          [o for o, keep in zip(self.origin, mask) if keep])

    @classmethod
    def from_records(cls, rows) -> "EmitterMap":
        """Build from ``(x, y, kind, conducting, value, amplitude, origin)`` tuples."""
        rows = list(rows)
        return cls(
            np.array([r[0] for r in rows], float),
            np.array([r[1] for r in rows], float),
            np.array([KIND_CODE[r[2]] for r in rows], np.int8),
            np.array([r[3] for r in rows], np.uint8),
            np.array([r[4] for r in rows], np.uint8),
            np.array([r[5] for r in rows], float),
            [r[6] for r in rows],
        )

    @classmethod
    def concat(cls, *maps: "EmitterMap") -> "EmitterMap":
        return cls(*(np.concatenate([getattr(m, f) for m in maps])
                     for f in ("x", "y", "kind", "conducting", "value", "amplitude")),
                   [o for m in maps for o in m.origin])


def expand_emitters(cfg: FabricConfig, values: dict, table: DeviceResponseTable,
                    fp: FloorPlan) -> EmitterMap:
    """Turn evaluated logic into point emitters.

    Used LUTs emit one config cell per INIT bit plus a pass-transistor pair
    per internal mux; unused LUTs emit only all-zero config cells.  Used FFs
    emit a core and an output buffer.  Each enabled route emits a pass
    transistor and a buffer in its switch-box slot.
    """
    amp = table.as_dict()
    rows = []

    def emit(ref, idx, kind, conducting, value):
        x, y = fp.devices[(ref, idx)]
        rows.append((x, y, kind, conducting, value, amp[(kind, conducting, value)], (ref, idx)))

    for ref, lut in cfg.iter_luts():
        n = 1 << lut.arity
        if not lut.used:
            for b in range(n):
                emit(ref, b, "config_cell", 0, 0)
            continue
        for b, bit in enumerate(lut.init):
            emit(ref, b, "config_cell", int(bit), int(bit))
        inputs = [values[net] for net in lut.input_nets]
        for m, rec in enumerate(lut_mux_states(lut.init, inputs)):
            emit(ref, n + 2 * m, "pass_transistor", int(rec.select == 0), rec.in0)
            emit(ref, n + 2 * m + 1, "pass_transistor", int(rec.select == 1), rec.in1)

    for ref, ff in cfg.iter_ffs():
        if ff.used:
            emit(ref, 0, "ff_core", ff.state, ff.state)
            emit(ref, 1, "buffer", ff.state, ff.state)

    for ref, route in cfg.iter_routes():
        v = values[route[0]]
        p_idx, b_idx = fp.route_devices(ref, route)
        emit(ref, p_idx, "pass_transistor", 1, v)
        emit(ref, b_idx, "buffer", v, v)

    return EmitterMap.from_records(rows)


def snapshot_emitters(cfg: FabricConfig, fp: FloorPlan, table: DeviceResponseTable | None = None) -> EmitterMap:
    """Netlist, evaluation and expansion in one call."""
    values = evaluate_logic(build_netlist(cfg), cfg)
    return expand_emitters(cfg, values, table or DeviceResponseTable.default(), fp)
