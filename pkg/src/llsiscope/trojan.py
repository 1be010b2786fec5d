"""Trojan patches on fabric configs and generators for the experiment classes.

A :class:`TrojanSpec` is an ordered list of :class:`Patch` records.  Targets
and payloads are plain strings so specs round-trip through a text file::

    label trit-tc:6
    patch set_init target=SLICE_X1Y1.D6LUT payload=0x00008000:0x00010000
    patch set_route target=TILE_X0Y1.SBOX payload=-n1->n2
    patch add_gates target=SLICE_X2Y0.A6LUT;SLICE_X2Y0.B6LUT payload=AND(a,b)>t0;NOT(t0)>t1
"""

from __future__ import annotations

import math
import random
import re
from dataclasses import dataclass, replace

from .configfile import NET_RE
from .fabric import (
    CellRef,
    FFConfig,
    FabricConfig,
    FabricError,
    LUTConfig,
    family_arity,
    init_from_hex,
    init_to_hex,
    parse_cellref,
    sbox_ref,
    validate,
)
from .logic import build_netlist, evaluate_logic

PATCH_KINDS = ("set_init", "set_pin", "set_ff_state", "set_route", "add_route_thru",
               "move_route_thru", "add_gates", "add_counter")
GATE_FUNCTIONS = {
    "AND": lambda bits: int(all(bits)),
    "OR": lambda bits: int(any(bits)),
    "NAND": lambda bits: int(not all(bits)),
    "NOR": lambda bits: int(not any(bits)),
    "XOR": lambda bits: sum(bits) & 1,
    "NOT": lambda bits: 1 - bits[0],
}


class PatchError(FabricError):
    pass


@dataclass(frozen=True)
class Patch:
    kind: str
    target: str
    payload: str = ""

    def __post_init__(self):
        if self.kind not in PATCH_KINDS:
            raise PatchError(f"unknown patch kind {self.kind!r}")


@dataclass(frozen=True)
class TrojanSpec:
    label: str
    patches: tuple[Patch, ...] = ()

    def to_text(self) -> str:
        lines = [f"label {self.label}"]
        lines += [f"patch {p.kind} target={p.target} payload={p.payload}" for p in self.patches]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "TrojanSpec":
        label = "trojan"
        patches = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            kw, _, rest = line.partition(" ")
            if kw == "label":
                label = rest.strip()
            elif kw == "patch":
                m = re.match(r"^(\w+)\s+target=(\S*)(?:\s+payload=(\S*))?$", rest.strip())
                if not m:
                    raise PatchError(f"line {lineno}: expected 'patch <kind> target=<...> payload=<...>'")
                patches.append(Patch(m.group(1), m.group(2), m.group(3) or ""))
            else:
                raise PatchError(f"line {lineno}: unknown keyword {kw!r}")
        return cls(label, tuple(patches))


@dataclass(frozen=True)
class GateDef:
    function: str
    inputs: tuple[str, ...]
    output: str

    def __post_init__(self):
        if self.function not in GATE_FUNCTIONS:
            raise PatchError(f"unknown gate function {self.function!r}")
        if self.function == "NOT" and len(self.inputs) != 1:
            raise PatchError("NOT takes exactly one input")
        if not self.inputs:
            raise PatchError(f"{self.function} gate needs inputs")

    def init(self, arity: int) -> tuple[int, ...]:
        """Truth table over ``arity`` LUT inputs; inputs past the gate's own are tied to 0."""
        if len(self.inputs) > arity:
            raise PatchError(f"{self.function} gate with {len(self.inputs)} inputs exceeds LUT arity {arity}")
        fn = GATE_FUNCTIONS[self.function]
        n = len(self.inputs)
        return tuple(fn([(idx >> i) & 1 for i in range(n)]) for idx in range(1 << arity))

    def to_text(self) -> str:
        return f"{self.function}({','.join(self.inputs)})>{self.output}"

    @classmethod
    def from_text(cls, text: str) -> "GateDef":
        m = re.match(r"^([A-Z]+)\(([^()]*)\)>(\S+)$", text)
        if not m:
            raise PatchError(f"bad gate {text!r}; expected FUNC(in,...)>out")
        return cls(m.group(1), tuple(n for n in m.group(2).split(",") if n), m.group(3))


def identity_init(arity: int) -> tuple[int, ...]:
    """INIT whose output equals input 0: 0xAAAA for 4 inputs, 0xAAAAAAAAAAAAAAAA for 6."""
    return tuple(idx & 1 for idx in range(1 << arity))


def net_token(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_]", "_", text)


# -- structural editing -----------------------------------------------------


def _replace_element(cfg: FabricConfig, ref: CellRef, new) -> FabricConfig:
    tiles = []
    for tile in cfg.tiles:
        if (tile.col, tile.row) != ref.tile:
            tiles.append(tile)
            continue
        slices = []
        for sl in tile.slices:
            if sl.name == ref.slice:
                sl = replace(
                    sl,
                    luts=tuple(new if e.name == ref.element else e for e in sl.luts),
                    ffs=tuple(new if e.name == ref.element else e for e in sl.ffs),
                )
            slices.append(sl)
        tiles.append(replace(tile, slices=tuple(slices)))
    return replace(cfg, tiles=tuple(tiles))


def _edit_routes(cfg: FabricConfig, tile_xy: tuple[int, int], add=(), remove=()) -> FabricConfig:
    tiles = []
    for tile in cfg.tiles:
        if (tile.col, tile.row) == tile_xy:
            routes = set(tile.switchbox.routes)
            for r in remove:
                if r not in routes:
                    raise PatchError(f"route {r[0]}->{r[1]} not present in TILE_X{tile.col}Y{tile.row}")
                routes.discard(r)
            for r in add:
                if r in routes:
                    raise PatchError(f"route {r[0]}->{r[1]} already present in TILE_X{tile.col}Y{tile.row}")
                routes.add(r)
            tile = replace(tile, switchbox=replace(tile.switchbox, routes=frozenset(routes)))
        tiles.append(tile)
    return replace(cfg, tiles=tuple(tiles))


def _find_route(cfg: FabricConfig, pred):
    for ref, route in cfg.iter_routes():
        if pred(route):
            return ref, route
    return None


def _lut(cfg: FabricConfig, ref: CellRef) -> LUTConfig:
    e = cfg.element(ref)
    if not isinstance(e, LUTConfig):
        raise PatchError(f"{ref.name} is not a LUT")
    return e


def _ff(cfg: FabricConfig, ref: CellRef) -> FFConfig:
    e = cfg.element(ref)
    if not isinstance(e, FFConfig):
        raise PatchError(f"{ref.name} is not an FF")
    return e


def _cell(cfg: FabricConfig, text: str) -> CellRef:
    try:
        return parse_cellref(text, cfg)
    except FabricError as exc:
        raise PatchError(str(exc)) from None


def _check_net(net: str) -> str:
    if not NET_RE.match(net):
        raise PatchError(f"invalid net id {net!r}")
    return net


def _parse_route(text: str) -> tuple[str, str]:
    src, sep, sink = text.partition("->")
    if not sep:
        raise PatchError(f"bad route {text!r}; expected src->sink")
    return _check_net(src), _check_net(sink)


def _allocate_lut(cfg: FabricConfig, ref: CellRef, init, inputs, output) -> FabricConfig:
    lut = _lut(cfg, ref)
    if lut.used:
        raise PatchError(f"{ref.name} is already used and cannot be allocated")
    inputs = tuple(inputs) + ("0",) * (lut.arity - len(inputs))
    return _replace_element(cfg, ref, replace(lut, init=tuple(init), input_nets=inputs,
                                              output_net=output, used=True))


def _route_thru_routes(cfg: FabricConfig, ref: CellRef):
    """The feeding and draining routes of the route-thru LUT at ``ref``."""
    lut = _lut(cfg, ref)
    if not lut.used or lut.init != identity_init(lut.arity):
        raise PatchError(f"no route-thru LUT at {ref.name}")
    feed = _find_route(cfg, lambda r: r[1] == lut.input_nets[0])
    drain = _find_route(cfg, lambda r: r[0] == lut.output_net)
    if feed is None or drain is None:
        raise PatchError(f"LUT at {ref.name} is not wired as a route-thru")
    return lut, feed, drain


def _apply_one(cfg: FabricConfig, p: Patch) -> FabricConfig:
    if p.kind == "set_init":
        ref = _cell(cfg, p.target)
        lut = _lut(cfg, ref)
        before, sep, after = p.payload.rpartition(":")
        try:
            if sep and init_from_hex(before, lut.arity) != lut.init:
                raise PatchError(f"{ref.name} INIT is {lut.init_hex}, patch expects {before}")
            new = init_from_hex(after, lut.arity)
        except FabricError as exc:
            raise PatchError(f"invalid init for {ref.name}: {exc}") from None
        return _replace_element(cfg, ref, replace(lut, init=new))

    if p.kind == "set_pin":
        net = p.target
        if net not in cfg.pin_values():
            raise PatchError(f"unknown pin {net!r}")
        if p.payload not in ("0", "1"):
            raise PatchError(f"pin value must be 0 or 1, got {p.payload!r}")
        return replace(cfg, pins=tuple((n, int(p.payload) if n == net else v) for n, v in cfg.pins))

    if p.kind == "set_ff_state":
        ref = _cell(cfg, p.target)
        ff = _ff(cfg, ref)
        if p.payload not in ("0", "1"):
            raise PatchError(f"FF state must be 0 or 1, got {p.payload!r}")
        return _replace_element(cfg, ref, replace(ff, state=int(p.payload)))

    if p.kind == "set_route":
        ref = _cell(cfg, p.target)
        if ref.element != "SBOX":
            raise PatchError(f"set_route needs a switch box target, got {ref.name}")
        op, body = p.payload[:1], p.payload[1:]
        if op not in "+-" or not op:
            raise PatchError(f"set_route payload must start with + or -, got {p.payload!r}")
        route = _parse_route(body)
        return _edit_routes(cfg, ref.tile, add=[route] if op == "+" else [], remove=[route] if op == "-" else [])

    if p.kind == "add_route_thru":
        ref = _cell(cfg, p.target)
        lut = _lut(cfg, ref)
        src, sink = _parse_route(p.payload)
        found = _find_route(cfg, lambda r: r == (src, sink))
        if found is None:
            raise PatchError(f"no route {src}->{sink} to thread through {ref.name}")
        if lut.used:
            raise PatchError(f"{ref.name} is already used and cannot be allocated")
        stem = net_token(ref.name)
        in_net, out_net = f"{stem}_rti", f"{stem}_rto"
        cfg = _edit_routes(cfg, found[0].tile, remove=[(src, sink)])
        cfg = _allocate_lut(cfg, ref, identity_init(lut.arity), [in_net], out_net)
        return _edit_routes(cfg, ref.tile, add=[(src, in_net), (out_net, sink)])

    if p.kind == "move_route_thru":
        src_ref = _cell(cfg, p.target)
        dst_ref = _cell(cfg, p.payload)
        if src_ref == dst_ref:
            return cfg
        old, (feed_sb, feed), (drain_sb, drain) = _route_thru_routes(cfg, src_ref)
        new = _lut(cfg, dst_ref)
        if new.used:
            raise PatchError(f"{dst_ref.name} is already used and cannot be allocated")
        cfg = _edit_routes(cfg, feed_sb.tile, remove=[feed])
        cfg = _edit_routes(cfg, drain_sb.tile, remove=[drain])
        cfg = _replace_element(cfg, src_ref, LUTConfig.unused(old.name, old.arity))
        cfg = _allocate_lut(cfg, dst_ref, old.init, old.input_nets, old.output_net)
        return _edit_routes(cfg, dst_ref.tile, add=[feed, drain])

    if p.kind == "add_gates":
        targets = [t for t in p.target.split(";") if t]
        gates = [GateDef.from_text(g) for g in p.payload.split(";") if g]
        if len(targets) != len(gates):
            raise PatchError(f"add_gates has {len(targets)} targets for {len(gates)} gates")
        arity = family_arity(cfg.family)
        for t, g in zip(targets, gates):
            for n in g.inputs + (g.output,):
                _check_net(n)
            cfg = _allocate_lut(cfg, _cell(cfg, t), g.init(arity), g.inputs, g.output)
        return cfg

    if p.kind == "add_counter":
        ff_part, sep, lut_part = p.target.partition("|")
        ff_refs = [_cell(cfg, t) for t in ff_part.split(";") if t]
        lut_refs = [_cell(cfg, t) for t in lut_part.split(";") if t]
        m = re.match(r"^(\d+):([A-Za-z0-9_]+)$", p.payload)
        if not sep or not m:
            raise PatchError("add_counter needs target=<ffs>|<luts> payload=<states>:<prefix>")
        n_states, prefix = int(m.group(1)), m.group(2)
        bits = counter_bits(n_states)
        if len(ff_refs) != bits or len(lut_refs) != bits:
            raise PatchError(f"a {n_states}-state counter needs {bits} FFs and {bits} LUTs")
        arity = family_arity(cfg.family)
        if bits > arity:
            raise PatchError(f"{bits}-bit counter exceeds LUT arity {arity}")
        q = [f"{prefix}_q{i}" for i in range(bits)]
        for i, (fref, lref) in enumerate(zip(ff_refs, lut_refs)):
            ff = _ff(cfg, fref)
            if ff.used:
                raise PatchError(f"{fref.name} is already used and cannot be allocated")
            cfg = _replace_element(cfg, fref, FFConfig(ff.name, 0, f"{prefix}_d{i}", q[i], True))
            cfg = _allocate_lut(cfg, lref, counter_next_state_init(n_states, i, arity), q, f"{prefix}_d{i}")
        return cfg

    raise PatchError(f"unhandled patch kind {p.kind}")


def apply_patch(cfg: FabricConfig, spec: TrojanSpec) -> FabricConfig:
    """Apply every patch in order and check the result is still a valid config."""
    for p in spec.patches:
        cfg = _apply_one(cfg, p)
    problems = validate(cfg)
    if problems:
        raise PatchError(f"patched config is invalid: {'; '.join(problems[:5])}")
    return cfg


# -- counters ---------------------------------------------------------------


def counter_bits(n_states: int) -> int:
    if n_states < 2:
        raise PatchError("a counter needs at least 2 states")
    return math.ceil(math.log2(n_states + 1))


def counter_next_state_init(n_states: int, bit: int, arity: int) -> tuple[int, ...]:
    """Binary up-counter 0 .. n_states-1 that wraps to 0; input i is state bit i."""
    bits = counter_bits(n_states)
    mask = (1 << bits) - 1
    out = []
    for idx in range(1 << arity):
        q = idx & mask
        nxt = q + 1 if q < n_states - 1 else 0
        out.append((nxt >> bit) & 1)
    return tuple(out)


def counter_decode_init(n_states: int, arity: int) -> tuple[int, ...]:
    bits = counter_bits(n_states)
    mask = (1 << bits) - 1
    return tuple(int((idx & mask) == n_states - 1) for idx in range(1 << arity))


# -- generators -------------------------------------------------------------


def add_route_thru(cfg: FabricConfig, at: CellRef, source: str, sink: str) -> TrojanSpec:
    lut = _lut(cfg, at)
    if lut.used:
        raise PatchError(f"{at.name} is already used")
    if _find_route(cfg, lambda r: r == (source, sink)) is None:
        raise PatchError(f"no route {source}->{sink} exists")
    return TrojanSpec(f"route-thru@{at.name}", (Patch("add_route_thru", at.name, f"{source}->{sink}"),))


def move_route_thru(cfg: FabricConfig, src: CellRef, dst: CellRef) -> TrojanSpec:
    _route_thru_routes(cfg, src)
    label = f"move-route-thru:{src.name}->{dst.name}"
    if src == dst:
        return TrojanSpec(label, ())
    if _lut(cfg, dst).used:
        raise PatchError(f"{dst.name} is already used")
    return TrojanSpec(label, (Patch("move_route_thru", src.name, dst.name),))


def _unused_luts(cfg: FabricConfig) -> list[CellRef]:
    return [ref for ref, lut in cfg.iter_luts() if not lut.used]


def _unused_ffs(cfg: FabricConfig) -> list[CellRef]:
    return [ref for ref, ff in cfg.iter_ffs() if not ff.used]


def _design_nets(cfg: FabricConfig) -> tuple[list[str], dict]:
    values = evaluate_logic(build_netlist(cfg), cfg)
    nets = sorted(n for n in values if n not in ("0", "1"))
    return nets, values


def _fanout_cone(cfg: FabricConfig, net: str) -> set[str]:
    """Nets combinationally reachable from ``net`` (FFs break the cone)."""
    edges: dict[str, set[str]] = {}
    for _, lut in cfg.iter_luts():
        if lut.used:
            for i in lut.input_nets:
                edges.setdefault(i, set()).add(lut.output_net)
    for _, (src, sink) in cfg.iter_routes():
        edges.setdefault(src, set()).add(sink)
    cone, todo = {net}, [net]
    while todo:
        for nxt in edges.get(todo.pop(), ()):
            if nxt not in cone:
                cone.add(nxt)
                todo.append(nxt)
    return cone


def _pick_splice(cfg: FabricConfig, rnd: random.Random):
    """One routed connection to splice the payload into, or ``None``."""
    routes = list(cfg.iter_routes())
    return rnd.choice(routes) if routes else None


def _payload(splice, trigger: str, prefix: str):
    """Payload XOR gate plus the patches rerouting the spliced sink through it."""
    out = f"{prefix}_pl"
    if splice is None:
        return GateDef("XOR", ("0", trigger), out), []
    sb, (src, sink) = splice
    gate = GateDef("XOR", (src, trigger), out)
    patches = [Patch("set_route", sb.name, f"-{src}->{sink}"), Patch("set_route", sb.name, f"+{out}->{sink}")]
    return gate, patches


def _pick_cells(rnd: random.Random, pool: list[CellRef], n: int, what: str) -> list[CellRef]:
    if len(pool) < n:
        raise PatchError(f"need {n} unused {what}, only {len(pool)} available")
    chosen = rnd.sample(range(len(pool)), n)
    return [pool[i] for i in sorted(chosen)]


def gen_trit_tc(cfg: FabricConfig, n_gates: int = 6, seed: int = 0) -> TrojanSpec:
    """Combinational Trojan: an AND-chain trigger that is 0 under the current inputs,
    feeding an XOR payload spliced into one routed connection."""
    if n_gates < 2:
        raise PatchError("a combinational Trojan needs at least 2 gates (trigger + payload)")
    rnd = random.Random(seed)
    arity = family_arity(cfg.family)
    cells = _pick_cells(rnd, _unused_luts(cfg), n_gates, "LUTs")
    nets, values = _design_nets(cfg)
    splice = _pick_splice(cfg, rnd)
    if splice is not None:
        # trigger taps downstream of the splice would close a loop
        cone = _fanout_cone(cfg, splice[1][1])
        nets = [n for n in nets if n not in cone]
    prefix = f"tc{seed}"
    zeros = [n for n in nets if values[n] == 0]
    ones = [n for n in nets if values[n] == 1]

    gates = []
    if zeros:
        taps = [rnd.choice(zeros)]
        extra = [n for n in nets if n != taps[0]]
        taps += rnd.sample(extra, min(len(extra), rnd.randint(1, arity - 1)))
        gates.append(GateDef("AND", tuple(taps), f"{prefix}_t0"))
    else:
        gates.append(GateDef("NOT", (rnd.choice(ones) if ones else "1",), f"{prefix}_t0"))
    for i in range(1, n_gates - 1):
        k = min(len(nets), rnd.randint(1, arity - 1))
        taps = rnd.sample(nets, k) if nets else []
        gates.append(GateDef("AND", (gates[-1].output, *taps), f"{prefix}_t{i}"))

    payload, reroute = _payload(splice, gates[-1].output, prefix)
    gates.append(payload)
    patch = Patch("add_gates", ";".join(c.name for c in cells), ";".join(g.to_text() for g in gates))
    return TrojanSpec(f"trit-tc:{n_gates}", (patch, *reroute))


def gen_trit_ts(cfg: FabricConfig, n_states: int = 15, seed: int = 0) -> TrojanSpec:
    """Sequential Trojan: a binary counter whose terminal count, gated by a tapped
    net, drives an XOR payload.  Counter FFs start at 0, so the trigger is dormant."""
    bits = counter_bits(n_states)
    arity = family_arity(cfg.family)
    if bits > arity:
        raise PatchError(f"{bits}-bit counter exceeds LUT arity {arity}")
    rnd = random.Random(seed)
    ffs = _pick_cells(rnd, _unused_ffs(cfg), bits, "FFs")
    luts = _pick_cells(rnd, _unused_luts(cfg), bits + 3, "LUTs")
    nets, _ = _design_nets(cfg)
    splice = _pick_splice(cfg, rnd)
    if splice is not None:
        cone = _fanout_cone(cfg, splice[1][1])
        nets = [n for n in nets if n not in cone]
    prefix = f"ts{seed}"
    counter = Patch("add_counter",
                    ";".join(c.name for c in ffs) + "|" + ";".join(c.name for c in luts[:bits]),
                    f"{n_states}:{prefix}")
    q = tuple(f"{prefix}_q{i}" for i in range(bits))
    tap = rnd.choice(nets) if nets else "1"
    # allocated as a gate, then reprogrammed to the terminal-count decoder
    decode = GateDef("AND", q, f"{prefix}_tc")
    trigger = GateDef("AND", (f"{prefix}_tc", tap), f"{prefix}_trig")
    payload, reroute = _payload(splice, trigger.output, prefix)
    gates = Patch("add_gates", ";".join(c.name for c in luts[bits + 1:]),
                  ";".join(g.to_text() for g in (trigger, payload)))
    decode_patch = Patch("add_gates", luts[bits].name, decode.to_text())
    decode_init = Patch("set_init", luts[bits].name, init_to_hex(counter_decode_init(n_states, arity)))
    return TrojanSpec(f"trit-ts:{n_states}", (counter, decode_patch, decode_init, gates, *reroute))


def init_flip(cfg: FabricConfig, at: CellRef, before: str, after: str) -> TrojanSpec:
    lut = _lut(cfg, at)
    if init_from_hex(before, lut.arity) != lut.init:
        raise PatchError(f"{at.name} INIT is {lut.init_hex}, not {before}")
    return TrojanSpec(f"init-flip:{at.name}:{before}:{after}", (Patch("set_init", at.name, f"{before}:{after}"),))


def ff_toggle(cfg: FabricConfig, at: CellRef) -> TrojanSpec:
    ff = _ff(cfg, at)
    return TrojanSpec(f"ff-toggle:{at.name}", (Patch("set_ff_state", at.name, str(1 - ff.state)),))


def builtin_trojan(cfg: FabricConfig, name: str, seed: int = 0) -> TrojanSpec:
    """Resolve names such as ``trit-tc:6``, ``trit-ts:15``,
    ``init-flip:SLICE_X1Y1.D6LUT:0x00008000:0x00010000``, ``ff-toggle:SLICE_X0Y1.DFF``,
    ``move-route-thru:SLICE_X1Y1.D6LUT:SLICE_X4Y0.D6LUT`` and
    ``add-route-thru:SLICE_X2Y0.A6LUT:src->sink``."""
    kind, _, rest = name.partition(":")
    try:
        if kind == "trit-tc":
            return gen_trit_tc(cfg, int(rest or 6), seed)
        if kind == "trit-ts":
            return gen_trit_ts(cfg, int(rest or 15), seed)
        if kind == "init-flip":
            cell, before, after = rest.rsplit(":", 2)
            return init_flip(cfg, _cell(cfg, cell), before, after)
        if kind == "ff-toggle":
            return ff_toggle(cfg, _cell(cfg, rest))
        if kind == "move-route-thru":
            a, b = _split_cells(rest)
            return move_route_thru(cfg, _cell(cfg, a), _cell(cfg, b))
        if kind == "add-route-thru":
            cell, route = rest.split(":", 1)
            src, sink = _parse_route(route)
            return add_route_thru(cfg, _cell(cfg, cell), src, sink)
    except ValueError as exc:
        if isinstance(exc, PatchError):
            raise
        raise PatchError(f"bad builtin {name!r}: {exc}") from None
    raise PatchError(f"unknown builtin Trojan {name!r}")


def _split_cells(text: str) -> tuple[str, str]:
    # cell names can contain ':'-free parentheses, so split on the element boundary
    m = re.match(r"^(.+?\.[A-Za-z0-9]+):(.+)$", text)
    if not m:
        raise PatchError(f"expected <cell>:<cell>, got {text!r}")
    return m.group(1), m.group(2)


def changed_elements(before: FabricConfig, after: FabricConfig) -> set[str]:
    """Names of LUTs, FFs and switch boxes that differ between two configs with the same layout."""
    out = set()
    old = dict(before.iter_luts()) | dict(before.iter_ffs())
    for ref, e in list(after.iter_luts()) + list(after.iter_ffs()):
        if old.get(ref) != e:
            out.add(ref.name)
    old_sb = {(t.col, t.row): t.switchbox for t in before.tiles}
    for t in after.tiles:
        if old_sb.get((t.col, t.row)) != t.switchbox:
            out.add(sbox_ref(t.col, t.row).name)
    if before.pins != after.pins:
        out.add("pins")
    return out

