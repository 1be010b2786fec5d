"""Line-oriented text format for fabric configs.

Grammar (one statement per line, ``#`` starts a comment, indentation is
cosmetic)::

    family  SeriesK | SeriesP
    name    <free text>
    grid    <cols>x<rows>
    pin     <net> <0|1>
    tile    <col> <row> [capacity=<n>]
    slice   <name>
    lut     <name> arity=<4|6> init=<hex> in=<net,...> out=<net|-> used=<0|1>
    ff      <name> state=<0|1> d=<net> q=<net|-> used=<0|1>
    route   <src>-><sink>

``slice`` attaches to the most recent ``tile``; ``lut``/``ff`` attach to the
most recent ``slice``; ``route`` attaches to the switch box of the most
recent ``tile``.  Elements a slice does not list are filled in as unused.
"""

from __future__ import annotations

import re
from dataclasses import replace

from .fabric import (
    DEFAULT_CAPACITY,
    FFConfig,
    FabricConfig,
    FabricError,
    LUTConfig,
    Slice,
    SwitchBox,
    Tile,
    canonical_family,
    family_arity,
    family_ff_names,
    family_lut_names,
    init_from_hex,
    init_to_hex,
    validate,
)

NET_RE = re.compile(r"^[A-Za-z0-9_.\[\]$:/]+$")


class ConfigSyntaxError(FabricError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class SchemaError(FabricError):
    def __init__(self, message: str, field_name: str, line: int = 0):
        where = f"line {line}: " if line else ""
        super().__init__(f"{where}field {field_name!r}: {message}")
        self.field = field_name
        self.line = line


class InvariantError(FabricError):
    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


def tokenize(text: str):
    """Yield ``(lineno, [(column, token), ...])`` for every non-blank line."""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        toks = [(m.start() + 1, m.group()) for m in re.finditer(r"\S+", line)]
        if toks:
            yield lineno, toks


def split_kv(toks, lineno: int, allowed: tuple[str, ...]) -> dict[str, tuple[int, str]]:
    out: dict[str, tuple[int, str]] = {}
    for col, tok in toks:
        key, sep, value = tok.partition("=")
        if not sep:
            raise ConfigSyntaxError(f"expected key=value, got {tok!r}", lineno, col)
        if key not in allowed:
            raise ConfigSyntaxError(f"unknown key {key!r}", lineno, col)
        if key in out:
            raise ConfigSyntaxError(f"duplicate key {key!r}", lineno, col)
        out[key] = (col, value)
    return out


def check_net(value: str, lineno: int, col: int, allow_none: bool = False):
    if allow_none and value == "-":
        return None
    if not NET_RE.match(value):
        raise ConfigSyntaxError(f"invalid net id {value!r}", lineno, col)
    return value


def _bit(value: str, field_name: str, lineno: int) -> int:
    if value not in ("0", "1"):
        raise SchemaError(f"expected 0 or 1, got {value!r}", field_name, lineno)
    return int(value)


def _int(value: str, field_name: str, lineno: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise SchemaError(f"expected integer, got {value!r}", field_name, lineno) from None


def _require(kv, key: str, lineno: int) -> tuple[int, str]:
    if key not in kv:
        raise SchemaError("missing", key, lineno)
    return kv[key]


class _TileBuilder:
    def __init__(self, col: int, row: int, capacity: int):
        self.col, self.row, self.capacity = col, row, capacity
        self.slices: list[_SliceBuilder] = []
        self.routes: list[tuple[str, str]] = []


class _SliceBuilder:
    def __init__(self, name: str):
        self.name = name
        self.luts: dict[str, LUTConfig] = {}
        self.ffs: dict[str, FFConfig] = {}


def parse_fabric_config(text: str) -> FabricConfig:
    """Parse a fabric-config document; raise on syntax, schema or invariant errors."""
    family = None
    name = "fabric"
    grid = None
    pins: list[tuple[str, int]] = []
    tiles: list[_TileBuilder] = []
    current_slice: _SliceBuilder | None = None

    for lineno, toks in tokenize(text):
        col0, kw = toks[0]
        args = toks[1:]
        if kw == "family":
            if len(args) != 1:
                raise ConfigSyntaxError("family takes one value", lineno, col0)
            try:
                family = canonical_family(args[0][1])
            except FabricError as exc:
                raise SchemaError(str(exc), "family", lineno) from None
        elif kw == "name":
            name = " ".join(t for _, t in args) or "fabric"
        elif kw == "grid":
            if len(args) != 1:
                raise ConfigSyntaxError("grid takes <cols>x<rows>", lineno, col0)
            m = re.match(r"^(\d+)x(\d+)$", args[0][1])
            if not m:
                raise ConfigSyntaxError(f"bad grid {args[0][1]!r}", lineno, args[0][0])
            grid = (int(m.group(1)), int(m.group(2)))
            if grid[0] <= 0 or grid[1] <= 0:
                raise SchemaError("grid dimensions must be positive", "grid", lineno)
        elif kw == "pin":
            if len(args) != 2:
                raise ConfigSyntaxError("pin takes <net> <bit>", lineno, col0)
            net = check_net(args[0][1], lineno, args[0][0])
            pins.append((net, _bit(args[1][1], "pin", lineno)))
        elif kw == "tile":
            if len(args) < 2:
                raise ConfigSyntaxError("tile takes <col> <row>", lineno, col0)
            c = _int(args[0][1], "tile.col", lineno)
            r = _int(args[1][1], "tile.row", lineno)
            kv = split_kv(args[2:], lineno, ("capacity",))
            cap = _int(kv["capacity"][1], "capacity", lineno) if "capacity" in kv else DEFAULT_CAPACITY
            tiles.append(_TileBuilder(c, r, cap))
            current_slice = None
        elif kw == "slice":
            if not tiles:
                raise ConfigSyntaxError("slice outside of a tile", lineno, col0)
            if len(args) != 1:
                raise ConfigSyntaxError("slice takes one name", lineno, col0)
            current_slice = _SliceBuilder(args[0][1])
            tiles[-1].slices.append(current_slice)
        elif kw == "lut":
            if current_slice is None or family is None:
                raise ConfigSyntaxError("lut outside of a slice (or before family)", lineno, col0)
            if not args:
                raise ConfigSyntaxError("lut needs a name", lineno, col0)
            lut = _parse_lut(args, lineno, family)
            if lut.name in current_slice.luts:
                raise SchemaError(f"duplicate LUT {lut.name}", "lut", lineno)
            current_slice.luts[lut.name] = lut
        elif kw == "ff":
            if current_slice is None or family is None:
                raise ConfigSyntaxError("ff outside of a slice (or before family)", lineno, col0)
            if not args:
                raise ConfigSyntaxError("ff needs a name", lineno, col0)
            ff = _parse_ff(args, lineno, family)
            if ff.name in current_slice.ffs:
                raise SchemaError(f"duplicate FF {ff.name}", "ff", lineno)
            current_slice.ffs[ff.name] = ff
        elif kw == "route":
            if not tiles:
                raise ConfigSyntaxError("route outside of a tile", lineno, col0)
            if len(args) != 1 or "->" not in args[0][1]:
                raise ConfigSyntaxError("route takes <src>-><sink>", lineno, col0)
            c, tok = args[0]
            src, _, sink = tok.partition("->")
            tiles[-1].routes.append((check_net(src, lineno, c), check_net(sink, lineno, c + len(src) + 2)))
        else:
            raise ConfigSyntaxError(f"unknown keyword {kw!r}", lineno, col0)

    if family is None:
        raise SchemaError("missing", "family")
    if grid is None:
        raise SchemaError("missing", "grid")

    built = []
    for tb in tiles:
        slices = tuple(_finish_slice(sb, family) for sb in tb.slices)
        if len(set(tb.routes)) != len(tb.routes):
            dup = next(r for r in tb.routes if tb.routes.count(r) > 1)
            raise InvariantError([f"switchbox ({tb.col},{tb.row}): duplicate route {dup[0]}->{dup[1]}"])
        built.append(Tile(tb.col, tb.row, slices, SwitchBox(frozenset(tb.routes), tb.capacity)))
    cfg = FabricConfig(family, grid[0], grid[1], tuple(built), tuple(pins), name)
    problems = validate(cfg)
    if problems:
        raise InvariantError(problems)
    return cfg


def _parse_lut(args, lineno: int, family: str) -> LUTConfig:
    name = args[0][1]
    if name not in family_lut_names(family):
        raise SchemaError(f"{name!r} is not a {family} LUT", "lut", lineno)
    kv = split_kv(args[1:], lineno, ("arity", "init", "in", "out", "used"))
    arity = _int(_require(kv, "arity", lineno)[1], "arity", lineno)
    if arity != family_arity(family):
        raise SchemaError(f"{family} LUTs have arity {family_arity(family)}, got {arity}", "arity", lineno)
    try:
        init = init_from_hex(kv["init"][1], arity) if "init" in kv else (0,) * (1 << arity)
    except FabricError as exc:
        raise SchemaError(str(exc), "init", lineno) from None
    if "in" in kv:
        c, raw = kv["in"]
        nets = tuple(check_net(n, lineno, c) for n in raw.split(","))
        if len(nets) > arity:
            raise SchemaError(f"{len(nets)} inputs for arity {arity}", "in", lineno)
        nets = nets + ("0",) * (arity - len(nets))
    else:
        nets = ("0",) * arity
    out = None
    if "out" in kv:
        out = check_net(kv["out"][1], lineno, kv["out"][0], allow_none=True)
    used = bool(_bit(kv["used"][1], "used", lineno)) if "used" in kv else False
    return LUTConfig(name, arity, init, nets, out, used)


def _parse_ff(args, lineno: int, family: str) -> FFConfig:
    name = args[0][1]
    if name not in family_ff_names(family):
        raise SchemaError(f"{name!r} is not a {family} FF", "ff", lineno)
    kv = split_kv(args[1:], lineno, ("state", "d", "q", "used"))
    state = _bit(kv["state"][1], "state", lineno) if "state" in kv else 0
    d = check_net(kv["d"][1], lineno, kv["d"][0]) if "d" in kv else "0"
    q = check_net(kv["q"][1], lineno, kv["q"][0], allow_none=True) if "q" in kv else None
    used = bool(_bit(kv["used"][1], "used", lineno)) if "used" in kv else False
    return FFConfig(name, state, d, q, used)


def _finish_slice(sb: _SliceBuilder, family: str) -> Slice:
    arity = family_arity(family)
    luts = tuple(sb.luts.get(n) or LUTConfig.unused(n, arity) for n in family_lut_names(family))
    ffs = tuple(sb.ffs.get(n) or FFConfig.unused(n) for n in family_ff_names(family))
    return Slice(sb.name, luts, ffs)


def serialize_fabric_config(cfg: FabricConfig) -> str:
    lines = [
        f"family {cfg.family}",
        f"name {cfg.name}",
        f"grid {cfg.grid_cols}x{cfg.grid_rows}",
    ]
    lines += [f"pin {net} {bit}" for net, bit in cfg.pins]
    for tile in cfg.tiles:
        lines.append(f"tile {tile.col} {tile.row} capacity={tile.switchbox.capacity}")
        for sl in tile.slices:
            lines.append(f"  slice {sl.name}")
            for lut in sl.luts:
                lines.append(
                    f"    lut {lut.name} arity={lut.arity} init={init_to_hex(lut.init)} "
                    f"in={','.join(lut.input_nets)} out={lut.output_net or '-'} used={int(lut.used)}"
                )
            for ff in sl.ffs:
                lines.append(
                    f"    ff {ff.name} state={ff.state} d={ff.d_net} q={ff.q_net or '-'} used={int(ff.used)}"
                )
        for src, sink in tile.switchbox.sorted_routes():
            lines.append(f"  route {src}->{sink}")
    return "\n".join(lines) + "\n"


def load_fabric_config(path) -> FabricConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_fabric_config(fh.read())


def save_fabric_config(cfg: FabricConfig, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_fabric_config(cfg))


def with_routes(tile: Tile, routes) -> Tile:
    return replace(tile, switchbox=replace(tile.switchbox, routes=frozenset(routes)))
