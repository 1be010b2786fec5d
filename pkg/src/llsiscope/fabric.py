"""Synthetic FPGA logic-fabric model.

Two device families are modelled:

* ``SeriesK``: tiles hold up to two slices; a slice has four 6-input LUTs
  (``A6LUT`` .. ``D6LUT``) and eight FFs (``AFF``, ``A5FF``, .. ``D5FF``).
* ``SeriesP``: tiles hold one logic cluster ``LC(c,r)`` of twelve logic
  elements, each a 4-input LUT (``LE<i>LUT``) plus one FF (``LE<i>FF``).

Configs are immutable dataclasses.  Invalid configs can be constructed on
purpose; :func:`validate` reports what is wrong with them.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Optional

CONST_NETS = ("0", "1")

SERIES_K = "SeriesK"
SERIES_P = "SeriesP"
FAMILIES = (SERIES_K, SERIES_P)

K_LUT_NAMES = ("A6LUT", "B6LUT", "C6LUT", "D6LUT")
K_FF_NAMES = ("AFF", "A5FF", "BFF", "B5FF", "CFF", "C5FF", "DFF", "D5FF")
P_ELEMENTS = 12

DEFAULT_CAPACITY = 32
DEFAULT_TILE_PITCH_UM = 25.0

_SLICE_NAME_RE = {
    SERIES_K: re.compile(r"^SLICE_X(\d+)Y(\d+)$"),
    SERIES_P: re.compile(r"^LC\((\d+),(\d+)\)$"),
}


class FabricError(ValueError):
    """Raised for unparseable or structurally invalid fabric configs."""


def family_lut_names(family: str) -> tuple[str, ...]:
    if family == SERIES_K:
        return K_LUT_NAMES
    return tuple(f"LE{i}LUT" for i in range(P_ELEMENTS))


def family_ff_names(family: str) -> tuple[str, ...]:
    if family == SERIES_K:
        return K_FF_NAMES
    return tuple(f"LE{i}FF" for i in range(P_ELEMENTS))


def family_arity(family: str) -> int:
    return 6 if family == SERIES_K else 4


def family_max_slices(family: str) -> int:
    return 2 if family == SERIES_K else 1


def slice_name(family: str, col: int, row: int, index: int = 0) -> str:
    if family == SERIES_K:
        return f"SLICE_X{2 * col + index}Y{row}"
    return f"LC({col},{row})"


def canonical_family(text: str) -> str:
    for fam in FAMILIES:
        if text.lower() == fam.lower():
            return fam
    raise FabricError(f"unknown family {text!r}")


# -- INIT helpers -----------------------------------------------------------


def init_from_int(value: int, arity: int) -> tuple[int, ...]:
    """Bit ``i`` of the returned tuple is bit ``i`` of ``value``."""
    n = 1 << arity
    if value < 0 or value >> n:
        raise FabricError(f"INIT value 0x{value:x} does not fit {n} bits")
    return tuple((value >> i) & 1 for i in range(n))


def init_from_hex(text: str, arity: int) -> tuple[int, ...]:
    t = text.lower()
    if t.startswith("0x"):
        t = t[2:]
    if not t or any(ch not in "0123456789abcdef_" for ch in t):
        raise FabricError(f"malformed INIT hex {text!r}")
    return init_from_int(int(t.replace("_", ""), 16), arity)


def init_to_int(bits) -> int:
    return sum(int(b) << i for i, b in enumerate(bits))


def init_to_hex(bits) -> str:
    width = max(1, (len(bits) + 3) // 4)
    return f"0x{init_to_int(bits):0{width}x}"


# -- data model -------------------------------------------------------------


@dataclass(frozen=True)
class CellRef:
    tile: tuple[int, int]
    slice: str
    element: str

    @property
    def name(self) -> str:
        if self.slice:
            return f"{self.slice}.{self.element}"
        return f"TILE_X{self.tile[0]}Y{self.tile[1]}.{self.element}"

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class LUTConfig:
    name: str
    arity: int
    init: tuple[int, ...]
    input_nets: tuple[str, ...]
    output_net: Optional[str] = None
    used: bool = False

    @classmethod
    def unused(cls, name: str, arity: int) -> "LUTConfig":
        return cls(name, arity, (0,) * (1 << arity), ("0",) * arity, None, False)

    @property
    def init_hex(self) -> str:
        return init_to_hex(self.init)


@dataclass(frozen=True)
class FFConfig:
    name: str
    state: int = 0
    d_net: str = "0"
    q_net: Optional[str] = None
    used: bool = False

    @classmethod
    def unused(cls, name: str) -> "FFConfig":
        return cls(name)


@dataclass(frozen=True)
class Slice:
    name: str
    luts: tuple[LUTConfig, ...]
    ffs: tuple[FFConfig, ...]

    def lut(self, name: str) -> LUTConfig:
        for lut in self.luts:
            if lut.name == name:
                return lut
        raise KeyError(name)

    def ff(self, name: str) -> FFConfig:
        for ff in self.ffs:
            if ff.name == name:
                return ff
        raise KeyError(name)


@dataclass(frozen=True)
class SwitchBox:
    routes: frozenset = frozenset()
    capacity: int = DEFAULT_CAPACITY

    def sorted_routes(self) -> list[tuple[str, str]]:
        return sorted(self.routes)


@dataclass(frozen=True)
class Tile:
    col: int
    row: int
    slices: tuple[Slice, ...]
    switchbox: SwitchBox = field(default_factory=SwitchBox)


@dataclass(frozen=True)
class FabricConfig:
    family: str
    grid_cols: int
    grid_rows: int
    tiles: tuple[Tile, ...]
    pins: tuple[tuple[str, int], ...] = ()
    name: str = "fabric"

    def tile_at(self, col: int, row: int) -> Tile:
        for tile in self.tiles:
            if (tile.col, tile.row) == (col, row):
                return tile
        raise KeyError((col, row))

    def iter_slices(self) -> Iterator[tuple[Tile, Slice]]:
        for tile in self.tiles:
            for sl in tile.slices:
                yield tile, sl

    def iter_luts(self) -> Iterator[tuple[CellRef, LUTConfig]]:
        for tile, sl in self.iter_slices():
            for lut in sl.luts:
                yield CellRef((tile.col, tile.row), sl.name, lut.name), lut

    def iter_ffs(self) -> Iterator[tuple[CellRef, FFConfig]]:
        for tile, sl in self.iter_slices():
            for ff in sl.ffs:
                yield CellRef((tile.col, tile.row), sl.name, ff.name), ff

    def iter_routes(self) -> Iterator[tuple[CellRef, tuple[str, str]]]:
        for tile in self.tiles:
            ref = sbox_ref(tile.col, tile.row)
            for route in tile.switchbox.sorted_routes():
                yield ref, route

    def find_slice(self, name: str) -> tuple[Tile, Slice]:
        for tile, sl in self.iter_slices():
            if sl.name == name:
                return tile, sl
        raise KeyError(name)

    def cell(self, slice_name_: str, element: str) -> CellRef:
        tile, sl = self.find_slice(slice_name_)
        names = {e.name for e in sl.luts} | {e.name for e in sl.ffs}
        if element not in names:
            raise KeyError(f"{slice_name_}.{element}")
        return CellRef((tile.col, tile.row), sl.name, element)

    def element(self, ref: CellRef):
        tile = self.tile_at(*ref.tile)
        if ref.element == "SBOX":
            return tile.switchbox
        for sl in tile.slices:
            if sl.name == ref.slice:
                for e in sl.luts + sl.ffs:
                    if e.name == ref.element:
                        return e
        raise KeyError(ref.name)

    def pin_values(self) -> dict[str, int]:
        return dict(self.pins)


def sbox_ref(col: int, row: int) -> CellRef:
    return CellRef((col, row), "", "SBOX")


def parse_cellref(text: str, cfg: FabricConfig) -> CellRef:
    """Resolve ``SLICE_X1Y1.D6LUT`` or ``TILE_X2Y0.SBOX`` against ``cfg``."""
    head, sep, element = text.rpartition(".")
    if not sep:
        raise FabricError(f"cell reference {text!r} needs the form <slice>.<element>")
    if element == "SBOX":
        m = re.match(r"^TILE_X(\d+)Y(\d+)$", head)
        if not m:
            raise FabricError(f"bad switch-box reference {text!r}")
        col, row = int(m.group(1)), int(m.group(2))
        try:
            cfg.tile_at(col, row)
        except KeyError:
            raise FabricError(f"unknown cell {text!r}") from None
        return sbox_ref(col, row)
    try:
        return cfg.cell(head, element)
    except KeyError:
        raise FabricError(f"unknown cell {text!r}") from None


def empty_slice(family: str, name: str) -> Slice:
    arity = family_arity(family)
    return Slice(
        name,
        tuple(LUTConfig.unused(n, arity) for n in family_lut_names(family)),
        tuple(FFConfig.unused(n) for n in family_ff_names(family)),
    )


def empty_fabric(family: str, cols: int, rows: int, name: str = "fabric",
                 capacity: int = DEFAULT_CAPACITY) -> FabricConfig:
    """All elements unused; SeriesK tiles get two slices, SeriesP one cluster."""
    family = canonical_family(family)
    if cols <= 0 or rows <= 0:
        raise FabricError(f"grid must be positive, got {cols}x{rows}")
    tiles = []
    for row in range(rows):
        for col in range(cols):
            slices = tuple(
                empty_slice(family, slice_name(family, col, row, k))
                for k in range(family_max_slices(family))
            )
            tiles.append(Tile(col, row, slices, SwitchBox(frozenset(), capacity)))
    return FabricConfig(family, cols, rows, tuple(tiles), (), name)


# -- validation -------------------------------------------------------------


def driver_map(cfg: FabricConfig) -> dict[str, list[str]]:
    """Every net mapped to the list of things that drive it."""
    drivers: dict[str, list[str]] = {c: ["const"] for c in CONST_NETS}
    for net, _ in cfg.pins:
        drivers.setdefault(net, []).append(f"pin {net}")
    for ref, lut in cfg.iter_luts():
        if lut.used and lut.output_net is not None:
            drivers.setdefault(lut.output_net, []).append(ref.name)
    for ref, ff in cfg.iter_ffs():
        if ff.used and ff.q_net is not None:
            drivers.setdefault(ff.q_net, []).append(ref.name)
    for ref, (_, sink) in cfg.iter_routes():
        # a duplicate sink inside one switch box is reported by the switch-box check
        who = drivers.setdefault(sink, [])
        if ref.name not in who:
            who.append(ref.name)
    return drivers


def validate(cfg: FabricConfig) -> list[str]:
    """Return a list of human-readable violations; empty means valid."""
    out: list[str] = []
    if cfg.family not in FAMILIES:
        return [f"family: unknown family {cfg.family!r}"]
    if cfg.grid_cols <= 0 or cfg.grid_rows <= 0:
        out.append(f"grid: non-positive size {cfg.grid_cols}x{cfg.grid_rows}")

    arity = family_arity(cfg.family)
    lut_names = family_lut_names(cfg.family)
    ff_names = family_ff_names(cfg.family)
    name_re = _SLICE_NAME_RE[cfg.family]

    seen_tiles: set[tuple[int, int]] = set()
    seen_slices: set[str] = set()
    for tile in cfg.tiles:
        coord = (tile.col, tile.row)
        if coord in seen_tiles:
            out.append(f"tile ({tile.col},{tile.row}): duplicate coordinates")
        seen_tiles.add(coord)
        if not (0 <= tile.col < cfg.grid_cols and 0 <= tile.row < cfg.grid_rows):
            out.append(f"tile ({tile.col},{tile.row}): outside {cfg.grid_cols}x{cfg.grid_rows} grid")
        if len(tile.slices) > family_max_slices(cfg.family):
            out.append(f"tile ({tile.col},{tile.row}): {len(tile.slices)} slices exceed "
                       f"{family_max_slices(cfg.family)} per tile")
        for sl in tile.slices:
            if sl.name in seen_slices:
                out.append(f"slice {sl.name}: duplicate name")
            seen_slices.add(sl.name)
            if not name_re.match(sl.name):
                out.append(f"slice {sl.name}: name does not follow {cfg.family} convention")
            elif cfg.family == SERIES_P and sl.name != slice_name(SERIES_P, tile.col, tile.row):
                out.append(f"slice {sl.name}: cluster name does not match tile ({tile.col},{tile.row})")
            if tuple(lut.name for lut in sl.luts) != lut_names:
                out.append(f"slice {sl.name}: expected LUTs {','.join(lut_names)}")
            if tuple(ff.name for ff in sl.ffs) != ff_names:
                out.append(f"slice {sl.name}: expected FFs {','.join(ff_names)}")
            for lut in sl.luts:
                where = f"lut {sl.name}.{lut.name}"
                if lut.arity != arity:
                    out.append(f"{where}: arity {lut.arity} but family requires {arity}")
                if len(lut.init) != 1 << lut.arity:
                    out.append(f"{where}: init length {len(lut.init)} != {1 << lut.arity}")
                if any(b not in (0, 1) for b in lut.init):
                    out.append(f"{where}: init contains non-bit values")
                if len(lut.input_nets) != lut.arity:
                    out.append(f"{where}: {len(lut.input_nets)} inputs for arity {lut.arity}")
                if lut.used and lut.output_net is None:
                    out.append(f"{where}: used LUT has no output net")
            for ff in sl.ffs:
                where = f"ff {sl.name}.{ff.name}"
                if ff.state not in (0, 1):
                    out.append(f"{where}: state {ff.state!r} is not a bit")
                if ff.used and ff.q_net is None:
                    out.append(f"{where}: used FF has no q net")
        sb = tile.switchbox
        if len(sb.routes) > sb.capacity:
            out.append(f"switchbox ({tile.col},{tile.row}): {len(sb.routes)} routes exceed capacity {sb.capacity}")
        sinks: dict[str, int] = {}
        for _, sink in sb.routes:
            sinks[sink] = sinks.get(sink, 0) + 1
        for sink in sorted(s for s, n in sinks.items() if n > 1):
            out.append(f"switchbox ({tile.col},{tile.row}): sink net {sink} appears {sinks[sink]} times")

    for net, value in cfg.pins:
        if value not in (0, 1):
            out.append(f"pin {net}: value {value!r} is not a bit")
        if net in CONST_NETS:
            out.append(f"pin {net}: constant nets cannot be pins")

    drivers = driver_map(cfg)
    for net in sorted(drivers):
        if len(drivers[net]) > 1:
            out.append(f"net {net}: multiply driven by {', '.join(drivers[net])}")

    for net, who in _referenced_nets(cfg):
        if net not in drivers:
            out.append(f"net {net}: undriven, referenced by {who}")
    return out


def _referenced_nets(cfg: FabricConfig) -> list[tuple[str, str]]:
    refs = []
    for ref, lut in cfg.iter_luts():
        if lut.used:
            refs.extend((n, ref.name) for n in lut.input_nets)
    for ref, ff in cfg.iter_ffs():
        if ff.used:
            refs.append((ff.d_net, ref.name))
    for ref, (src, _) in cfg.iter_routes():
        refs.append((src, ref.name))
    seen = set()
    unique = []
    for item in refs:
        if item not in seen:
            seen.add(item)
            unique.append(item)
    return unique


def check(cfg: FabricConfig) -> FabricConfig:
    """Raise :class:`FabricError` with the first violations if ``cfg`` is invalid."""
    problems = validate(cfg)
    if problems:
        raise FabricError("; ".join(problems[:5]))
    return cfg
