"""Physical placement of every device of a fabric config.

Coordinates are in micrometres, ``x`` grows with tile column and ``y`` with
tile row (image rows run downward).  All geometry is expressed in fractions
of the tile pitch so the layout scales with it.

Device indices inside one cell:

* LUT: ``0 .. 2**arity - 1`` are configuration cells (one per INIT bit);
  then two pass transistors per internal 2:1 mux, level 0 first, so the
  mux ``m`` (global index) branch ``b`` is device ``2**arity + 2*m + b``.
* FF: ``0`` is the storage core, ``1`` the output buffer.
* SBOX: slot ``s`` owns ``2*s`` (pass transistor) and ``2*s + 1`` (buffer).
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

from .fabric import (
    SERIES_K,
    CellRef,
    FabricConfig,
    family_arity,
    family_ff_names,
    family_lut_names,
    sbox_ref,
)

INSET = 0.02
SBOX_X0 = 0.8
SLICE_W = 0.4
LUT_W = 0.28

Rect = tuple[float, float, float, float]


@dataclass
class FloorPlan:
    tile_pitch_um: float
    origin: tuple[float, float]
    grid: tuple[int, int]
    rects: dict = field(default_factory=dict)          # CellRef -> Rect
    kinds: dict = field(default_factory=dict)          # CellRef -> "lut" | "ff" | "sbox"
    devices: dict = field(default_factory=dict)        # (CellRef, idx) -> (x, y)
    route_slots: dict = field(default_factory=dict)    # (CellRef, (src, sink)) -> slot
    _by_tile: dict = field(default_factory=dict, repr=False)

    def __eq__(self, other):
        if not isinstance(other, FloorPlan):
            return NotImplemented
        return (self.tile_pitch_um, self.origin, self.grid, self.rects, self.kinds,
                self.devices, self.route_slots) == (
                other.tile_pitch_um, other.origin, other.grid, other.rects, other.kinds,
                other.devices, other.route_slots)

    def position(self, ref: CellRef, index: int) -> tuple[float, float]:
        return self.devices[(ref, index)]

    def route_devices(self, ref: CellRef, route: tuple[str, str]) -> tuple[int, int]:
        slot = self.route_slots[(ref, route)]
        return 2 * slot, 2 * slot + 1

    def extent(self) -> Rect:
        x0, y0 = self.origin
        p = self.tile_pitch_um
        return x0, y0, x0 + self.grid[0] * p, y0 + self.grid[1] * p

    def cells_in_tile(self, col: int, row: int):
        return self._by_tile.get((col, row), [])


def _inset(rect: Rect, margin: float) -> Rect:
    x0, y0, x1, y1 = rect
    return x0 + margin, y0 + margin, x1 - margin, y1 - margin


def lut_device_offsets(rect: Rect, arity: int) -> list[tuple[float, float]]:
    x0, y0, x1, y1 = rect
    w, h = x1 - x0, y1 - y0
    side = 1 << (arity // 2)
    n_cells = 1 << arity
    out = []
    for b in range(n_cells):
        c, r = b % side, b // side
        out.append((x0 + (c + 0.5) / side * 0.45 * w, y0 + (r + 0.5) / (n_cells // side) * h))
    for level in range(arity):
        n_dev = 2 << (arity - 1 - level)
        x = x0 + 0.5 * w + (level + 0.5) / arity * 0.5 * w
        for t in range(n_dev):
            out.append((x, y0 + (t + 0.5) / n_dev * h))
    return out


def ff_device_offsets(rect: Rect) -> list[tuple[float, float]]:
    x0, y0, x1, y1 = rect
    cx = 0.5 * (x0 + x1)
    h = y1 - y0
    return [(cx, y0 + 0.35 * h), (cx, y0 + 0.75 * h)]


def sbox_device_offsets(rect: Rect, capacity: int) -> list[tuple[float, float]]:
    x0, y0, x1, y1 = rect
    cols = 4
    rows = max(1, math.ceil(capacity / cols))
    sw, sh = (x1 - x0) / cols, (y1 - y0) / rows
    out = []
    for s in range(capacity):
        c, r = s % cols, s // cols
        cy = y0 + (r + 0.5) * sh
        out.append((x0 + (c + 0.3) * sw, cy))
        out.append((x0 + (c + 0.7) * sw, cy))
    return out


def assign_route_slots(routes, capacity: int) -> dict[tuple[str, str], int]:
    """Hash each route's sink to a slot with linear probing.

    Adding or removing one route leaves the others where they were unless
    they collide with it.
    """
    slots: dict[tuple[str, str], int] = {}
    taken: set[int] = set()
    for src, sink in sorted(routes, key=lambda r: (r[1], r[0])):
        s = zlib.crc32(sink.encode()) % capacity
        while s in taken:
            s = (s + 1) % capacity
        taken.add(s)
        slots[(src, sink)] = s
    return slots


def cell_rects(family: str, col: int, row: int, pitch: float, origin=(0.0, 0.0),
               slice_names=()) -> list[tuple[str, str, str, Rect]]:
    """``(slice, element, kind, rect)`` for every cell of one tile."""
    ox = origin[0] + col * pitch
    oy = origin[1] + row * pitch
    m = INSET * pitch
    out = []
    if family == SERIES_K:
        luts, ffs = family_lut_names(family), family_ff_names(family)
        for k, sname in enumerate(slice_names):
            sx = ox + k * SLICE_W * pitch
            for j, lname in enumerate(luts):
                ry = oy + j * 0.25 * pitch
                out.append((sname, lname, "lut", _inset((sx, ry, sx + LUT_W * pitch, ry + 0.25 * pitch), m)))
                for h in range(2):
                    fname = ffs[2 * j + h]
                    fy = ry + h * 0.125 * pitch
                    rect = (sx + LUT_W * pitch, fy, sx + SLICE_W * pitch, fy + 0.125 * pitch)
                    out.append((sname, fname, "ff", _inset(rect, m)))
    else:
        luts, ffs = family_lut_names(family), family_ff_names(family)
        for sname in slice_names[:1]:
            for i in range(len(luts)):
                cx = ox + (i // 6) * SLICE_W * pitch
                cy = oy + (i % 6) / 6 * pitch
                out.append((sname, luts[i], "lut", _inset((cx, cy, cx + LUT_W * pitch, cy + pitch / 6), m)))
                out.append((sname, ffs[i], "ff",
                            _inset((cx + LUT_W * pitch, cy, cx + SLICE_W * pitch, cy + pitch / 6), m)))
    out.append(("", "SBOX", "sbox", _inset((ox + SBOX_X0 * pitch, oy, ox + pitch, oy + pitch), m)))
    return out


def build_floorplan(cfg: FabricConfig, tile_pitch_um: float = 25.0,
                    origin: tuple[float, float] = (0.0, 0.0)) -> FloorPlan:
    if not tile_pitch_um > 0:
        raise ValueError(f"tile pitch must be positive, got {tile_pitch_um}")
    fp = FloorPlan(float(tile_pitch_um), (float(origin[0]), float(origin[1])), (cfg.grid_cols, cfg.grid_rows))
    arity = family_arity(cfg.family)
    for tile in cfg.tiles:
        names = [sl.name for sl in tile.slices]
        tile_cells = []
        for sname, element, kind, rect in cell_rects(cfg.family, tile.col, tile.row, fp.tile_pitch_um,
                                                     fp.origin, names):
            ref = CellRef((tile.col, tile.row), sname, element) if sname else sbox_ref(tile.col, tile.row)
            fp.rects[ref] = rect
            fp.kinds[ref] = kind
            tile_cells.append(ref)
            if kind == "lut":
                offsets = lut_device_offsets(rect, arity)
            elif kind == "ff":
                offsets = ff_device_offsets(rect)
            else:
                offsets = sbox_device_offsets(rect, tile.switchbox.capacity)
                for route, slot in assign_route_slots(tile.switchbox.routes, tile.switchbox.capacity).items():
                    fp.route_slots[(ref, route)] = slot
            for i, pos in enumerate(offsets):
                fp.devices[(ref, i)] = pos
        fp._by_tile[(tile.col, tile.row)] = tile_cells
    return fp


def floorplan_lookup(fp: FloorPlan, point: tuple[float, float]):
    """The cell whose rectangle contains ``point`` or ``None``."""
    x, y = point
    p = fp.tile_pitch_um
    col = math.floor((x - fp.origin[0]) / p)
    row = math.floor((y - fp.origin[1]) / p)
    for ref in fp.cells_in_tile(col, row):
        x0, y0, x1, y1 = fp.rects[ref]
        if x0 <= x < x1 and y0 <= y < y1:
            return ref
    return None


def cells_overlapping(fp: FloorPlan, rect: Rect) -> list[CellRef]:
    """Cells whose rectangles intersect ``rect`` (half-open), in a stable order."""
    qx0, qy0, qx1, qy1 = rect
    p = fp.tile_pitch_um
    c0 = math.floor((qx0 - fp.origin[0]) / p)
    c1 = math.floor((qx1 - fp.origin[0]) / p)
    r0 = math.floor((qy0 - fp.origin[1]) / p)
    r1 = math.floor((qy1 - fp.origin[1]) / p)
    hits = []
    for row in range(r0, r1 + 1):
        for col in range(c0, c1 + 1):
            for ref in fp.cells_in_tile(col, row):
                x0, y0, x1, y1 = fp.rects[ref]
                if x0 < qx1 and qx0 < x1 and y0 < qy1 and qy0 < y1:
                    hits.append(ref)
    return hits
