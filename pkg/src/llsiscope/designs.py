"""Demo designs mirroring the bench experiments.

``route-thru``      one route-thru LUT in SLICE_X1Y1 between an FF in SLICE_X1Y1
                    and an FF in SLICE_X0Y1; pair partner moves it to SLICE_X4Y0.
``ff-toggle-pair``  two FFs in SLICE_X0Y1 feeding a LUT in SLICE_X1Y1 through the
                    switch box; pair partner flips DFF.
``lut-init-pair``   a 5-input LUT in SLICE_X1Y1 with INIT 0x00008000; pair partner
                    changes it to 0x00010000.
``benchmark-host``  a small seeded random circuit with routed connections, used as
                    the carrier for the TRIT-style generators.
"""

from __future__ import annotations

import random
from dataclasses import replace

from .fabric import (
    SERIES_K,
    FFConfig,
    FabricConfig,
    FabricError,
    LUTConfig,
    empty_fabric,
    family_arity,
    family_lut_names,
    init_from_hex,
    parse_cellref,
)
from .trojan import GateDef, _edit_routes, _replace_element, apply_patch, builtin_trojan, identity_init

DEMOS = ("route-thru", "ff-toggle-pair", "lut-init-pair", "benchmark-host")

PAIR_TROJANS = {
    "route-thru": "move-route-thru:SLICE_X1Y1.D6LUT:SLICE_X4Y0.D6LUT",
    "ff-toggle-pair": "ff-toggle:SLICE_X0Y1.DFF",
    "lut-init-pair": "init-flip:SLICE_X1Y1.D6LUT:0x00008000:0x00010000",
}


def _set_lut(cfg, name, init, inputs, output):
    ref = parse_cellref(name, cfg)
    lut = cfg.element(ref)
    inputs = tuple(inputs) + ("0",) * (lut.arity - len(inputs))
    return _replace_element(cfg, ref, LUTConfig(lut.name, lut.arity, tuple(init), inputs, output, True))


def _set_ff(cfg, name, state, d, q):
    ref = parse_cellref(name, cfg)
    return _replace_element(cfg, ref, FFConfig(ref.element, state, d, q, True))


def _route(cfg, col, row, src, sink):
    return _edit_routes(cfg, (col, row), add=[(src, sink)])


def _need_series_k(family: str, cols: int, rows: int, demo: str, min_cols=3, min_rows=2):
    if family != SERIES_K:
        raise FabricError(f"demo {demo!r} is laid out for SeriesK slices")
    if cols < min_cols or rows < min_rows:
        raise FabricError(f"demo {demo!r} needs at least a {min_cols}x{min_rows} grid")


def route_thru(cols: int = 6, rows: int = 4, family: str = SERIES_K) -> FabricConfig:
    _need_series_k(family, cols, rows, "route-thru")
    cfg = empty_fabric(family, cols, rows, "route-thru")
    cfg = _set_ff(cfg, "SLICE_X1Y1.AFF", 1, "0", "src_q")
    cfg = _set_lut(cfg, "SLICE_X1Y1.D6LUT", identity_init(6), ["rt_in"], "rt_out")
    cfg = _set_ff(cfg, "SLICE_X0Y1.AFF", 0, "dst_d", "dst_q")
    cfg = _route(cfg, 0, 1, "src_q", "rt_in")
    cfg = _route(cfg, 0, 1, "rt_out", "dst_d")
    return cfg


def ff_toggle_pair(cols: int = 6, rows: int = 4, family: str = SERIES_K) -> FabricConfig:
    _need_series_k(family, cols, rows, "ff-toggle-pair", min_cols=1)
    cfg = empty_fabric(family, cols, rows, "ff-toggle-pair")
    cfg = replace(cfg, pins=(("en", 1),))
    cfg = _set_ff(cfg, "SLICE_X0Y1.AFF", 1, "lut_o", "a_q")
    cfg = _set_ff(cfg, "SLICE_X0Y1.DFF", 0, "lut_o", "d_q")
    # 2-input AND of the FFs, gated by en: out = a & d & en
    and3 = GateDef("AND", ("a", "d", "e"), "o").init(6)
    cfg = _set_lut(cfg, "SLICE_X1Y1.D6LUT", and3, ["a_in", "d_in", "en"], "lut_o")
    cfg = _route(cfg, 0, 1, "a_q", "a_in")
    cfg = _route(cfg, 0, 1, "d_q", "d_in")
    return cfg


def lut_init_pair(cols: int = 6, rows: int = 4, family: str = SERIES_K) -> FabricConfig:
    _need_series_k(family, cols, rows, "lut-init-pair", min_cols=1)
    cfg = empty_fabric(family, cols, rows, "lut-init-pair")
    cfg = replace(cfg, pins=tuple((f"i{k}", 0) for k in range(5)))
    cfg = _set_lut(cfg, "SLICE_X1Y1.D6LUT", init_from_hex("0x00008000", 6),
                   [f"i{k}" for k in range(5)], "lut_o")
    cfg = _set_ff(cfg, "SLICE_X1Y1.DFF", 0, "lut_o", "lut_q")
    return cfg


def benchmark_host(cols: int = 6, rows: int = 4, family: str = SERIES_K, seed: int = 0,
                   n_luts: int = 10, n_pins: int = 6) -> FabricConfig:
    """Seeded random combinational circuit with registered outputs.

    Logic sits in the left columns and each LUT reads its inputs through the
    switch box of its tile, so generators have routed connections to splice.
    """
    rnd = random.Random(seed)
    arity = family_arity(family)
    cfg = empty_fabric(family, cols, rows, "benchmark-host")
    pins = tuple((f"p{k}", rnd.randint(0, 1)) for k in range(n_pins))
    cfg = replace(cfg, pins=pins)
    lut_names = family_lut_names(family)
    slots = [(t.col, t.row, sl.name, ln) for t in cfg.tiles if t.col < max(1, cols // 2)
             for sl in t.slices for ln in lut_names]
    if len(slots) < n_luts:
        raise FabricError("grid too small for the requested benchmark host")
    chosen = sorted(rnd.sample(range(len(slots)), n_luts))
    available = [n for n, _ in pins]
    routes_per_tile: dict = {}
    for j, idx in enumerate(chosen):
        col, row, sname, lname = slots[idx]
        k = rnd.randint(2, min(arity, 4))
        srcs = rnd.sample(available, min(k, len(available)))
        ins = []
        for i, s in enumerate(srcs):
            wire = f"h{j}_in{i}"
            routes_per_tile.setdefault((col, row), []).append((s, wire))
            ins.append(wire)
        init = tuple(rnd.randint(0, 1) for _ in range(1 << arity))
        cfg = _set_lut(cfg, f"{sname}.{lname}", init, ins, f"h{j}")
        available.append(f"h{j}")
    for (col, row), routes in routes_per_tile.items():
        cfg = _edit_routes(cfg, (col, row), add=routes)
    # register the last two LUT outputs
    regs = [(ref, ff) for ref, ff in cfg.iter_ffs() if ref.tile[0] < max(1, cols // 2)][:2]
    for i, (ref, ff) in enumerate(regs):
        cfg = _replace_element(cfg, ref, FFConfig(ff.name, 0, available[-1 - i], f"r{i}", True))
    return cfg


def build_demo(name: str, cols: int = 6, rows: int = 4, family: str = SERIES_K, seed: int = 0) -> FabricConfig:
    if name == "route-thru":
        return route_thru(cols, rows, family)
    if name == "ff-toggle-pair":
        return ff_toggle_pair(cols, rows, family)
    if name == "lut-init-pair":
        return lut_init_pair(cols, rows, family)
    if name == "benchmark-host":
        return benchmark_host(cols, rows, family, seed)
    raise FabricError(f"unknown demo {name!r}; choose from {', '.join(DEMOS)}")


def demo_partner(name: str, cfg: FabricConfig):
    """The paired suspect config for ``*-pair`` and ``route-thru`` demos, else ``None``."""
    spec = PAIR_TROJANS.get(name)
    if spec is None:
        return None
    return apply_patch(cfg, builtin_trojan(cfg, spec))
