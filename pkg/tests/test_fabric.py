from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_fabric
from llsiscope.configfile import (
    ConfigSyntaxError,
    InvariantError,
    SchemaError,
    parse_fabric_config,
    serialize_fabric_config,
)
from llsiscope.fabric import (
    SERIES_K,
    SERIES_P,
    CellRef,
    FabricError,
    FFConfig,
    LUTConfig,
    SwitchBox,
    empty_fabric,
    family_arity,
    init_from_hex,
    init_to_hex,
    parse_cellref,
    validate,
)
from llsiscope.floorplan import build_floorplan, cells_overlapping, floorplan_lookup
from llsiscope.logic import snapshot_emitters
from llsiscope.designs import build_demo
from llsiscope.trojan import _edit_routes, _replace_element

MINIMAL_K = """\
family SeriesK
grid 1x1
tile 0 0
  slice SLICE_X0Y0
  slice SLICE_X1Y0
"""


# -- data model and file format -------------------------------------------


def test_minimal_seriesk_document_counts():
    cfg = parse_fabric_config(MINIMAL_K)
    assert len(list(cfg.iter_luts())) == 8
    assert len(list(cfg.iter_ffs())) == 16
    assert list(cfg.iter_routes()) == []
    assert all(not lut.used for _, lut in cfg.iter_luts())


def test_seriesp_cluster_has_twelve_arity4_elements():
    cfg = empty_fabric(SERIES_P, 2, 1)
    tile = cfg.tile_at(1, 0)
    (cluster,) = tile.slices
    assert cluster.name == "LC(1,0)"
    assert len(cluster.luts) == len(cluster.ffs) == 12
    assert {lut.arity for lut in cluster.luts} == {4}


def test_multiply_driven_net_is_named():
    text = MINIMAL_K.replace("  slice SLICE_X1Y0\n", """\
  slice SLICE_X1Y0
    lut A6LUT arity=6 init=0x1 in=0,0,0,0,0,0 out=n3 used=1
    lut B6LUT arity=6 init=0x2 in=0,0,0,0,0,0 out=n3 used=1
""")
    with pytest.raises(InvariantError) as exc:
        parse_fabric_config(text)
    assert any("n3" in v and "multiply driven" in v for v in exc.value.violations)


def test_init_0x8000_sets_bit_15_only():
    text = MINIMAL_K.replace("  slice SLICE_X1Y0\n", """\
  slice SLICE_X1Y0
    lut D6LUT arity=6 init=0x00008000 in=0,0,0,0,0,0 out=o used=1
""")
    lut = parse_fabric_config(text).find_slice("SLICE_X1Y0")[1].lut("D6LUT")
    assert lut.init[15] == 1
    assert sum(lut.init) == 1
    assert len(lut.init) == 64


def test_syntax_error_carries_position():
    with pytest.raises(ConfigSyntaxError) as exc:
        parse_fabric_config(MINIMAL_K + "  frobnicate 3\n")
    assert exc.value.line == 6


def test_bad_init_hex_names_field():
    with pytest.raises(SchemaError) as exc:
        parse_fabric_config(MINIMAL_K + "    lut A6LUT arity=6 init=0xZZ in=0 out=o used=1\n")
    assert exc.value.field == "init"


def test_unknown_key_is_schema_error():
    with pytest.raises((SchemaError, ConfigSyntaxError)):
        parse_fabric_config(MINIMAL_K + "    ff AFF state=0 colour=red used=0\n")


def test_comments_and_blank_lines_are_ignored():
    text = "# header\n\n" + MINIMAL_K.replace("grid 1x1", "grid 1x1   # one tile")
    assert parse_fabric_config(text) == parse_fabric_config(MINIMAL_K)


def test_minimal_round_trip():
    cfg = parse_fabric_config(MINIMAL_K)
    assert parse_fabric_config(serialize_fabric_config(cfg)) == cfg


def test_serialization_is_byte_stable():
    cfg = random_fabric(SERIES_K, 3)
    assert serialize_fabric_config(cfg) == serialize_fabric_config(cfg)


def test_round_trip_100_routes():
    cfg = empty_fabric(SERIES_K, 4, 4, capacity=32)
    cfg = replace(cfg, pins=(("a", 1),))
    routes = {}
    for k in range(100):
        tile = (k % 4, (k // 4) % 4)
        routes.setdefault(tile, []).append(("a", f"s{k}"))
    for tile, rs in routes.items():
        cfg = _edit_routes(cfg, tile, add=rs)
    back = parse_fabric_config(serialize_fabric_config(cfg))
    assert set(back.iter_routes()) == set(cfg.iter_routes())
    assert len(list(back.iter_routes())) == 100


@pytest.mark.parametrize("family", [SERIES_K, SERIES_P])
def test_round_trip_200_random_configs(family):
    for seed in range(200):
        cfg = random_fabric(family, seed)
        assert parse_fabric_config(serialize_fabric_config(cfg)) == cfg, seed


@settings(max_examples=50, deadline=None)
@given(st.sampled_from([SERIES_K, SERIES_P]), st.integers(0, 10**6))
def test_round_trip_property(family, seed):
    cfg = random_fabric(family, seed)
    assert parse_fabric_config(serialize_fabric_config(cfg)) == cfg


@given(st.integers(4, 6).filter(lambda a: a in (4, 6)), st.data())
def test_init_hex_round_trip(arity, data):
    value = data.draw(st.integers(0, (1 << (1 << arity)) - 1))
    bits = init_from_hex(hex(value), arity)
    assert init_from_hex(init_to_hex(bits), arity) == bits


def test_cellref_names():
    cfg = empty_fabric(SERIES_K, 2, 2)
    assert parse_cellref("SLICE_X1Y1.D6LUT", cfg) == CellRef((0, 1), "SLICE_X1Y1", "D6LUT")
    assert parse_cellref("TILE_X1Y0.SBOX", cfg).name == "TILE_X1Y0.SBOX"
    with pytest.raises(FabricError):
        parse_cellref("SLICE_X9Y9.AFF", cfg)


# -- validate ---------------------------------------------------------------


def test_valid_config_has_no_violations():
    assert validate(build_demo("route-thru")) == []


def test_duplicate_sink_single_violation():
    cfg = build_demo("route-thru")
    bad = _edit_routes(cfg, (0, 1), add=[("src_q", "dst_d")])
    (v,) = validate(bad)
    assert "dst_d" in v


def test_short_init_single_violation():
    cfg = build_demo("lut-init-pair")
    ref = parse_cellref("SLICE_X1Y1.D6LUT", cfg)
    lut = cfg.element(ref)
    (v,) = validate(_replace_element(cfg, ref, replace(lut, init=lut.init[:63])))
    assert "SLICE_X1Y1.D6LUT" in v and "63" in v


def _first_used_lut(cfg):
    return next((ref, lut) for ref, lut in cfg.iter_luts() if lut.used)


def _mutate(cfg, kind):
    """Inject one violation; returns (mutated cfg, substring every violation must contain)."""
    if kind == "duplicate_sink":
        (ref, (src, sink)) = next(iter(cfg.iter_routes()))
        other = "1" if src == "0" else "0"
        return _edit_routes(cfg, ref.tile, add=[(other, sink)]), sink
    if kind == "init_length":
        ref, lut = _first_used_lut(cfg)
        return _replace_element(cfg, ref, replace(lut, init=lut.init[:-1])), ref.name
    if kind == "multiply_driven":
        ref, lut = _first_used_lut(cfg)
        free = next(r for r, e in cfg.iter_luts() if not e.used)
        clone = LUTConfig(free.element, lut.arity, lut.init, ("0",) * lut.arity, lut.output_net, True)
        return _replace_element(cfg, free, clone), lut.output_net
    if kind == "undriven":
        free = next(r for r, e in cfg.iter_ffs() if not e.used)
        return _replace_element(cfg, free, FFConfig(free.element, 0, "ghost_net", "ghost_q", True)), "ghost_net"
    if kind == "used_without_output":
        free = next(r for r, e in cfg.iter_ffs() if not e.used)
        return _replace_element(cfg, free, FFConfig(free.element, 0, "0", None, True)), free.name
    if kind == "tile_bounds":
        t = cfg.tiles[0]
        return replace(cfg, grid_cols=cfg.grid_cols, tiles=cfg.tiles[1:] + (replace(t, col=cfg.grid_cols + 5),)), f"({cfg.grid_cols + 5},"
    raise AssertionError(kind)


MUTATIONS = ["duplicate_sink", "init_length", "multiply_driven", "undriven", "used_without_output", "tile_bounds"]


@pytest.mark.parametrize("kind", MUTATIONS)
def test_mutation_harness(kind):
    for seed in range(25):
        cfg = random_fabric(SERIES_K, seed, n_routes=6)
        if not any(lut.used for _, lut in cfg.iter_luts()):
            continue
        assert validate(cfg) == []
        bad, token = _mutate(cfg, kind)
        found = validate(bad)
        assert found, (kind, seed)
        assert all(token in v for v in found), (kind, seed, found)


def test_slice_limits():
    cfg = empty_fabric(SERIES_K, 1, 1)
    t = cfg.tiles[0]
    extra = replace(t.slices[0], name="SLICE_X2Y0")
    bad = replace(cfg, tiles=(replace(t, slices=t.slices + (extra,)),))
    assert any("exceed" in v for v in validate(bad))


def test_switchbox_capacity():
    cfg = replace(empty_fabric(SERIES_K, 1, 1, capacity=2), pins=(("a", 0),))
    bad = _edit_routes(cfg, (0, 0), add=[("a", f"s{i}") for i in range(3)])
    assert any("capacity" in v for v in validate(bad))


# -- floorplan ----------------------------------------------------------------


def test_floorplan_bounds_2x2():
    fp = build_floorplan(empty_fabric(SERIES_K, 2, 2), 25.0)
    assert all(0 <= x < 50 and 0 <= y < 50 for x, y in fp.devices.values())


def test_floorplan_deterministic():
    cfg = random_fabric(SERIES_K, 11)
    assert build_floorplan(cfg) == build_floorplan(cfg)


@pytest.mark.parametrize("family", [SERIES_K, SERIES_P])
def test_device_count_matches_enumeration(family):
    cfg = random_fabric(family, 5)
    a = family_arity(family)
    per_lut = (1 << a) + 2 * ((1 << a) - 1)
    expected = (sum(per_lut for _ in cfg.iter_luts()) + 2 * len(list(cfg.iter_ffs()))
                + sum(2 * t.switchbox.capacity for t in cfg.tiles))
    assert len(build_floorplan(cfg).devices) == expected


@pytest.mark.parametrize("family", [SERIES_K, SERIES_P])
def test_devices_injective_and_inside_their_cell(family):
    fp = build_floorplan(random_fabric(family, 8))
    positions = list(fp.devices.values())
    assert len(set(positions)) == len(positions)
    for (ref, _), (x, y) in fp.devices.items():
        x0, y0, x1, y1 = fp.rects[ref]
        assert x0 <= x < x1 and y0 <= y < y1
        col, row = ref.tile
        assert col * 25 <= x < (col + 1) * 25 and row * 25 <= y < (row + 1) * 25


def test_lookup_center_of_d_lut():
    cfg = empty_fabric(SERIES_K, 2, 2)
    fp = build_floorplan(cfg)
    ref = cfg.cell("SLICE_X1Y1", "D6LUT")
    x0, y0, x1, y1 = fp.rects[ref]
    assert floorplan_lookup(fp, ((x0 + x1) / 2, (y0 + y1) / 2)) == CellRef((0, 1), "SLICE_X1Y1", "D6LUT")
    assert floorplan_lookup(fp, (-1.0, 3.0)) is None
    assert floorplan_lookup(fp, (10.0, 60.0)) is None


def test_every_emitter_maps_to_its_origin_cell():
    cfg = random_fabric(SERIES_K, 2)
    fp = build_floorplan(cfg)
    em = snapshot_emitters(cfg, fp)
    for (pos, *_rest, (ref, _idx)) in em.records():
        assert floorplan_lookup(fp, pos) == ref


def test_cells_overlapping_spans_slices():
    cfg = empty_fabric(SERIES_K, 1, 1)
    fp = build_floorplan(cfg)
    hits = {r.slice for r in cells_overlapping(fp, (9.0, 0.0, 11.0, 5.0))}
    assert hits == {"SLICE_X0Y0", "SLICE_X1Y0"}


def test_switchbox_type_defaults():
    assert SwitchBox().capacity == 32
