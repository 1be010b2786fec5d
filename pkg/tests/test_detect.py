import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scenarios import compare, demo_pair
from llsiscope.designs import build_demo
from llsiscope.detect import (
    AnalysisParams,
    DiffComponent,
    PipelineError,
    analyze,
    default_min_area,
    despeckle,
    estimate_noise_sigma,
    localize,
    match_intensity,
    normalize,
    register_images,
    render_overlay,
    shift_image,
    subtract,
    threshold_components,
)
from llsiscope.fabric import SERIES_K, empty_fabric
from llsiscope.floorplan import build_floorplan
from llsiscope.logic import snapshot_emitters
from llsiscope.optics import NoiseParams, ScanParams, render_llsi, render_reflectance
from llsiscope.pnm import from_values

P = AnalysisParams(min_area_px=4)


def _structured(seed=0, shape=(96, 96)):
    rnd = np.random.default_rng(seed)
    from scipy import ndimage
    return ndimage.gaussian_filter(rnd.normal(size=shape), 2.0)


# -- registration ------------------------------------------------------------


def test_identical_images_zero_shift():
    g = _structured()
    (dx, dy), aligned = register_images(g, g, 10)
    assert (dx, dy) == (0, 0)
    np.testing.assert_array_equal(aligned, g)


def test_known_shift_recovered():
    g = _structured(1)
    s = shift_image(g, 3, -2, float(np.median(g)))
    (dx, dy), aligned = register_images(g, s, 10)
    assert (dx, dy) == (3, -2)
    np.testing.assert_allclose(aligned[5:-5, 5:-5], g[5:-5, 5:-5])


def test_shift_5_5_at_snr_5():
    rnd = np.random.default_rng(3)
    for trial in range(20):
        g = _structured(trial)
        sigma = g.std() / 5
        s = shift_image(g, 5, 5, float(np.median(g))) + rnd.normal(0, sigma, g.shape)
        gn = g + rnd.normal(0, sigma, g.shape)
        assert register_images(gn, s, 10)[0] == (5, 5)


@settings(max_examples=25, deadline=None)
@given(st.integers(-10, 10), st.integers(-10, 10))
def test_registration_property(dx, dy):
    g = _structured(7)
    s = shift_image(g, dx, dy, float(np.median(g)))
    assert register_images(g, s, 10)[0] == (dx, dy)


def test_registration_dimension_mismatch():
    with pytest.raises(ValueError):
        register_images(np.zeros((4, 4)), np.zeros((4, 5)), 1)


# -- normalize / subtract / despeckle -------------------------------------------


def test_normalize_affine_invariant():
    v = _structured(2)
    a = normalize(from_values(v))
    b = normalize(from_values(2 * v + 100))
    np.testing.assert_allclose(a, b, atol=1e-9 * np.abs(a).max() + 5e-4)
    np.testing.assert_allclose(normalize(v), normalize(2 * v + 100), atol=1e-9)


def test_normalize_gaussian_field():
    v = np.random.default_rng(0).normal(3.0, 7.0, (512, 512))
    n = normalize(v)
    assert abs(np.median(n)) < 0.01
    assert 1.4826 * np.median(np.abs(n - np.median(n))) == pytest.approx(1.0, rel=0.02)


def test_normalize_constant_rejected():
    with pytest.raises(ValueError):
        normalize(np.ones((8, 8)))


def test_subtract_properties():
    a, b = _structured(0), _structured(1)
    assert not subtract(a, a).any()
    np.testing.assert_array_equal(subtract(a, b), -subtract(b, a))
    with pytest.raises(ValueError):
        subtract(a, b[:-1])


def test_match_intensity_recovers_gain():
    rnd = np.random.default_rng(1)
    g = _structured(4) * 10
    s = 1.03 * g + 0.2 + rnd.normal(0, 0.05, g.shape)
    gn = g + rnd.normal(0, 0.05, g.shape)
    matched = match_intensity(gn, s)
    assert np.std(matched - gn) == pytest.approx(0.05 * np.sqrt(1 + 1 / 1.03 ** 2), rel=0.05)


def test_despeckle_examples():
    c = np.full((9, 9), 2.5)
    np.testing.assert_array_equal(despeckle(c), c)
    imp = np.zeros((9, 9))
    imp[4, 4] = 100
    assert not despeckle(imp).any()
    blk = np.zeros((9, 9))
    blk[3:6, 3:6] = 7.0
    assert despeckle(blk)[4, 4] == 7.0


def test_despeckle_edge_replication():
    img = np.zeros((5, 5))
    img[0, :] = 1.0
    img[1, :] = 1.0
    # with replicated borders the top row keeps its value
    np.testing.assert_array_equal(despeckle(img)[0], np.ones(5))


# -- noise and thresholding -------------------------------------------------------


def test_sigma_unit_gaussian_1e6():
    d = np.random.default_rng(5).normal(size=(1000, 1000))
    assert estimate_noise_sigma(d) == pytest.approx(1.0, rel=0.02)


def test_sigma_constant_is_zero():
    assert estimate_noise_sigma(np.full((20, 20), 3.0)) == 0.0


def test_sigma_robust_to_outliers():
    rnd = np.random.default_rng(6)
    d = rnd.normal(size=(1000, 1000))
    idx = rnd.choice(d.size, d.size // 100, replace=False)
    d.ravel()[idx] = 100.0 * rnd.choice([-1, 1], idx.size)
    assert estimate_noise_sigma(d) == pytest.approx(1.0, rel=0.05)


def test_sigma_needs_enough_pixels():
    with pytest.raises(ValueError):
        estimate_noise_sigma(np.zeros((5, 5)))


def test_threshold_below_k_is_empty():
    assert threshold_components(np.full((30, 30), 4.9), 1.0, P) == []


def test_threshold_single_block():
    d = np.zeros((30, 30))
    d[10:15, 12:17] = 10.0
    (c,) = threshold_components(d, 1.0, P)
    assert c.area_px == 25 and c.polarity == "positive"
    assert c.bbox_px == (12, 10, 16, 14)
    assert c.centroid_px == (14.0, 12.0)


def test_threshold_two_blocks_two_components():
    d = np.zeros((30, 30))
    d[2:7, 2:7] = 10.0
    d[2:7, 9:14] = -10.0
    comps = threshold_components(d, 1.0, P)
    assert len(comps) == 2
    assert {c.polarity for c in comps} == {"positive", "negative"}


def test_threshold_diagonal_is_connected():
    d = np.zeros((10, 10))
    for i in range(5):
        d[i, i] = 10.0
    assert len(threshold_components(d, 1.0, P)) == 1


def test_min_area_gate():
    d = np.zeros((30, 30))
    d[2:4, 2:4] = 10.0
    assert threshold_components(d, 1.0, P) != []
    assert threshold_components(d, 1.0, AnalysisParams(min_area_px=5)) == []


def test_default_min_area_is_beam_footprint():
    assert default_min_area(ScanParams((0, 0, 10, 10))) == 11


# -- localization and overlay ------------------------------------------------------


def _lut_component(fp, scan, ref):
    x0, y0, x1, y1 = fp.rects[ref]
    p = scan.pixel_pitch_um
    cx, cy = (x0 + x1) / 2 / p, (y0 + y1) / 2 / p
    return DiffComponent((cx, cy), (int(cx) - 1, int(cy) - 1, int(cx) + 1, int(cy) + 1), 9, 10.0, "positive")


def test_localize_center_of_lut():
    cfg = empty_fabric(SERIES_K, 2, 2)
    fp = build_floorplan(cfg)
    scan = ScanParams((0, 0, 50, 50))
    ref = cfg.cell("SLICE_X1Y1", "D6LUT")
    (c,) = localize([_lut_component(fp, scan, ref)], fp, scan)
    assert c.cells == [ref]


def test_localize_spanning_slices():
    cfg = empty_fabric(SERIES_K, 1, 1)
    fp = build_floorplan(cfg)
    scan = ScanParams((0, 0, 25, 25))
    comp = DiffComponent((40.0, 10.0), (36, 8, 44, 12), 45, 10.0, "positive")
    (c,) = localize([comp], fp, scan)
    assert c.slices() == {"SLICE_X0Y0", "SLICE_X1Y0"}
    assert c.cell_names() == sorted(c.cell_names())


def test_overlay_zero_diff_is_grey():
    fp = build_floorplan(empty_fabric(SERIES_K, 1, 1))
    scan = ScanParams((0, 0, 25, 25))
    rgb = render_overlay(render_reflectance(fp, scan), np.zeros(scan.shape), 1.0, P)
    assert (rgb[..., 0] == rgb[..., 1]).all() and (rgb[..., 1] == rgb[..., 2]).all()


def test_overlay_green_exactly_on_positive_mask():
    fp = build_floorplan(empty_fabric(SERIES_K, 1, 1))
    scan = ScanParams((0, 0, 25, 25))
    d = np.zeros(scan.shape)
    d[20:30, 40:50] = 8.0
    d[60:62, 60:62] = -8.0
    rgb = render_overlay(render_reflectance(fp, scan), d, 1.0, AnalysisParams(k=5.0)).astype(int)
    green = (rgb[..., 1] > rgb[..., 0]) & (rgb[..., 1] > rgb[..., 2])
    yellow = (rgb[..., 0] > rgb[..., 2]) & (rgb[..., 1] > rgb[..., 2])
    np.testing.assert_array_equal(green, d > 5)
    np.testing.assert_array_equal(yellow, d < -5)


# -- end to end ---------------------------------------------------------------------


def test_same_config_is_clean():
    g, _ = demo_pair("lut-init-pair")
    assert compare(g, g, seed=11).report.verdict == "CLEAN"


def test_init_flip_detected_at_patched_lut():
    g, s = demo_pair("lut-init-pair")
    cmp = compare(g, s, seed=12)
    assert cmp.report.verdict == "TAMPERED"
    assert any("SLICE_X1Y1.D6LUT" in c.cell_names() for c in cmp.report.components)
    # significant difference mass sits on the patched LUT, up to one beam FWHM of spill
    fp = build_floorplan(g)
    x0, y0, x1, y1 = fp.rects[g.cell("SLICE_X1Y1", "D6LUT")]
    p, fwhm = 0.25, 0.915
    mass = np.where(np.abs(cmp.diff) > 5 * cmp.sigma, np.abs(cmp.diff), 0.0)
    # border pixels see replicated samples in the median filter and run noisier
    mass[[0, -1], :] = 0.0
    mass[:, [0, -1]] = 0.0
    r0, r1 = int((y0 - fwhm) / p), int((y1 + fwhm) / p) + 1
    c0, c1 = int((x0 - fwhm) / p), int((x1 + fwhm) / p) + 1
    assert mass[r0:r1, c0:c1].sum() / mass.sum() > 0.99


def test_moved_route_thru_both_slices():
    g, s = demo_pair("route-thru")
    report = compare(g, s, seed=13).report
    assert report.verdict == "TAMPERED" and len(report.components) >= 2
    slices = set().union(*(c.slices() for c in report.components))
    assert {"SLICE_X1Y1", "SLICE_X4Y0"} <= slices


def test_ff_toggle_spots_at_ff_and_downstream():
    g, s = demo_pair("ff-toggle-pair")
    report = compare(g, s, seed=14).report
    names = set().union(*(c.cell_names() for c in report.components))
    assert "SLICE_X0Y1.DFF" in names
    # the FF output drives a switch-box route and the AND LUT
    assert names & {"TILE_X0Y1.SBOX", "SLICE_X1Y1.D6LUT"}


def test_metadata_mismatch_is_pipeline_error():
    cfg = build_demo("lut-init-pair", 3, 2)
    fp = build_floorplan(cfg)
    em = snapshot_emitters(cfg, fp)
    a = render_llsi(em, ScanParams((0, 0, 20, 20)), NoiseParams(seed=1))
    b = render_llsi(em, ScanParams((0, 0, 20, 20), pixel_pitch_um=0.5), NoiseParams(seed=2))
    with pytest.raises(PipelineError) as exc:
        analyze(a, b, fp, ScanParams((0, 0, 20, 20)))
    assert exc.value.stage == "metadata"


def test_noise_free_difference_still_detected():
    g, s = demo_pair("lut-init-pair")
    fp = build_floorplan(g)
    scan = ScanParams((0, 0, 50, 50))
    quiet = NoiseParams(noise_floor=0.0)
    a = render_llsi(snapshot_emitters(g, fp), scan, quiet)
    b = render_llsi(snapshot_emitters(s, fp), scan, quiet)
    assert analyze(a, b, fp, scan).report.verdict == "TAMPERED"
    assert analyze(a, a, fp, scan).report.verdict == "CLEAN"


def test_report_text_format():
    g, s = demo_pair("lut-init-pair")
    text = compare(g, s, seed=3).report.to_text()
    lines = text.splitlines()
    assert lines[0] == "verdict: TAMPERED"
    assert any(line.startswith("component: centroid-um=") and "cells=" in line for line in lines)
