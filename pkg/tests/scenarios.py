"""Render golden/suspect pairs for end-to-end tests."""

from llsiscope.designs import build_demo, demo_partner
from llsiscope.detect import AnalysisParams, analyze
from llsiscope.floorplan import build_floorplan
from llsiscope.logic import snapshot_emitters
from llsiscope.optics import NoiseParams, ScanParams, render_llsi

# 512 x 512 px at the default 0.25 um pitch
REGION_512 = (0.0, 0.0, 128.0, 128.0)


def whole_fabric(fp):
    x0, y0, x1, y1 = fp.extent()
    return (x0, y0, x1 - x0, y1 - y0)


def render(cfg, scan, seed, fp=None, noise_floor=None):
    fp = fp or build_floorplan(cfg)
    noise = NoiseParams(seed=seed) if noise_floor is None else NoiseParams(noise_floor=noise_floor, seed=seed)
    return render_llsi(snapshot_emitters(cfg, fp), scan, noise)


def compare(golden_cfg, suspect_cfg, seed, region=REGION_512, params=None):
    """Golden rendered with seed ``2*seed``, suspect with ``2*seed+1``; returns the Comparison."""
    fp = build_floorplan(golden_cfg)
    scan = ScanParams(region if region is not None else whole_fabric(fp))
    g = render(golden_cfg, scan, 2 * seed, fp)
    s = render(suspect_cfg, scan, 2 * seed + 1)
    return analyze(g, s, fp, scan, params or AnalysisParams())


def demo_pair(name, cols=6, rows=6):
    golden = build_demo(name, cols, rows)
    return golden, demo_partner(name, golden)
