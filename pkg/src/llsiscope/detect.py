"""Golden-versus-suspect snapshot comparison.

Pipeline: register -> normalize -> subtract -> despeckle -> robust sigma ->
threshold and label -> map components onto fabric cells.  A suspect is
``TAMPERED`` when at least one component survives the area gate.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .floorplan import FloorPlan, cells_overlapping
from .optics import FWHM_PER_SIGMA, ScanParams
from .pnm import Image16, encode_pgm

MAD_TO_SIGMA = 1.4826
EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)

GREEN = np.array([0, 255, 0], dtype=np.float64)
YELLOW = np.array([255, 255, 0], dtype=np.float64)
TINT = 0.7


class PipelineError(ValueError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


@dataclass(frozen=True)
class AnalysisParams:
    max_shift_px: int = 10
    k: float = 5.0
    min_area_px: int | None = None     # None: beam footprint at the scan's pitch
    despeckle: bool = True

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError("threshold k must be positive")
        if self.min_area_px is not None and self.min_area_px < 1:
            raise ValueError("min_area_px must be at least 1")
        if self.max_shift_px < 0:
            raise ValueError("max_shift_px must be non-negative")

    def resolved(self, scan: ScanParams) -> "AnalysisParams":
        if self.min_area_px is not None:
            return self
        return replace(self, min_area_px=default_min_area(scan))


def default_min_area(scan: ScanParams) -> int:
    fwhm = scan.sigma_um * FWHM_PER_SIGMA
    return max(1, math.ceil(math.pi * (fwhm / 2) ** 2 / scan.pixel_pitch_um ** 2))


@dataclass
class DiffComponent:
    centroid_px: tuple[float, float]          # (x, y) in pixel units
    bbox_px: tuple[int, int, int, int]        # (x0, y0, x1, y1), inclusive
    area_px: int
    peak_z: float
    polarity: str                              # positive | negative | mixed
    centroid_um: tuple[float, float] | None = None
    cells: list = field(default_factory=list)

    def cell_names(self) -> list[str]:
        return [c.name for c in self.cells]

    def slices(self) -> set[str]:
        return {c.slice for c in self.cells if c.slice}


@dataclass
class DiffReport:
    verdict: str
    shift_px: tuple[int, int]
    noise_sigma: float
    params: AnalysisParams
    components: list
    golden_id: str = ""
    suspect_id: str = ""

    @property
    def tampered(self) -> bool:
        return self.verdict == "TAMPERED"

    def to_text(self) -> str:
        p = self.params
        lines = [
            f"verdict: {self.verdict}",
            f"shift-px: {self.shift_px[0]},{self.shift_px[1]}",
            f"noise-sigma: {self.noise_sigma:.6g}",
            f"threshold-k: {p.k:g}",
            f"min-area-px: {p.min_area_px}",
            f"max-shift-px: {p.max_shift_px}",
            f"despeckle: {'on' if p.despeckle else 'off'}",
            f"golden: {self.golden_id}",
            f"suspect: {self.suspect_id}",
            f"components: {len(self.components)}",
        ]
        for c in self.components:
            cx, cy = c.centroid_um if c.centroid_um is not None else c.centroid_px
            lines.append(
                f"component: centroid-um={cx:.3f},{cy:.3f} area-px={c.area_px} peak-z={c.peak_z:.2f} "
                f"polarity={c.polarity} cells={';'.join(c.cell_names())}"
            )
        return "\n".join(lines) + "\n"


def image_id(img: Image16) -> str:
    return "sha256:" + hashlib.sha256(encode_pgm(img)).hexdigest()[:16]


def _values(img) -> np.ndarray:
    if isinstance(img, Image16):
        return img.dequantized()
    return np.asarray(img, dtype=np.float64)


def _check_same_frame(golden: Image16, suspect: Image16):
    if golden.pixels.shape != suspect.pixels.shape:
        raise ValueError(f"dimension mismatch: {golden.pixels.shape} vs {suspect.pixels.shape}")
    for key in ("pitch-um", "x0-um", "y0-um", "width-um", "height-um"):
        a, b = golden.meta.get(key), suspect.meta.get(key)
        if a != b:
            raise ValueError(f"metadata mismatch for {key}: {a} vs {b}")


def _window_sums(integral: np.ndarray, r0: int, r1: int, c0: int, c1: int) -> float:
    return integral[r1, c1] - integral[r0, c1] - integral[r1, c0] + integral[r0, c0]


def _integral(a: np.ndarray) -> np.ndarray:
    out = np.zeros((a.shape[0] + 1, a.shape[1] + 1))
    out[1:, 1:] = a.cumsum(0).cumsum(1)
    return out


def ncc_scores(golden: np.ndarray, suspect: np.ndarray, max_shift: int) -> dict:
    """Normalized cross-correlation over the overlap for each integer shift.

    A shift ``(dx, dy)`` pairs ``suspect[y, x]`` with ``golden[y - dy, x - dx]``.
    """
    g = golden - golden.mean()
    s = suspect - suspect.mean()
    h, w = g.shape
    fh, fw = 2 * h, 2 * w
    cross = np.fft.irfft2(np.fft.rfft2(s, (fh, fw)) * np.conj(np.fft.rfft2(g, (fh, fw))), (fh, fw))
    ig, ig2 = _integral(g), _integral(g * g)
    is_, is2 = _integral(s), _integral(s * s)
    scores = {}
    for dy in range(-max_shift, max_shift + 1):
        for dx in range(-max_shift, max_shift + 1):
            sr0, sr1 = max(0, dy), h + min(0, dy)
            sc0, sc1 = max(0, dx), w + min(0, dx)
            n = (sr1 - sr0) * (sc1 - sc0)
            if n <= 1:
                continue
            sum_s = _window_sums(is_, sr0, sr1, sc0, sc1)
            sum_s2 = _window_sums(is2, sr0, sr1, sc0, sc1)
            sum_g = _window_sums(ig, sr0 - dy, sr1 - dy, sc0 - dx, sc1 - dx)
            sum_g2 = _window_sums(ig2, sr0 - dy, sr1 - dy, sc0 - dx, sc1 - dx)
            sg = cross[dy % fh, dx % fw]
            cov = sg - sum_s * sum_g / n
            var = (sum_s2 - sum_s ** 2 / n) * (sum_g2 - sum_g ** 2 / n)
            scores[(dx, dy)] = cov / math.sqrt(var) if var > 0 else -math.inf
    return scores


def shift_image(a: np.ndarray, dx: int, dy: int, fill: float) -> np.ndarray:
    """``out[y, x] = a[y - dy, x - dx]``, uncovered pixels set to ``fill``."""
    h, w = a.shape
    out = np.full_like(a, fill, dtype=np.float64)
    if abs(dx) >= w or abs(dy) >= h:
        return out
    out[max(0, dy):h + min(0, dy), max(0, dx):w + min(0, dx)] = \
        a[max(0, -dy):h + min(0, -dy), max(0, -dx):w + min(0, -dx)]
    return out


def valid_mask(shape, dx: int, dy: int) -> np.ndarray:
    h, w = shape
    m = np.zeros(shape, dtype=bool)
    m[max(0, -dy):h + min(0, -dy), max(0, -dx):w + min(0, -dx)] = True
    return m


def register_images(golden, suspect, max_shift_px: int = 10):
    """Best integer shift of ``suspect`` relative to ``golden`` and the realigned suspect."""
    if isinstance(golden, Image16) and isinstance(suspect, Image16):
        _check_same_frame(golden, suspect)
    g, s = _values(golden), _values(suspect)
    if g.shape != s.shape:
        raise ValueError(f"dimension mismatch: {g.shape} vs {s.shape}")
    scores = ncc_scores(g, s, max_shift_px)
    best = max(scores, key=lambda d: (scores[d], -(abs(d[0]) + abs(d[1]))))
    dx, dy = best
    return (dx, dy), shift_image(s, -dx, -dy, float(np.median(s)))


def normalize(img) -> np.ndarray:
    """Median-centred, MAD-scaled real image.

    Sparse noise-free images can have zero MAD while not being constant;
    those fall back to the standard deviation.
    """
    v = _values(img)
    med = np.median(v)
    scale = MAD_TO_SIGMA * np.median(np.abs(v - med))
    if scale == 0:
        scale = float(np.std(v))
    if scale == 0:
        raise ValueError("cannot normalize: constant image")
    return (v - med) / scale


def subtract(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = np.asarray(a, np.float64), np.asarray(b, np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a - b


def match_intensity(golden: np.ndarray, suspect: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Map ``suspect`` onto the intensity scale of ``golden``.

    Fits ``suspect ~ a * golden + b`` by orthogonal regression over ``mask``
    (both images carry noise of the same size, so ordinary least squares would
    be biased low) and returns ``(suspect - b) / a``.  Local differences cover
    a small fraction of the frame and barely move the fit.
    """
    g = np.asarray(golden, np.float64)
    s = np.asarray(suspect, np.float64)
    if g.shape != s.shape:
        raise ValueError(f"dimension mismatch: {g.shape} vs {s.shape}")
    sel = np.ones(g.shape, bool) if mask is None else np.asarray(mask, bool)
    x, y = g[sel], s[sel]
    if x.size < 2:
        return s.copy()
    mx, my = x.mean(), y.mean()
    sxx = np.mean((x - mx) ** 2)
    syy = np.mean((y - my) ** 2)
    sxy = np.mean((x - mx) * (y - my))
    if sxy <= 0:
        return s.copy()
    a = (syy - sxx + np.hypot(syy - sxx, 2 * sxy)) / (2 * sxy)
    return (s - (my - a * mx)) / a


def despeckle(img: np.ndarray) -> np.ndarray:
    """3x3 median filter with edge replication."""
    return ndimage.median_filter(np.asarray(img, np.float64), size=3, mode="nearest")


def estimate_noise_sigma(diff: np.ndarray) -> float:
    d = np.asarray(diff, np.float64)
    if d.size < 100:
        raise ValueError(f"need at least 100 pixels for a noise estimate, got {d.size}")
    return float(MAD_TO_SIGMA * np.median(np.abs(d - np.median(d))))


def threshold_components(diff: np.ndarray, sigma: float, params: AnalysisParams) -> list[DiffComponent]:
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if params.min_area_px is None:
        raise ValueError("params.min_area_px must be resolved before thresholding")
    d = np.asarray(diff, np.float64)
    z = np.abs(d) / sigma
    labels, n = ndimage.label(z > params.k, structure=EIGHT_CONNECTED)
    comps = []
    for i, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None:
            continue
        mask = labels[sl] == i
        area = int(mask.sum())
        if area < params.min_area_px:
            continue
        ys, xs = np.nonzero(mask)
        ys = ys + sl[0].start
        xs = xs + sl[1].start
        vals = d[ys, xs]
        pol = "positive" if (vals > 0).all() else "negative" if (vals < 0).all() else "mixed"
        comps.append(DiffComponent(
            centroid_px=(float(xs.mean()), float(ys.mean())),
            bbox_px=(int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())),
            area_px=area,
            peak_z=float(z[ys, xs].max()),
            polarity=pol,
        ))
    return comps


def localize(components: list[DiffComponent], fp: FloorPlan, scan: ScanParams) -> list[DiffComponent]:
    """Attach micrometre centroids and the cells overlapping each bounding box."""
    x0, y0 = scan.region[0], scan.region[1]
    p = scan.pixel_pitch_um
    out = []
    for c in components:
        bx0, by0, bx1, by1 = c.bbox_px
        rect = (x0 + bx0 * p, y0 + by0 * p, x0 + (bx1 + 1) * p, y0 + (by1 + 1) * p)
        cells = sorted(cells_overlapping(fp, rect), key=lambda r: r.name)
        cx, cy = c.centroid_px
        out.append(replace(c, centroid_um=(x0 + (cx + 0.5) * p, y0 + (cy + 0.5) * p), cells=cells))
    return out


def render_overlay(reflectance, diff: np.ndarray, sigma: float, params: AnalysisParams) -> np.ndarray:
    """RGB overlay: grey reflectance, green where diff > k*sigma, yellow where diff < -k*sigma."""
    base = _values(reflectance)
    d = np.asarray(diff, np.float64)
    if base.shape != d.shape:
        raise ValueError(f"dimension mismatch: {base.shape} vs {d.shape}")
    lo, hi = float(base.min()), float(base.max())
    grey = (base - lo) / (hi - lo) * 255.0 if hi > lo else np.full(base.shape, 128.0)
    rgb = np.repeat(grey[:, :, None], 3, axis=2)
    if sigma > 0:
        pos = d > params.k * sigma
        neg = d < -params.k * sigma
        rgb[pos] = (1 - TINT) * rgb[pos] + TINT * GREEN
        rgb[neg] = (1 - TINT) * rgb[neg] + TINT * YELLOW
    return np.clip(np.rint(rgb), 0, 255).astype(np.uint8)


@dataclass
class Comparison:
    """Report plus the intermediate difference image (for overlays)."""
    report: DiffReport
    diff: np.ndarray
    sigma: float


def analyze(golden: Image16, suspect: Image16, fp: FloorPlan, scan: ScanParams,
            params: AnalysisParams | None = None, golden_id: str | None = None,
            suspect_id: str | None = None) -> Comparison:
    params = (params or AnalysisParams()).resolved(scan)

    def stage(name, fn, *args):
        try:
            return fn(*args)
        except ValueError as exc:
            raise PipelineError(name, str(exc)) from exc

    stage("metadata", _check_same_frame, golden, suspect)
    (dx, dy), aligned = stage("register", register_images, golden, suspect, params.max_shift_px)
    g = stage("normalize", normalize, golden)
    s = stage("normalize", normalize, aligned)
    valid = valid_mask(g.shape, dx, dy)
    s = stage("match", match_intensity, g, s, valid)
    diff = stage("subtract", subtract, s, g)
    diff[~valid] = 0.0
    if params.despeckle:
        diff = stage("despeckle", despeckle, diff)
    sigma = stage("noise", estimate_noise_sigma, diff)
    if sigma > 0:
        comps = stage("threshold", threshold_components, diff, sigma, params)
    elif np.any(diff != 0):
        # noise-free inputs: any surviving difference is real
        sigma = float(np.abs(diff[diff != 0]).min()) / (2 * params.k)
        comps = stage("threshold", threshold_components, diff, sigma, params)
    else:
        comps = []
    comps = stage("localize", localize, comps, fp, scan)
    report = DiffReport(
        verdict="TAMPERED" if comps else "CLEAN",
        shift_px=(dx, dy),
        noise_sigma=sigma,
        params=params,
        components=comps,
        golden_id=golden_id if golden_id is not None else image_id(golden),
        suspect_id=suspect_id if suspect_id is not None else image_id(suspect),
    )
    return Comparison(report, diff, sigma)


def compare_snapshots(golden: Image16, suspect: Image16, fp: FloorPlan, scan: ScanParams,
                      params: AnalysisParams | None = None, **ids) -> DiffReport:
    return analyze(golden, suspect, fp, scan, params, **ids).report
