"""LLSI and reflectance rendering from point emitters.

The beam is a Gaussian with FWHM = wavelength / (2 NA).  Each emitter is
splatted with a separable discrete Gaussian centred on its sub-pixel
position and normalized to unit sum, then scaled by the supply-modulation
gain (peak-to-peak volts relative to 0.2 V).  Lock-in noise is additive and
Gaussian with sigma growing as sqrt(bandpass) and shrinking as sqrt(dwell).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import rng
from .floorplan import FloorPlan
from .logic import EmitterMap
from .pnm import Image16, from_values

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))  # 2.35482
REFERENCE_VPP = 0.2
KERNEL_RADIUS_SIGMAS = 4.0
EMITTER_CHUNK = 4096

REFLECTANCE_LEVELS = {"background": 0.2, "lut": 0.55, "ff": 0.8, "sbox": 0.4}


@dataclass(frozen=True)
class Modulation:
    offset_v: float = 1.0
    peak_to_peak_v: float = 0.2
    freq_hz: float = 80e3


@dataclass(frozen=True)
class ScanParams:
    region: tuple[float, float, float, float]      # x0, y0, width, height in um
    pixel_pitch_um: float = 0.25
    wavelength_um: float = 1.3
    numerical_aperture: float = 0.71
    dwell_ms_per_px: float = 3.3
    bandpass_hz: float = 100.0
    modulation: Modulation = field(default_factory=Modulation)

    def __post_init__(self):
        if not self.pixel_pitch_um > 0:
            raise ValueError("pixel pitch must be positive")
        if not 0 < self.numerical_aperture <= 1:
            raise ValueError("numerical aperture must be in (0, 1]")
        if not self.dwell_ms_per_px > 0:
            raise ValueError("dwell time must be positive")
        if not self.bandpass_hz > 0:
            raise ValueError("bandpass must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        """(rows, cols) of the raster."""
        return (int(round(self.region[3] / self.pixel_pitch_um)),
                int(round(self.region[2] / self.pixel_pitch_um)))

    @property
    def sigma_um(self) -> float:
        return psf_sigma(self.wavelength_um, self.numerical_aperture)

    def meta(self) -> dict:
        x0, y0, w, h = self.region
        m = self.modulation
        return {
            "pitch-um": float(self.pixel_pitch_um),
            "x0-um": float(x0), "y0-um": float(y0),
            "width-um": float(w), "height-um": float(h),
            "wavelength-um": float(self.wavelength_um),
            "na": float(self.numerical_aperture),
            "dwell-ms": float(self.dwell_ms_per_px),
            "bandpass-hz": float(self.bandpass_hz),
            "mod-offset-v": float(m.offset_v),
            "mod-vpp": float(m.peak_to_peak_v),
            "mod-freq-hz": float(m.freq_hz),
        }

    @classmethod
    def from_meta(cls, meta: dict) -> "ScanParams":
        return cls(
            region=(float(meta["x0-um"]), float(meta["y0-um"]), float(meta["width-um"]), float(meta["height-um"])),
            pixel_pitch_um=float(meta["pitch-um"]),
            wavelength_um=float(meta.get("wavelength-um", 1.3)),
            numerical_aperture=float(meta.get("na", 0.71)),
            dwell_ms_per_px=float(meta.get("dwell-ms", 3.3)),
            bandpass_hz=float(meta.get("bandpass-hz", 100.0)),
            modulation=Modulation(float(meta.get("mod-offset-v", 1.0)), float(meta.get("mod-vpp", 0.2)),
                                  float(meta.get("mod-freq-hz", 80e3))),
        )


@dataclass(frozen=True)
class NoiseParams:
    noise_floor: float = 0.0015
    ref_dwell_ms: float = 3.3
    ref_bandpass_hz: float = 100.0
    gain_slope: float = 0.0
    extra_blur_sigma_um: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.noise_floor >= 0:
            raise ValueError("noise floor must be non-negative")
        for name in ("ref_dwell_ms", "ref_bandpass_hz"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("gain_slope", "extra_blur_sigma_um"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def sigma(self, scan: ScanParams) -> float:
        return (self.noise_floor
                * math.sqrt(scan.bandpass_hz / self.ref_bandpass_hz)
                * math.sqrt(self.ref_dwell_ms / scan.dwell_ms_per_px))


def psf_sigma(wavelength_um: float, numerical_aperture: float) -> float:
    if not 0 < numerical_aperture <= 1:
        raise ValueError(f"numerical aperture must be in (0, 1], got {numerical_aperture}")
    return wavelength_um / (2.0 * numerical_aperture) / FWHM_PER_SIGMA


def modulation_gain(scan: ScanParams) -> float:
    return scan.modulation.peak_to_peak_v / REFERENCE_VPP


def _emitter_pixels(em: EmitterMap, scan: ScanParams):
    x0, y0 = scan.region[0], scan.region[1]
    u = (em.x - x0) / scan.pixel_pitch_um - 0.5
    v = (em.y - y0) / scan.pixel_pitch_um - 0.5
    return u, v


def _axis_weights(centres: np.ndarray, sigmas: np.ndarray, radius: int):
    """Unit-sum Gaussian weights at integer offsets around each centre."""
    base = np.rint(centres).astype(np.int64)
    offs = np.arange(-radius, radius + 1)
    idx = base[:, None] + offs[None, :]
    w = np.exp(-0.5 * ((idx - centres[:, None]) / sigmas[:, None]) ** 2)
    w /= w.sum(axis=1, keepdims=True)
    return idx, w


def render_signal(em: EmitterMap, scan: ScanParams, noise: NoiseParams | None = None,
                  rows: range | None = None) -> np.ndarray:
    """Noiseless modulated signal for the given raster rows (all rows by default).

    Any split of the rows yields bitwise-identical pixels: emitters are
    processed in fixed global chunks and each pixel sums its contributions
    in emitter order.
    """
    noise = noise or NoiseParams()
    n_rows, n_cols = scan.shape
    rows = rows or range(n_rows)
    out = np.zeros((len(rows), n_cols))
    if len(em) == 0 or len(rows) == 0:
        return out

    sigma_px = scan.sigma_um / scan.pixel_pitch_um
    u, v = _emitter_pixels(em, scan)
    if noise.extra_blur_sigma_um:
        frac = np.clip(v, 0, n_rows - 1) / n_rows
        extra = noise.extra_blur_sigma_um / scan.pixel_pitch_um * frac
        sig = np.sqrt(sigma_px ** 2 + extra ** 2)
    else:
        sig = np.full(len(em), sigma_px)
    radius = int(math.ceil(KERNEL_RADIUS_SIGMAS * float(sig.max())))
    amp = em.amplitude * modulation_gain(scan)

    for start in range(0, len(em), EMITTER_CHUNK):
        sl = slice(start, start + EMITTER_CHUNK)
        cu, cv, cs, ca = u[sl], v[sl], sig[sl], amp[sl]
        near = ((cv + radius + 1 >= rows.start) & (cv - radius - 1 < rows.stop)
                & (cu + radius + 1 >= 0) & (cu - radius - 1 < n_cols))
        if not near.any():
            continue
        cu, cv, cs, ca = cu[near], cv[near], cs[near], ca[near]
        ix, wx = _axis_weights(cu, cs, radius)
        iy, wy = _axis_weights(cv, cs, radius)
        vals = ca[:, None, None] * wy[:, :, None] * wx[:, None, :]
        yy = np.broadcast_to(iy[:, :, None], vals.shape)
        xx = np.broadcast_to(ix[:, None, :], vals.shape)
        keep = (yy >= rows.start) & (yy < rows.stop) & (xx >= 0) & (xx < n_cols)
        flat = (yy[keep] - rows.start) * n_cols + xx[keep]
        out += np.bincount(flat, weights=vals[keep], minlength=out.size).reshape(out.shape)

    if noise.gain_slope:
        r = np.arange(rows.start, rows.stop, dtype=np.float64)
        out *= (1.0 + noise.gain_slope * r / n_rows)[:, None]
    return out


def render_rows(em: EmitterMap, scan: ScanParams, noise: NoiseParams, rows: range) -> np.ndarray:
    """Signal plus noise for a band of rows."""
    band = render_signal(em, scan, noise, rows)
    sigma = noise.sigma(scan)
    if sigma > 0:
        band += sigma * rng.normal_field(noise.seed, rows, scan.shape[1])
    return band


def _bands(n_rows: int, parts: int) -> list[range]:
    parts = max(1, min(parts, n_rows))
    edges = np.linspace(0, n_rows, parts + 1).round().astype(int)
    return [range(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def render_llsi_values(em: EmitterMap, scan: ScanParams, noise: NoiseParams, workers: int = 1) -> np.ndarray:
    n_rows, n_cols = scan.shape
    if n_rows <= 0 or n_cols <= 0:
        raise ValueError(f"scan region {scan.region} contains no pixels at pitch {scan.pixel_pitch_um}")
    bands = _bands(n_rows, workers)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda r: render_rows(em, scan, noise, r), bands))
    else:
        parts = [render_rows(em, scan, noise, r) for r in bands]
    return np.vstack(parts)


def render_llsi(em: EmitterMap, scan: ScanParams, noise: NoiseParams | None = None,
                workers: int = 1) -> Image16:
    """Render a 16-bit LLSI snapshot; metadata records scan, noise and quantization."""
    noise = noise or NoiseParams()
    values = render_llsi_values(em, scan, noise, workers)
    sigma = noise.sigma(scan)
    meta = {"kind": "llsi", **scan.meta(), "noise-floor": float(noise.noise_floor),
            "noise-sigma": float(sigma), "ref-dwell-ms": float(noise.ref_dwell_ms),
            "ref-bandpass-hz": float(noise.ref_bandpass_hz), "drift-gain-slope": float(noise.gain_slope),
            "drift-blur-um": float(noise.extra_blur_sigma_um), "seed": int(noise.seed)}
    return from_values(values, meta, margin=3.0 * sigma)


def _coverage(lo: float, hi: float, edges: np.ndarray) -> np.ndarray:
    """Fraction of each pixel interval [edges[i], edges[i+1]) covered by [lo, hi)."""
    a = np.clip(edges[:-1], lo, hi)
    b = np.clip(edges[1:], lo, hi)
    return (b - a) / (edges[1:] - edges[:-1])


def render_reflectance(fp: FloorPlan, scan: ScanParams) -> Image16:
    """Noise-free structural image: every cell rectangle at a kind-dependent level, PSF-blurred."""
    n_rows, n_cols = scan.shape
    if n_rows <= 0 or n_cols <= 0:
        raise ValueError(f"scan region {scan.region} contains no pixels at pitch {scan.pixel_pitch_um}")
    x0, y0 = scan.region[0], scan.region[1]
    p = scan.pixel_pitch_um
    xe = x0 + p * np.arange(n_cols + 1)
    ye = y0 + p * np.arange(n_rows + 1)
    bg = REFLECTANCE_LEVELS["background"]
    img = np.full((n_rows, n_cols), bg)
    for ref in sorted(fp.rects, key=lambda r: (r.tile, r.slice, r.element)):
        rx0, ry0, rx1, ry1 = fp.rects[ref]
        if rx1 <= xe[0] or rx0 >= xe[-1] or ry1 <= ye[0] or ry0 >= ye[-1]:
            continue
        cx = _coverage(rx0, rx1, xe)
        cy = _coverage(ry0, ry1, ye)
        img += (REFLECTANCE_LEVELS[fp.kinds[ref]] - bg) * np.outer(cy, cx)
    img = ndimage.gaussian_filter(img, scan.sigma_um / p, mode="nearest")
    meta = {"kind": "reflectance", **scan.meta()}
    return from_values(img, meta)
