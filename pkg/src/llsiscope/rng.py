"""Counter-based Gaussian noise keyed by ``(seed, x, y)``.

Each sample is a pure function of its key, so any partition of the image
produces the same values.  The mixer is SplitMix64's finalizer.
"""

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def mix64(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def uniform(seed: int, x: np.ndarray, y: np.ndarray, stream: int = 0) -> np.ndarray:
    """Uniform samples in the open interval (0, 1)."""
    x = np.asarray(x, dtype=np.uint64)
    y = np.asarray(y, dtype=np.uint64)
    with np.errstate(over="ignore"):
        key = mix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) * _GOLDEN + np.uint64(stream))
        h = mix64(key ^ mix64((y << np.uint64(32)) | x))
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * (1.0 / (1 << 53))


def normal(seed: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Standard normal samples via Box-Muller on two independent streams."""
    u1 = uniform(seed, x, y, 0)
    u2 = uniform(seed, x, y, 1)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def normal_field(seed: int, rows: range, width: int) -> np.ndarray:
    yy, xx = np.meshgrid(np.arange(rows.start, rows.stop), np.arange(width), indexing="ij")
    return normal(seed, xx, yy)
