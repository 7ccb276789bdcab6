"""Image planes, colour conversion, PSNR and PNG I/O.

Image planes are plain 2-D ``float64`` arrays holding intensities on the
[0, 255] scale. RGB images are ``(H, W, 3)`` arrays. Nothing is clamped or
quantized until an image is written to disk.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from PIL import Image

PEAK = 255.0

# BT.601 full-range (JPEG/JFIF) transform; chroma offset 128.
_RGB_TO_YCBCR = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168735892, -0.331264108, 0.5],
        [0.5, -0.418687589, -0.081312411],
    ]
)
_YCBCR_TO_RGB = np.linalg.inv(_RGB_TO_YCBCR)
_OFFSET = np.array([0.0, 128.0, 128.0])


class UnsupportedImageError(ValueError):
    """Raised for PNG files this module does not read (e.g. 16-bit)."""


def as_plane(x) -> np.ndarray:
    """Return ``x`` as a finite 2-D float64 array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D image plane, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("image plane contains non-finite values")
    return arr


def as_rgb(img) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) RGB image, got shape {arr.shape}")
    return arr


def rgb_to_ycbcr(img) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split an RGB image into luma, Cb and Cr planes (BT.601 full range)."""
    rgb = as_rgb(img)
    ycc = rgb @ _RGB_TO_YCBCR.T + _OFFSET
    return ycc[..., 0].copy(), ycc[..., 1].copy(), ycc[..., 2].copy()


def ycbcr_to_rgb(luma, cb, cr) -> np.ndarray:
    """Inverse of :func:`rgb_to_ycbcr`. No clamping is applied."""
    ycc = np.stack([as_plane(luma), as_plane(cb), as_plane(cr)], axis=-1)
    return (ycc - _OFFSET) @ _YCBCR_TO_RGB.T


def luminance(img) -> np.ndarray:
    return rgb_to_ycbcr(img)[0]


def psnr(x, ref) -> float:
    """Peak signal-to-noise ratio in dB with the peak fixed at 255.

    Returns ``math.inf`` when the two images are identical.
    """
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {ref.shape}")
    mse = float(np.mean((x - ref) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(PEAK**2 / mse)


def quantize(img) -> np.ndarray:
    """Clamp to [0, 255] and round to 8-bit integers."""
    return np.clip(np.rint(np.asarray(img, dtype=np.float64)), 0, 255).astype(np.uint8)


def load_png(path) -> np.ndarray:
    """Read an 8-bit PNG as an ``(H, W, 3)`` float array.

    Grayscale files are replicated across the three channels and alpha is
    dropped. Higher bit depths raise :class:`UnsupportedImageError`.
    """
    path = Path(path)
    with Image.open(path) as im:
        if im.mode in ("I", "I;16", "I;16B", "I;16L", "I;16N", "F"):
            raise UnsupportedImageError(f"{path}: unsupported bit depth (mode {im.mode})")
        if im.mode not in ("RGB", "L", "RGBA", "LA", "P", "1"):
            raise UnsupportedImageError(f"{path}: unsupported mode {im.mode}")
        rgb = im.convert("RGB")
        return np.asarray(rgb, dtype=np.float64).copy()


def save_png(img, path) -> None:
    """Write a plane (grayscale) or RGB image as an 8-bit PNG."""
    arr = quantize(img)
    if not (arr.ndim == 2 or (arr.ndim == 3 and arr.shape[2] == 3)):
        raise ValueError(f"cannot save array of shape {arr.shape} as PNG")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr).save(path)


def bicubic_resize(plane, shape: tuple[int, int]) -> np.ndarray:
    """Resize a plane with Catmull-Rom bicubic interpolation (no clamping)."""
    plane = as_plane(plane)
    im = Image.fromarray(plane.astype(np.float32))
    out = im.resize((shape[1], shape[0]), resample=Image.Resampling.BICUBIC)
    return np.asarray(out, dtype=np.float64)
