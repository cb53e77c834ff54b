"""PNG input/output.

Images travel through the package as float32 H×W×3 arrays in [0, 1] and
hit disk as 8-bit RGB PNG; depth maps are float32 H×W arrays stored as
16-bit grayscale PNG under a fixed linear scale.  Write order and codec
settings are deterministic so identical arrays produce identical bytes.
"""
from __future__ import annotations

import io
import os

import numpy as np
from PIL import Image as PILImage

from .errors import DataError


def encode_rgb(img: np.ndarray) -> bytes:
    """Encode a float [0,1] H×W×3 array as PNG bytes."""
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DataError(f"expected H×W×3 image, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise DataError("image contains non-finite values")
    q = np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    buf = io.BytesIO()
    PILImage.fromarray(q, mode="RGB").save(buf, format="PNG", optimize=False)
    return buf.getvalue()


def save_rgb(path: str, img: np.ndarray) -> None:
    data = encode_rgb(img)
    with open(path, "wb") as fh:
        fh.write(data)


def load_rgb(path: str) -> np.ndarray:
    """Read an 8-bit RGB PNG as float32 in [0, 1]."""
    if not os.path.exists(path):
        raise DataError(f"no such image file: {path}")
    try:
        with PILImage.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    except Exception as exc:
        raise DataError(f"cannot decode image {path}: {exc}") from exc
    if arr.ndim != 3 or arr.shape[0] < 8 or arr.shape[1] < 8:
        raise DataError(f"image {path} smaller than 8×8")
    return arr / 255.0


def decode_rgb(data: bytes) -> np.ndarray:
    """Decode PNG bytes to float32 [0, 1] H×W×3."""
    try:
        with PILImage.open(io.BytesIO(data)) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    except Exception as exc:
        raise DataError(f"cannot decode image bytes: {exc}") from exc
    return arr / 255.0


def save_depth16(path: str, depth: np.ndarray, scale: float) -> None:
    """Store a non-negative depth map as 16-bit grayscale, depth/scale in [0,1]."""
    arr = np.asarray(depth)
    if arr.ndim != 2:
        raise DataError(f"expected H×W depth map, got shape {arr.shape}")
    if not np.isfinite(arr).all() or arr.min() < 0:
        raise DataError("depth map must be finite and non-negative")
    q = np.round(np.clip(arr / scale, 0.0, 1.0) * 65535.0).astype(np.uint16)
    PILImage.fromarray(q).save(path, format="PNG", optimize=False)


def load_depth16(path: str, scale: float) -> np.ndarray:
    if not os.path.exists(path):
        raise DataError(f"no such depth file: {path}")
    with PILImage.open(path) as im:
        arr = np.asarray(im, dtype=np.float32)
    return arr / 65535.0 * scale
