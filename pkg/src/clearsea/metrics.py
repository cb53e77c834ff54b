"""Image quality metrics and the batch evaluation harness.

Full-reference: :func:`psnr` and :func:`ssim` (the latter is the same
computation the training objective uses, wrapped to return a float).
No-reference: :func:`uiqm` and :func:`uciqe`.

Published UIQM/UCIQE scorers disagree in their fine print, so the
conventions here are fixed once and documented:

* UIQM = 0.0282*UICM + 0.2953*UISM + 3.5753*UIConM, computed on a
  0..255 intensity scale (inputs in [0, 1] are scaled, not quantized).
* UICM uses alpha-trimmed means (0.1 both tails) of the RG = R-G and
  YB = (R+G)/2 - B planes; variances are taken over all pixels about
  the trimmed means.
* UISM and UIConM pool over complete 8x8 blocks (remainders cropped).
  Sobel magnitudes are left unnormalized so constant images score 0.
* UIConM uses PLIP difference/sum with gamma = k = 1026.
* UCIQE = 0.4680*sigma_chroma + 0.2745*(p99 - p1 of lightness)
  + 0.2576*mean_saturation in the Lab-style space below, with
  lightness and chroma on a 0..1 scale.

The color space for UCIQE is CIE Lab over linear sRGB primaries with
one deliberate change: the white point is the row sums of the
RGB->XYZ matrix (the XYZ of unit gray), and the normalized ratios are
evaluated in a difference form anchored at the green channel.  That
makes the neutral axis exact in floating point, so a gray image has
chroma and saturation identically zero.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import engine, imageio, losses
from .errors import DataError

PSNR_CAP = 99.0  # reported for zero MSE; keeps batch means finite

UIQM_COEFFS = (0.0282, 0.2953, 3.5753)
UICM_COEFFS = (-0.0268, 0.1586)
UIQM_BLOCK = 8
UIQM_TRIM = 0.1
PLIP_GAMMA = 1026.0
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

UCIQE_COEFFS = (0.4680, 0.2745, 0.2576)

FULL_REFERENCE = ("psnr", "ssim")
NO_REFERENCE = ("uiqm", "uciqe")
METRIC_NAMES = FULL_REFERENCE + NO_REFERENCE


def _as_image(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected an HxWx3 image, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("image contains non-finite values")
    return arr


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB over the [0, 1] range.

    MSE is pooled over all pixels and channels; identical inputs
    return the 99.0 dB cap.
    """
    a, b = _as_image(a), _as_image(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(10.0 * math.log10(1.0 / mse), PSNR_CAP)


def ssim(a, b, window: int = 7) -> float:
    """Float view of the objective's structural similarity."""
    with engine.no_grad():
        return float(losses.ssim(_as_image(a).astype(np.float32), _as_image(b).astype(np.float32), window).data)


# -- UIQM ----------------------------------------------------------------


def _trimmed_mean(values: np.ndarray, trim: float) -> float:
    v = np.sort(values)
    k = v.size
    lo = math.ceil(trim * k)
    hi = math.floor(trim * k)
    return float(v[lo : k - hi].mean())


def _uicm(x255: np.ndarray) -> float:
    r = x255[:, :, 0].ravel()
    g = x255[:, :, 1].ravel()
    b = x255[:, :, 2].ravel()
    rg = r - g
    yb = 0.5 * (r + g) - b
    mu_rg = _trimmed_mean(rg, UIQM_TRIM)
    mu_yb = _trimmed_mean(yb, UIQM_TRIM)
    var_rg = float(np.mean((rg - mu_rg) ** 2))
    var_yb = float(np.mean((yb - mu_yb) ** 2))
    c_mu, c_var = UICM_COEFFS
    return c_mu * math.hypot(mu_rg, mu_yb) + c_var * math.sqrt(var_rg + var_yb)


def _block_minmax(plane: np.ndarray, block: int) -> tuple[np.ndarray, np.ndarray]:
    k1, k2 = plane.shape[0] // block, plane.shape[1] // block
    tiles = plane[: k1 * block, : k2 * block].reshape(k1, block, k2, block)
    return tiles.max(axis=(1, 3)), tiles.min(axis=(1, 3))


def _eme(plane: np.ndarray, block: int) -> float:
    """Mean log max/min contrast over complete blocks.

    Blocks whose minimum is zero contribute nothing (the log is
    undefined there); the 2/(k1*k2) weight follows the published form.
    """
    mx, mn = _block_minmax(plane, block)
    ok = mn > 0
    if not ok.any():
        return 0.0
    return float(2.0 / mx.size * np.log(mx[ok] / mn[ok]).sum())


def _uism(x255: np.ndarray, block: int) -> float:
    total = 0.0
    for c, lam in enumerate(LUMA_WEIGHTS):
        ch = x255[:, :, c]
        gx = ndimage.sobel(ch, axis=0, mode="reflect")
        gy = ndimage.sobel(ch, axis=1, mode="reflect")
        total += lam * _eme(np.hypot(gx, gy) * ch, block)
    return total


def _uiconm(x255: np.ndarray, block: int) -> float:
    k1, k2 = x255.shape[0] // block, x255.shape[1] // block
    tiles = x255[: k1 * block, : k2 * block, :].reshape(k1, block, k2, block, 3)
    mx = tiles.max(axis=(1, 3, 4))
    mn = tiles.min(axis=(1, 3, 4))
    top = PLIP_GAMMA * (mx - mn) / (PLIP_GAMMA - mn)
    bot = mx + mn - mx * mn / PLIP_GAMMA
    ok = (top > 0) & (bot > 0)
    if not ok.any():
        return 0.0
    m = top[ok] / bot[ok]  # always in (0, 1], so m*log(m) <= 0
    return float(-np.sum(m * np.log(m)) / (k1 * k2))


@dataclass(frozen=True)
class UiqmScore:
    uicm: float
    uism: float
    uiconm: float
    value: float


def uiqm(img, block: int = UIQM_BLOCK) -> UiqmScore:
    """Colorfulness + sharpness + contrast score with its components."""
    arr = _as_image(img)
    if arr.shape[0] < 2 * block or arr.shape[1] < 2 * block:
        raise ValueError(f"uiqm needs at least {2 * block}x{2 * block} images, got {arr.shape[0]}x{arr.shape[1]}")
    x255 = arr * 255.0
    c1, c2, c3 = UIQM_COEFFS
    uicm_v = _uicm(x255)
    uism_v = _uism(x255, block)
    uiconm_v = _uiconm(x255, block)
    return UiqmScore(uicm_v, uism_v, uiconm_v, c1 * uicm_v + c2 * uism_v + c3 * uiconm_v)


# -- UCIQE and its color space --------------------------------------------

# Linear sRGB -> XYZ (IEC 61966-2-1 primaries, D65 scaling).  The white
# point is the row sums of this matrix, i.e. the XYZ of RGB (1,1,1).
_XYZ_FROM_LINRGB = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ],
    dtype=np.float64,
)
_RATIO_MATRIX = _XYZ_FROM_LINRGB / _XYZ_FROM_LINRGB.sum(axis=1, keepdims=True)
_RATIO_INV = np.linalg.inv(_RATIO_MATRIX)
_LAB_DELTA = 6.0 / 29.0

_SRGB_LIN_KNEE = 0.04045
_LIN_SRGB_KNEE = 0.0031308


def _srgb_to_linear(c: np.ndarray) -> np.ndarray:
    return np.where(c <= _SRGB_LIN_KNEE, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def _linear_to_srgb(c: np.ndarray) -> np.ndarray:
    return np.where(c <= _LIN_SRGB_KNEE, 12.92 * c, 1.055 * np.maximum(c, 0.0) ** (1.0 / 2.4) - 0.055)


def _lab_f(t: np.ndarray) -> np.ndarray:
    return np.where(t > _LAB_DELTA**3, np.cbrt(t), t / (3.0 * _LAB_DELTA**2) + 4.0 / 29.0)


def _lab_f_inv(u: np.ndarray) -> np.ndarray:
    return np.where(u > _LAB_DELTA, u**3, 3.0 * _LAB_DELTA**2 * (u - 4.0 / 29.0))


def rgb_to_lab(img) -> np.ndarray:
    """HxWx3 in [0, 1] to (L, a, b) with L in [0, 100].

    The white-normalized XYZ ratios are evaluated as
    ``g + n_r*(r - g) + n_b*(b - g)`` per row of the normalized matrix,
    which is algebraically the matrix product but keeps gray pixels
    exactly on the neutral axis (a = b = 0 to the last bit).
    """
    arr = _as_image(img)
    lin = _srgb_to_linear(np.clip(arr, 0.0, 1.0))
    r, g, b = lin[..., 0], lin[..., 1], lin[..., 2]
    dr, db = r - g, b - g
    f = [_lab_f(g + _RATIO_MATRIX[i, 0] * dr + _RATIO_MATRIX[i, 2] * db) for i in range(3)]
    lab = np.empty_like(arr)
    lab[..., 0] = 116.0 * f[1] - 16.0
    lab[..., 1] = 500.0 * (f[0] - f[1])
    lab[..., 2] = 200.0 * (f[1] - f[2])
    return lab


def lab_to_rgb(lab) -> np.ndarray:
    """Inverse of :func:`rgb_to_lab`; out-of-gamut values are clipped."""
    arr = np.asarray(lab, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected an HxWx3 lab array, got shape {arr.shape}")
    fy = (arr[..., 0] + 16.0) / 116.0
    fx = fy + arr[..., 1] / 500.0
    fz = fy - arr[..., 2] / 200.0
    ratios = np.stack([_lab_f_inv(f) for f in (fx, fy, fz)], axis=-1)
    lin = np.clip(ratios @ _RATIO_INV.T, 0.0, 1.0)
    return _linear_to_srgb(lin)


def uciqe(img) -> float:
    """Chroma spread + lightness contrast + mean saturation."""
    lab = rgb_to_lab(img)
    lum = lab[..., 0] / 100.0
    chroma = np.hypot(lab[..., 1], lab[..., 2]) / 100.0
    sigma_c = float(chroma.std())
    con_l = float(np.quantile(lum, 0.99) - np.quantile(lum, 0.01))
    denom = np.sqrt(chroma * chroma + lum * lum)
    sat = np.divide(chroma, denom, out=np.zeros_like(chroma), where=denom > 0)
    c1, c2, c3 = UCIQE_COEFFS
    return c1 * sigma_c + c2 * con_l + c3 * float(sat.mean())


# -- batch harness ---------------------------------------------------------


@dataclass
class MetricReport:
    metrics: tuple[str, ...]
    per_image: dict[str, dict[str, float]]
    means: dict[str, float]

    def ids(self) -> list[str]:
        return sorted(self.per_image)

    def write_csv(self, path: str) -> None:
        lines = ["id," + ",".join(self.metrics)]
        for pid in self.ids():
            row = self.per_image[pid]
            lines.append(pid + "," + ",".join(repr(row[m]) for m in self.metrics))
        lines.append("mean," + ",".join(repr(self.means[m]) for m in self.metrics))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def _parse_eval_manifest(path: str) -> dict[str, dict[str, str]]:
    if not os.path.exists(path):
        raise DataError(f"no such manifest: {path}")
    entries: dict[str, dict[str, str]] = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataError(f"malformed manifest line: {line!r}")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not key.startswith("pair."):
                raise DataError(f"unexpected manifest key {key!r} (want pair.<id>.image / pair.<id>.reference)")
            pid, _, field = key[len("pair.") :].rpartition(".")
            if not pid or field not in ("image", "reference"):
                raise DataError(f"unexpected manifest key {key!r}")
            entries.setdefault(pid, {})[field] = value
    return entries


def evaluate_folder(manifest_path: str, metric_names, out_csv: str | None = None) -> MetricReport:
    """Score every image listed in a pairs manifest.

    The manifest holds ``pair.<id>.image = path`` lines and, for
    full-reference metrics, matching ``pair.<id>.reference = path``
    lines; paths are relative to the manifest.  Rows are ordered by id
    and a final mean row closes the report.
    """
    names = tuple(dict.fromkeys(metric_names))
    if not names:
        raise ValueError("no metrics requested")
    unknown = [n for n in names if n not in METRIC_NAMES]
    if unknown:
        raise ValueError(f"unknown metrics: {', '.join(unknown)} (known: {', '.join(METRIC_NAMES)})")
    entries = _parse_eval_manifest(manifest_path)
    if not entries:
        raise DataError(f"evaluation manifest {manifest_path} lists no images")
    base = os.path.dirname(os.path.abspath(manifest_path))
    needs_ref = any(n in FULL_REFERENCE for n in names)

    per_image: dict[str, dict[str, float]] = {}
    for pid in sorted(entries):
        fieldmap = entries[pid]
        if "image" not in fieldmap:
            raise DataError(f"pair {pid!r} has no image path")
        img = imageio.load_rgb(os.path.join(base, fieldmap["image"]))
        ref = None
        if needs_ref:
            if "reference" not in fieldmap:
                raise DataError(f"pair {pid!r} lacks a reference image, required for full-reference metrics")
            ref = imageio.load_rgb(os.path.join(base, fieldmap["reference"]))
        row: dict[str, float] = {}
        for name in names:
            try:
                if name == "psnr":
                    row[name] = psnr(img, ref)
                elif name == "ssim":
                    row[name] = ssim(img, ref)
                elif name == "uiqm":
                    row[name] = uiqm(img).value
                else:
                    row[name] = uciqe(img)
            except ValueError as exc:
                raise DataError(f"pair {pid!r}: {exc}") from exc
        per_image[pid] = row

    means = {n: float(np.mean([per_image[i][n] for i in per_image])) for n in names}
    report = MetricReport(names, per_image, means)
    if out_csv is not None:
        report.write_csv(out_csv)
    return report
