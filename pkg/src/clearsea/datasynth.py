"""Deterministic procedural datasets for training and evaluation.

Three image domains come out of here:

* clean scenes: flat-lit procedural compositions with a paired depth map,
* a synthetic underwater domain produced by the physical attenuation and
  back-scatter model ``I = J*exp(-eta*d) + A*(1 - exp(-eta*d))``,
* a "real-proxy" underwater domain produced by a structurally different
  recipe (per-channel gamma, additive color cast, vignette) so the two
  degraded domains differ in functional form, not just in parameters.

Everything is a pure function of its seed; building a dataset twice with
the same arguments yields byte-identical files.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import imageio
from .errors import DataError

DEPTH_SCALE = 3.0  # metres mapped to the full 16-bit range on disk


@dataclass(frozen=True)
class DegradationParams:
    """Attenuation coefficients and ambient light for the physical model."""

    eta: np.ndarray  # (3,) per-channel attenuation, > 0
    ambient: np.ndarray  # (3,) back-scattered light color in [0, 1]

    def __post_init__(self):
        eta = np.asarray(self.eta, dtype=np.float64)
        amb = np.asarray(self.ambient, dtype=np.float64)
        if eta.shape != (3,) or amb.shape != (3,):
            raise ValueError("eta and ambient must be length-3 vectors")
        if not np.isfinite(eta).all() or (eta <= 0).any():
            raise ValueError("eta must be finite and positive")
        if not np.isfinite(amb).all() or amb.min() < 0 or amb.max() > 1:
            raise ValueError("ambient must lie in [0, 1]")
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "ambient", amb)


@dataclass(frozen=True)
class RealProxyParams:
    """Degradation recipe for the stand-in real-world domain."""

    gamma: np.ndarray  # (3,) per-channel power curve, in [0.3, 3]
    cast: np.ndarray  # (3,) haze color in [0, 1]
    blend: float  # haze mix-in weight in [0, 1]
    vignette_strength: float  # corner darkening in [0, 1]

    def __post_init__(self):
        gamma = np.asarray(self.gamma, dtype=np.float64)
        cast = np.asarray(self.cast, dtype=np.float64)
        if gamma.shape != (3,) or cast.shape != (3,):
            raise ValueError("gamma and cast must be length-3 vectors")
        if gamma.min() < 0.3 or gamma.max() > 3.0:
            raise ValueError("gamma components must lie in [0.3, 3]")
        if cast.min() < 0 or cast.max() > 1:
            raise ValueError("cast must lie in [0, 1]")
        if not 0.0 <= self.blend <= 1.0 or not 0.0 <= self.vignette_strength <= 1.0:
            raise ValueError("blend and vignette_strength must lie in [0, 1]")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "cast", cast)


def _smooth_noise(rng: np.random.Generator, height: int, width: int, grid: int) -> np.ndarray:
    """Bilinearly upsampled coarse noise in [0, 1], used for texture and depth."""
    coarse = rng.random((grid, grid))
    ys = np.linspace(0, grid - 1, height)
    xs = np.linspace(0, grid - 1, width)
    y0 = np.minimum(ys.astype(int), grid - 2)
    x0 = np.minimum(xs.astype(int), grid - 2)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    a = coarse[y0][:, x0]
    b = coarse[y0][:, x0 + 1]
    c = coarse[y0 + 1][:, x0]
    d = coarse[y0 + 1][:, x0 + 1]
    return a * (1 - fy) * (1 - fx) + b * (1 - fy) * fx + c * fy * (1 - fx) + d * fy * fx


def render_clean_scene(seed: int, height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Procedural clean scene plus its depth map.

    Returns ``(image, depth)`` where image is float32 H×W×3 in [0, 1] and
    depth is float32 H×W in [0, 3].  The scene is a two-color background
    gradient, several solid shapes (so distinct colored regions always
    exist), and faint texture noise.  Depth is a smooth ramp plus
    low-frequency noise, deeper where the ramp points.
    """
    if height < 8 or width < 8:
        raise ValueError(f"scene must be at least 8×8, got {height}×{width}")
    rng = np.random.default_rng(seed)

    yy, xx = np.meshgrid(np.linspace(0, 1, height), np.linspace(0, 1, width), indexing="ij")
    theta = rng.uniform(0, 2 * np.pi)
    ramp = (np.cos(theta) * xx + np.sin(theta) * yy - min(np.cos(theta), 0) - min(np.sin(theta), 0)) / (
        abs(np.cos(theta)) + abs(np.sin(theta))
    )

    c0 = rng.uniform(0.15, 0.9, 3)
    c1 = rng.uniform(0.15, 0.9, 3)
    img = c0[None, None, :] * (1 - ramp[:, :, None]) + c1[None, None, :] * ramp[:, :, None]

    nshapes = int(rng.integers(4, 8))
    for _ in range(nshapes):
        color = rng.uniform(0.05, 0.95, 3)
        cy, cx = rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)
        ry, rx = rng.uniform(0.08, 0.3), rng.uniform(0.08, 0.3)
        if rng.random() < 0.5:
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        else:
            ang = rng.uniform(0, np.pi)
            u = (xx - cx) * np.cos(ang) + (yy - cy) * np.sin(ang)
            v = -(xx - cx) * np.sin(ang) + (yy - cy) * np.cos(ang)
            mask = (np.abs(u) <= rx) & (np.abs(v) <= ry)
        img[mask] = color

    img += (_smooth_noise(rng, height, width, 6)[:, :, None] - 0.5) * rng.uniform(0.02, 0.08)
    img = np.clip(img, 0.0, 1.0).astype(np.float32)

    dtheta = rng.uniform(0, 2 * np.pi)
    dramp = (xx - 0.5) * np.cos(dtheta) + (yy - 0.5) * np.sin(dtheta) + 0.5
    depth = 0.3 + 2.0 * dramp + 0.7 * _smooth_noise(rng, height, width, 4)
    depth = np.clip(depth, 0.0, DEPTH_SCALE).astype(np.float32)
    return img, depth


def degrade_jaffe(clean: np.ndarray, depth: np.ndarray, params: DegradationParams) -> np.ndarray:
    """Underwater image formation: attenuate the scene and mix in ambient light.

    Per pixel and channel: ``I = J*exp(-eta_c*d) + A_c*(1 - exp(-eta_c*d))``,
    a convex combination of the clean value and the ambient color, so the
    output needs no clamping when inputs are in range.  Evaluated in
    float64; quantization happens only at PNG write time.
    """
    clean = np.asarray(clean, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    if clean.ndim != 3 or clean.shape[2] != 3:
        raise ValueError(f"clean must be H×W×3, got {clean.shape}")
    if depth.shape != clean.shape[:2]:
        raise ValueError(f"depth shape {depth.shape} does not match image {clean.shape[:2]}")
    if not np.isfinite(depth).all() or depth.min() < 0:
        raise ValueError("depth must be finite and non-negative")
    trans = np.exp(-params.eta[None, None, :] * depth[:, :, None])
    amb = params.ambient[None, None, :]
    return clean * trans + amb * (1.0 - trans)


def degrade_real_proxy(clean: np.ndarray, params: RealProxyParams) -> np.ndarray:
    """The non-physical degraded domain: gamma curve, color cast, vignette.

    ``out = clip(blend*cast + (1-blend)*clean**gamma) * vignette_mask``
    where the mask equals 1 at the image center and falls off as
    ``1 - strength*r^2`` with radius normalized to the far corner.
    """
    clean = np.asarray(clean, dtype=np.float32)
    if clean.ndim != 3 or clean.shape[2] != 3:
        raise ValueError(f"clean must be H×W×3, got {clean.shape}")
    h, w = clean.shape[:2]
    curved = np.power(np.clip(clean, 0.0, 1.0), params.gamma[None, None, :])
    mixed = params.blend * params.cast[None, None, :] + (1.0 - params.blend) * curved
    mixed = np.clip(mixed, 0.0, 1.0)
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    r2 = ((yy - cy) ** 2 + (xx - cx) ** 2) / (cy**2 + cx**2)
    mask = 1.0 - params.vignette_strength * r2
    return (mixed * mask[:, :, None]).astype(np.float32)


def sample_degradation(rng: np.random.Generator) -> DegradationParams:
    """Draw physical-model parameters: red attenuates hardest, ambient is bluish."""
    eta = np.array(
        [rng.uniform(0.8, 1.6), rng.uniform(0.2, 0.8), rng.uniform(0.1, 0.5)]
    )
    ambient = np.array(
        [rng.uniform(0.0, 0.2), rng.uniform(0.2, 0.6), rng.uniform(0.3, 0.7)]
    )
    return DegradationParams(eta=eta, ambient=ambient)


def sample_real_proxy(rng: np.random.Generator) -> RealProxyParams:
    """Draw real-proxy parameters: greenish cast, mild gamma spread, vignette."""
    gamma = np.array(
        [rng.uniform(1.1, 1.8), rng.uniform(0.6, 1.0), rng.uniform(1.2, 2.0)]
    )
    cast = np.array(
        [rng.uniform(0.1, 0.25), rng.uniform(0.45, 0.75), rng.uniform(0.15, 0.3)]
    )
    return RealProxyParams(
        gamma=gamma,
        cast=cast,
        blend=rng.uniform(0.25, 0.55),
        vignette_strength=rng.uniform(0.2, 0.6),
    )


@dataclass
class SampleEntry:
    clean: str
    syn: str
    real: str
    depth: str
    split: str  # "train" or "heldout"


@dataclass
class DatasetManifest:
    seed: int
    count: int
    size: int
    heldout_fraction: float
    depth_scale: float
    entries: list[SampleEntry] = field(default_factory=list)

    def split(self, name: str) -> list[SampleEntry]:
        return [e for e in self.entries if e.split == name]


def save_manifest(manifest: DatasetManifest, path: str) -> None:
    lines = [
        f"seed = {manifest.seed}",
        f"count = {manifest.count}",
        f"size = {manifest.size}",
        f"heldout_fraction = {manifest.heldout_fraction}",
        f"depth_scale = {manifest.depth_scale}",
    ]
    for i, e in enumerate(manifest.entries):
        lines.append(f"sample.{i}.clean = {e.clean}")
        lines.append(f"sample.{i}.syn = {e.syn}")
        lines.append(f"sample.{i}.real = {e.real}")
        lines.append(f"sample.{i}.depth = {e.depth}")
        lines.append(f"sample.{i}.split = {e.split}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_manifest(path: str) -> DatasetManifest:
    if not os.path.exists(path):
        raise DataError(f"no such manifest: {path}")
    kv: dict[str, str] = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataError(f"malformed manifest line: {line!r}")
            key, _, value = line.partition("=")
            kv[key.strip()] = value.strip()
    try:
        count = int(kv["count"])
        manifest = DatasetManifest(
            seed=int(kv["seed"]),
            count=count,
            size=int(kv["size"]),
            heldout_fraction=float(kv["heldout_fraction"]),
            depth_scale=float(kv["depth_scale"]),
        )
        for i in range(count):
            manifest.entries.append(
                SampleEntry(
                    clean=kv[f"sample.{i}.clean"],
                    syn=kv[f"sample.{i}.syn"],
                    real=kv[f"sample.{i}.real"],
                    depth=kv[f"sample.{i}.depth"],
                    split=kv[f"sample.{i}.split"],
                )
            )
    except KeyError as exc:
        raise DataError(f"manifest {path} missing key {exc}") from exc
    return manifest


def build_dataset(
    seed: int,
    count: int,
    out_dir: str,
    size: int = 64,
    heldout_fraction: float = 0.25,
) -> DatasetManifest:
    """Write ``count`` (clean, syn, real, depth) quadruples plus a manifest.

    The last ``round(count*heldout_fraction)`` samples form the held-out
    split.  Every byte on disk is a pure function of the arguments.
    """
    if count < 4:
        raise ValueError(f"count must be at least 4, got {count}")
    for sub in ("clean", "syn", "real", "depth"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)

    n_held = int(round(count * heldout_fraction))
    n_held = min(max(n_held, 1), count - 1)
    manifest = DatasetManifest(
        seed=seed,
        count=count,
        size=size,
        heldout_fraction=heldout_fraction,
        depth_scale=DEPTH_SCALE,
    )
    for i in range(count):
        scene_seed = np.random.SeedSequence([seed, i]).generate_state(1)[0]
        prng = np.random.default_rng(np.random.SeedSequence([seed, i, 1]))
        clean, depth = render_clean_scene(int(scene_seed), size, size)
        syn = degrade_jaffe(clean, depth, sample_degradation(prng))
        real = degrade_real_proxy(clean, sample_real_proxy(prng))

        entry = SampleEntry(
            clean=f"clean/{i:04d}.png",
            syn=f"syn/{i:04d}.png",
            real=f"real/{i:04d}.png",
            depth=f"depth/{i:04d}.png",
            split="heldout" if i >= count - n_held else "train",
        )
        imageio.save_rgb(os.path.join(out_dir, entry.clean), clean)
        imageio.save_rgb(os.path.join(out_dir, entry.syn), syn)
        imageio.save_rgb(os.path.join(out_dir, entry.real), real)
        imageio.save_depth16(os.path.join(out_dir, entry.depth), depth, DEPTH_SCALE)
        manifest.entries.append(entry)

    save_manifest(manifest, os.path.join(out_dir, "manifest.txt"))
    return manifest
