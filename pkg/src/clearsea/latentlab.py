"""Style-latent analysis and manipulation.

The enhancement level of a decoded image is controlled by moving a
style vector along the line toward its clean counterpart,
``z + alpha*(z_clean - z)``.  The rest of this module harvests style
vectors over a dataset, measures how well the domain groups separate
(silhouette and centroid distances in the native 8-dim space), and
projects them to 2D for plotting.  The 2D map is presentation only;
no statistic is computed in it.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image, ImageDraw

from . import datasynth, imageio
from .errors import DataError
from .model import CLEAN, INTERP, REAL, SYN, EnhancementModel, StyleLatent

TAG_SYN = SYN
TAG_REAL = REAL
TAG_CLEAN_FROM_SYN = "CLEAN_FROM_SYN"
TAG_CLEAN_FROM_REAL = "CLEAN_FROM_REAL"
COLLECTION_TAGS = (TAG_SYN, TAG_REAL, TAG_CLEAN_FROM_SYN, TAG_CLEAN_FROM_REAL)


def manipulate_style(z: StyleLatent, z_clean: StyleLatent, alpha: float) -> StyleLatent:
    """Slide a degraded style toward its clean counterpart.

    Returns ``z + alpha*(z_clean - z)`` in float64.  alpha may leave
    [0, 1]: below 0 exaggerates the degradation, above 1 overshoots
    the enhancement.  The result keeps z's tag at alpha = 0, becomes
    CLEAN at alpha = 1, and is tagged INTERP anywhere else.
    """
    if z.domain not in (SYN, REAL):
        raise ValueError(f"manipulation starts from a SYN or REAL style, got {z.domain!r}")
    if z_clean.domain != CLEAN:
        raise ValueError(f"z_clean must be tagged CLEAN, got {z_clean.domain!r}")
    if z.vector.shape != z_clean.vector.shape:
        raise ValueError(f"length mismatch: {z.vector.shape[0]} vs {z_clean.vector.shape[0]}")
    a = float(alpha)
    if not np.isfinite(a):
        raise ValueError(f"alpha must be finite, got {alpha!r}")
    start = z.vector.astype(np.float64)
    vec = start + a * (z_clean.vector.astype(np.float64) - start)
    if a == 0.0:
        tag = z.domain
    elif a == 1.0:
        tag = CLEAN
    else:
        tag = INTERP
    return StyleLatent(vector=vec, domain=tag)


@dataclass
class LatentRecord:
    sample_id: str
    tag: str
    vector: np.ndarray


@dataclass
class LatentCollection:
    records: list[LatentRecord]

    def __post_init__(self):
        dims = {r.vector.shape for r in self.records}
        if len(dims) > 1:
            raise ValueError(f"mixed latent lengths in collection: {sorted(dims)}")
        for r in self.records:
            if r.tag not in COLLECTION_TAGS:
                raise ValueError(f"unknown collection tag {r.tag!r}")

    def __len__(self) -> int:
        return len(self.records)

    def by_tag(self, tag: str) -> list[LatentRecord]:
        return [r for r in self.records if r.tag == tag]

    def matrix(self) -> np.ndarray:
        return np.stack([r.vector.astype(np.float64) for r in self.records])

    def save_csv(self, path: str) -> None:
        dim = self.records[0].vector.shape[0] if self.records else 0
        header = "id,tag," + ",".join(f"z{i}" for i in range(dim))
        lines = [header]
        for r in self.records:
            lines.append(f"{r.sample_id},{r.tag}," + ",".join(repr(float(v)) for v in r.vector))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def load_collection_csv(path: str) -> LatentCollection:
    if not os.path.exists(path):
        raise DataError(f"no such latent csv: {path}")
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("id,tag,"):
        raise DataError(f"{path} is not a latent collection csv")
    records = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) < 3:
            raise DataError(f"malformed latent row: {ln!r}")
        try:
            vec = np.array([float(p) for p in parts[2:]], dtype=np.float64)
        except ValueError as exc:
            raise DataError(f"malformed latent row: {ln!r}") from exc
        records.append(LatentRecord(sample_id=parts[0], tag=parts[1], vector=vec))
    try:
        return LatentCollection(records)
    except ValueError as exc:
        raise DataError(str(exc)) from exc


def harvest_latents(manifest_path: str, model: EnhancementModel, split: str | None = None) -> LatentCollection:
    """Encode every sample's SYN and REAL styles plus their clean transforms.

    N samples yield 4N records sharing the sample's id, so each clean
    latent can be traced back to its source.
    """
    manifest = datasynth.load_manifest(manifest_path)
    base = os.path.dirname(os.path.abspath(manifest_path))
    records = []
    for i, entry in enumerate(manifest.entries):
        if split is not None and entry.split != split:
            continue
        sid = f"{i:04d}"
        z_syn = model.encode_style(imageio.load_rgb(os.path.join(base, entry.syn)), SYN)
        z_real = model.encode_style(imageio.load_rgb(os.path.join(base, entry.real)), REAL)
        records.append(LatentRecord(sid, TAG_SYN, z_syn.vector.copy()))
        records.append(LatentRecord(sid, TAG_REAL, z_real.vector.copy()))
        records.append(LatentRecord(sid, TAG_CLEAN_FROM_SYN, model.transform_style(z_syn).vector.copy()))
        records.append(LatentRecord(sid, TAG_CLEAN_FROM_REAL, model.transform_style(z_real).vector.copy()))
    if not records:
        raise DataError(f"no samples to harvest (split={split!r})")
    return LatentCollection(records)


@dataclass
class EmbeddingResult:
    coords: np.ndarray  # (N, 2), row order follows the collection
    silhouette: float  # over {SYN, REAL, CLEAN}; clean tags merge into one group
    degenerate: bool  # every pairwise distance was zero
    centroid_distances: dict[tuple[str, str], float]  # keyed by sorted raw-tag pairs


def _merged_group(tag: str) -> str:
    return CLEAN if tag.startswith("CLEAN") else tag


def _silhouette(x: np.ndarray, labels: list[str]) -> tuple[float, bool]:
    """Mean silhouette width in the native space.

    Points with zero intra- and inter-cluster distance score 0; the
    collection is flagged degenerate when that holds everywhere.
    """
    d = np.sqrt(np.maximum(((x[:, None, :] - x[None, :, :]) ** 2).sum(-1), 0.0))
    labs = np.array(labels)
    scores = np.zeros(len(x))
    denominators = np.zeros(len(x))
    for i in range(len(x)):
        own = labs == labs[i]
        own[i] = False
        a_i = d[i, own].mean()
        b_i = min(d[i, labs == other].mean() for other in set(labels) if other != labs[i])
        denom = max(a_i, b_i)
        denominators[i] = denom
        if denom > 0:
            scores[i] = (b_i - a_i) / denom
    degenerate = bool((denominators == 0).all())
    return float(scores.mean()), degenerate


def _principal_plane(x: np.ndarray, seed: int, iters: int = 200) -> np.ndarray:
    """Orthonormal basis of the top-2 principal subspace.

    Subspace iteration from a seeded orthonormal start; the plane is
    the data's, the in-plane orientation follows the seed.
    """
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((x.shape[1], 2)))
    for _ in range(iters):
        q, _ = np.linalg.qr(cov @ q)
    return q


def embed_and_score(col: LatentCollection, seed: int) -> EmbeddingResult:
    """Project to 2D and measure group separation in the 8-dim space."""
    if not col.records:
        raise ValueError("empty latent collection")
    x = col.matrix()
    merged = [_merged_group(r.tag) for r in col.records]
    counts: dict[str, int] = {}
    for m in merged:
        counts[m] = counts.get(m, 0) + 1
    if len(counts) < 2:
        raise ValueError("need at least two tag groups to score separation")
    small = {g: n for g, n in counts.items() if n < 3}
    if small:
        raise ValueError(f"every tag group needs at least 3 latents, got {small}")

    silhouette, degenerate = _silhouette(x, merged)
    coords = (x - x.mean(axis=0)) @ _principal_plane(x, seed)

    centroids = {}
    for tag in sorted({r.tag for r in col.records}):
        centroids[tag] = np.mean([r.vector.astype(np.float64) for r in col.by_tag(tag)], axis=0)
    tags = sorted(centroids)
    distances = {}
    for i, t1 in enumerate(tags):
        for t2 in tags[i + 1 :]:
            distances[(t1, t2)] = float(np.linalg.norm(centroids[t1] - centroids[t2]))
    return EmbeddingResult(coords=coords, silhouette=silhouette, degenerate=degenerate, centroid_distances=distances)


def save_embedding_csv(col: LatentCollection, result: EmbeddingResult, path: str) -> None:
    lines = ["id,tag,x,y"]
    for r, (cx, cy) in zip(col.records, result.coords):
        lines.append(f"{r.sample_id},{r.tag},{cx!r},{cy!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


_TAG_COLORS = {
    TAG_SYN: (31, 119, 180),
    TAG_REAL: (214, 39, 40),
    TAG_CLEAN_FROM_SYN: (44, 160, 44),
    TAG_CLEAN_FROM_REAL: (148, 103, 189),
}


def render_scatter(col: LatentCollection, result: EmbeddingResult, path: str, size: int = 480) -> None:
    """Plot the 2D embedding, one color per collection tag."""
    margin = 30
    img = Image.new("RGB", (size, size), (255, 255, 255))
    draw = ImageDraw.Draw(img)
    coords = result.coords
    lo = coords.min(axis=0)
    span = coords.max(axis=0) - lo
    span[span == 0] = 1.0  # degenerate axis: park everything mid-canvas
    for r, (cx, cy) in zip(col.records, coords):
        px = margin + (cx - lo[0]) / span[0] * (size - 2 * margin)
        py = size - margin - (cy - lo[1]) / span[1] * (size - 2 * margin)
        color = _TAG_COLORS.get(r.tag, (0, 0, 0))
        draw.ellipse([px - 3, py - 3, px + 3, py + 3], fill=color)
    for i, (tag, color) in enumerate(_TAG_COLORS.items()):
        y = 8 + 14 * i
        draw.rectangle([8, y, 18, y + 10], fill=color)
        draw.text((24, y - 1), tag, fill=(0, 0, 0))
    img.save(path, format="PNG")


def color_cast_index(img: np.ndarray) -> float:
    """Mean blue-minus-red difference; the sweep's scalar proxy.

    Signed on purpose: positive means a blue or cyan cast, negative a warm
    one, and removing a water-column cast drives the value down through
    zero.  A magnitude (say ``|B - R|``) would fold at the neutral crossing
    and read a slight warm overshoot as the cast coming back.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected an HxWx3 image, got shape {arr.shape}")
    return float((arr[:, :, 2] - arr[:, :, 0]).mean())


def alpha_sweep_casts(model: EnhancementModel, images: list[np.ndarray], domain: str, alphas) -> list[float]:
    """Mean color-cast index over ``images`` at each enhancement level."""
    if not images:
        raise ValueError("alpha sweep needs at least one image")
    alphas = list(alphas)
    totals = np.zeros(len(alphas))
    for image in images:
        content = model.encode_content(image)
        z = model.encode_style(image, domain)
        z_clean = model.transform_style(z)
        for k, a in enumerate(alphas):
            out = model.decode(content, manipulate_style(z, z_clean, a))
            totals[k] += color_cast_index(out)
    return [float(t / len(images)) for t in totals]
