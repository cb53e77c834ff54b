"""Training objectives.

Every loss is a pure differentiable function returning a scalar
:class:`~clearsea.engine.Tensor`.  Images are accepted either as graph
tensors shaped (B, 3, H, W) or as plain H×W×3 numpy arrays (tests use
the latter).  The two λ-weighted aggregates work like this:

* translation side: ``tran = gan_g + lambda_self*self + cyc``
* enhancement side: ``en = lambda_latent*latent + lambda_tv*tv +
  lambda_per*per + lambda_iq*(ssim + pixel)``
* total = tran + en (the discriminator's own loss is optimized
  separately and never enters the total).
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import engine
from .engine import Tensor
from .model import CLEAN, StyleLatent

TV_EPS = 1e-8
GAN_LOG_EPS = 1e-6


@dataclass(frozen=True)
class LossWeights:
    lambda_self: float = 10.0
    lambda_latent: float = 1.0
    lambda_tv: float = 1e-4
    lambda_per: float = 0.5
    lambda_iq: float = 10.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{f.name} must be finite and non-negative, got {v}")


@dataclass
class LossReport:
    """Scalar value of every term plus the aggregates, as plain floats."""

    cyc: float = 0.0
    self_rec: float = 0.0
    gan_g: float = 0.0
    gan_d: float = 0.0
    pixel: float = 0.0
    ssim: float = 0.0
    per: float = 0.0
    tv: float = 0.0
    latent: float = 0.0
    iq: float = 0.0
    tran: float = 0.0
    en: float = 0.0
    total: float = 0.0

    CSV_COLUMNS = (
        "cyc", "self", "gan_g", "gan_d", "pixel", "ssim",
        "per", "tv", "latent", "iq", "tran", "en", "total",
    )

    def csv_row(self) -> list[float]:
        return [
            self.cyc, self.self_rec, self.gan_g, self.gan_d, self.pixel,
            self.ssim, self.per, self.tv, self.latent, self.iq,
            self.tran, self.en, self.total,
        ]

    def finite(self) -> bool:
        return all(np.isfinite(v) for v in self.csv_row())


def _img(x) -> Tensor:
    """Coerce an image argument to a (B, C, H, W) tensor."""
    if isinstance(x, Tensor):
        if x.data.ndim != 4:
            raise ValueError(f"expected 4-d image tensor, got shape {x.data.shape}")
        return x
    arr = np.asarray(x, dtype=np.float32)
    if arr.ndim == 3:
        arr = np.transpose(arr, (2, 0, 1))[None]
    if arr.ndim != 4:
        raise ValueError(f"expected image array, got shape {arr.shape}")
    return Tensor(np.ascontiguousarray(arr))


def _check_same_shape(*ts: Tensor) -> None:
    shapes = {t.data.shape for t in ts}
    if len(shapes) > 1:
        raise ValueError(f"shape mismatch between images: {sorted(shapes)}")


def mae(a, b) -> Tensor:
    a, b = _img(a), _img(b)
    _check_same_shape(a, b)
    return engine.absolute(a - b).mean()


def loss_cycle(x, y, x_cyc, y_cyc) -> Tensor:
    """Both cycle-reconstruction errors, summed."""
    return mae(x_cyc, x) + mae(y_cyc, y)


def loss_self(x, x_rec, y, y_rec) -> Tensor:
    """Both within-domain reconstruction errors, summed."""
    return mae(x_rec, x) + mae(y_rec, y)


def loss_lsgan(scores_real, scores_fake, side: str, form: str = "lsgan") -> Tensor:
    """Adversarial objective over multi-scale score maps.

    ``side`` picks whose loss this is.  The default least-squares form
    drives real scores to 1 and fake scores to 0 (discriminator) or fake
    scores to 1 (generator).  ``form="log"`` switches to the saturating
    cross-entropy variant for ablation; scores are squashed through a
    sigmoid there since the discriminator emits raw values.
    """
    if side not in ("generator", "discriminator"):
        raise ValueError(f"side must be 'generator' or 'discriminator', got {side!r}")
    if form not in ("lsgan", "log"):
        raise ValueError(f"unknown adversarial form {form!r}")
    if not scores_fake or (side == "discriminator" and not scores_real):
        raise ValueError("empty score list")
    total = None
    if side == "discriminator":
        for s_r, s_f in zip(scores_real, scores_fake, strict=True):
            if form == "lsgan":
                term = ((s_r - 1.0) * (s_r - 1.0)).mean() + (s_f * s_f).mean()
            else:
                p_r = engine.clamp_min(engine.sigmoid(s_r), GAN_LOG_EPS)
                p_f = engine.clamp_min(1.0 - engine.sigmoid(s_f), GAN_LOG_EPS)
                term = -engine.log(p_r).mean() - engine.log(p_f).mean()
            total = term if total is None else total + term
    else:
        for s_f in scores_fake:
            if form == "lsgan":
                term = ((s_f - 1.0) * (s_f - 1.0)).mean()
            else:
                p_f = engine.clamp_min(engine.sigmoid(s_f), GAN_LOG_EPS)
                term = -engine.log(p_f).mean()
            total = term if total is None else total + term
    return total


def loss_pixel(enh_a, enh_b, target) -> Tensor:
    """L1 fidelity of both enhanced images against the clean target."""
    return mae(enh_a, target) + mae(enh_b, target)


def ssim(a, b, window: int = 7, c1: float = 0.01**2, c2: float = 0.03**2) -> Tensor:
    """Mean local structural similarity under uniform (box) windows.

    Statistics are computed per channel over every valid window (no
    padding), then averaged across windows and channels.
    """
    a, b = _img(a), _img(b)
    _check_same_shape(a, b)
    h, w = a.data.shape[2], a.data.shape[3]
    if window % 2 == 0:
        raise ValueError(f"ssim window must be odd, got {window}")
    if window > min(h, w):
        raise ValueError(f"ssim window {window} exceeds image extent {h}x{w}")
    mu_a = engine.box_mean(a, window)
    mu_b = engine.box_mean(b, window)
    var_a = engine.box_mean(a * a, window) - mu_a * mu_a
    var_b = engine.box_mean(b * b, window) - mu_b * mu_b
    cov = engine.box_mean(a * b, window) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return (num / den).mean()


def loss_ssim_pair(enh_a, enh_b, target, window: int = 7) -> Tensor:
    """Structural dissimilarity of both enhanced images to the target."""
    return (1.0 - ssim(enh_a, target, window)) + (1.0 - ssim(enh_b, target, window))


class PerceptualExtractor:
    """Fixed random conv pyramid standing in for a pretrained feature net.

    Three stride-2 stages (3 -> 16 -> 32 -> 64 channels), ReLU after each;
    weights are drawn once from a seeded generator and never trained.
    Feature maps of all three stages form the layer set.
    """

    CHANNELS = (16, 32, 64)

    def __init__(self, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.layers: list[tuple[Tensor, Tensor]] = []
        cin = 3
        for cout in self.CHANNELS:
            fan_in = cin * 9
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in), (cout, cin, 3, 3)).astype(np.float32)
            self.layers.append((Tensor(w), Tensor(np.zeros(cout, dtype=np.float32))))
            cin = cout

    def features(self, x) -> list[Tensor]:
        h = _img(x)
        if h.data.shape[2] < 8 or h.data.shape[3] < 8:
            raise ValueError("perceptual extractor needs at least 8×8 inputs")
        outs = []
        for w, b in self.layers:
            h = engine.relu(engine.conv2d(engine.pad2d(h, (1, 1, 1, 1), "zero"), w, b, 2))
            outs.append(h)
        return outs


def loss_perceptual(enh_a, enh_b, target, net: PerceptualExtractor) -> Tensor:
    """Shape-normalized squared feature distance, all layers, both inputs."""
    f_t = net.features(target)
    total = None
    for enh in (enh_a, enh_b):
        f_e = net.features(enh)
        for fe, ft in zip(f_e, f_t):
            d = fe - ft.detach()
            term = (d * d).mean()
            total = term if total is None else total + term
    return total


def loss_tv(img) -> Tensor:
    """Isotropic total variation over interior pixels, summed per image.

    Each interior site contributes sqrt(dv² + dh² + eps) where dv and dh
    are the forward differences; the eps keeps the root differentiable
    on flat regions.  Batched input yields the per-image mean.
    """
    x = _img(img)
    h, w = x.data.shape[2], x.data.shape[3]
    if h < 2 or w < 2:
        raise ValueError("total variation needs at least 2×2 images")
    dv = x[:, :, 1:, :-1] - x[:, :, :-1, :-1]
    dh = x[:, :, :-1, 1:] - x[:, :, :-1, :-1]
    per_image = engine.sqrt(dv * dv + dh * dh + TV_EPS).sum(axis=(1, 2, 3))
    return per_image.mean()


def loss_latent(z_sc, z_rc) -> Tensor:
    """L1 distance between the two transformed (clean) style vectors."""
    ts = []
    for z in (z_sc, z_rc):
        if isinstance(z, StyleLatent):
            if z.domain != CLEAN:
                raise ValueError(f"latent loss expects CLEAN-tagged styles, got {z.domain}")
            ts.append(Tensor(z.vector[None, :]))
        elif isinstance(z, Tensor):
            ts.append(z if z.data.ndim == 2 else engine.reshape(z, (1, -1)))
        else:
            ts.append(Tensor(np.asarray(z, dtype=np.float32).reshape(1, -1)))
    a, b = ts
    _check_same_shape(a, b)
    return engine.absolute(a - b).sum(axis=1).mean()


def aggregate(terms: dict[str, float], w: LossWeights) -> LossReport:
    """Combine per-term scalars into the weighted aggregates.

    ``terms`` may omit entries (treated as 0) and uses the report field
    names (``self_rec`` for the reconstruction term).
    """
    r = LossReport(**{k: float(v) for k, v in terms.items()})
    r.iq = r.ssim + r.pixel
    r.tran = r.gan_g + w.lambda_self * r.self_rec + r.cyc
    r.en = (
        w.lambda_latent * r.latent
        + w.lambda_tv * r.tv
        + w.lambda_per * r.per
        + w.lambda_iq * r.iq
    )
    r.total = r.tran + r.en
    return r
