"""The learnable components and their composition.

One shared content encoder strips style through instance normalization;
two per-domain style encoders (no normalization anywhere in that path)
compress an image to an 8-vector; a small residual MLP maps degraded
style vectors onto the clean-style manifold; an AdaIN generator renders
a content latent under any style; and a pair of multi-scale patch
discriminators (one per degraded domain) provides the adversarial
signal.

Two API levels coexist.  The trainer drives the sub-modules directly
with batched ``(B, C, H, W)`` tensors.  The public methods near the
bottom (``encode_content``, ``encode_style``, ``transform_style``,
``decode``, ``discriminate``) take and return numpy arrays for single
images, validate domain tags, and run without recording gradients.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import engine
from . import nn
from .engine import Tensor

SYN = "SYN"
REAL = "REAL"
CLEAN = "CLEAN"
INTERP = "INTERP"  # produced by latent interpolation, never encoded from pixels

EPS = 1e-5  # every normalization denominator in the network


@dataclass(frozen=True)
class ModelConfig:
    base_filters: int = 32
    content_channels: int = 64
    num_content_resblocks: int = 3
    style_channels: int = 64
    latent_dim: int = 8
    generator_resblocks: int = 3
    adain_param_net_hidden: int = 128
    discriminator_scales: int = 2

    def __post_init__(self):
        for name, value in vars(self).items():
            if int(value) <= 0:
                raise ValueError(f"ModelConfig.{name} must be positive, got {value}")

    def to_dict(self) -> dict:
        return {k: int(v) for k, v in vars(self).items()}


@dataclass
class StyleLatent:
    """An 8-vector of global appearance plus the domain it describes."""

    vector: np.ndarray
    domain: str

    def __post_init__(self):
        vec = np.asarray(self.vector)
        # float64 survives (latent arithmetic wants the precision);
        # everything else lands on the network's float32
        dtype = np.float64 if vec.dtype == np.float64 else np.float32
        self.vector = vec.reshape(-1).astype(dtype)
        if self.domain not in (SYN, REAL, CLEAN, INTERP):
            raise ValueError(f"unknown domain tag {self.domain!r}")


class ResBlock(nn.Module):
    """conv-IN-ReLU-conv-IN plus the skip path."""

    def __init__(self, ch: int, rng):
        self.conv1 = nn.Conv2d(ch, ch, 3, rng)
        self.conv2 = nn.Conv2d(ch, ch, 3, rng)

    def forward(self, x: Tensor) -> Tensor:
        h = engine.relu(engine.instance_norm(self.conv1(x), EPS))
        h = engine.instance_norm(self.conv2(h), EPS)
        return x + h


class ContentEncoder(nn.Module):
    """Shared structural encoder: two stride-2 stages, then residual blocks."""

    def __init__(self, cfg: ModelConfig, rng):
        b, c = cfg.base_filters, cfg.content_channels
        self.stem = nn.Conv2d(3, b, 7, rng)
        self.down1 = nn.Conv2d(b, 2 * b, 4, rng, stride=2, pad=1)
        self.down2 = nn.Conv2d(2 * b, c, 4, rng, stride=2, pad=1)
        self.blocks = [ResBlock(c, rng) for _ in range(cfg.num_content_resblocks)]

    def forward(self, x: Tensor) -> Tensor:
        h = engine.relu(engine.instance_norm(self.stem(x), EPS))
        h = engine.relu(engine.instance_norm(self.down1(h), EPS))
        h = engine.relu(engine.instance_norm(self.down2(h), EPS))
        for blk in self.blocks:
            h = blk(h)
        return h


class StyleEncoder(nn.Module):
    """Domain-specific appearance encoder; deliberately free of any
    normalization layer so global statistics survive to the output."""

    def __init__(self, cfg: ModelConfig, rng):
        b, s = cfg.base_filters, cfg.style_channels
        self.stem = nn.Conv2d(3, b, 7, rng)
        self.downs = [
            nn.Conv2d(b, 2 * b, 4, rng, stride=2, pad=1),
            nn.Conv2d(2 * b, s, 4, rng, stride=2, pad=1),
            nn.Conv2d(s, s, 4, rng, stride=2, pad=1),
            nn.Conv2d(s, s, 4, rng, stride=2, pad=1),
        ]
        self.head = nn.Linear(s, cfg.latent_dim, rng)

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[2] < 16 or x.shape[3] < 16:
            raise ValueError("style encoder requires inputs of at least 16x16")
        h = engine.relu(self.stem(x))
        for conv in self.downs:
            h = engine.relu(conv(h))
        pooled = h.mean(axis=(2, 3))  # global average pooling
        return self.head(pooled)


class TransformUnit(nn.Module):
    """Residual MLP carrying degraded style vectors to the clean domain.

    The final layer starts at zero so the map is the identity at step 0.
    """

    def __init__(self, cfg: ModelConfig, rng, hidden: int = 32):
        d = cfg.latent_dim
        self.fc1 = nn.Linear(d, hidden, rng)
        self.fc2 = nn.Linear(hidden, hidden, rng)
        self.fc3 = nn.Linear(hidden, d, rng)
        self.fc3.zero_()

    def forward(self, z: Tensor) -> Tensor:
        h = engine.relu(self.fc1(z))
        h = engine.relu(self.fc2(h))
        return z + self.fc3(h)


class Generator(nn.Module):
    """AdaIN decoder: residual blocks at latent resolution, then two
    upsample-conv-AdaIN-ReLU stages, then a sigmoid-squashed RGB head.

    All AdaIN scales and shifts come from one MLP on the style vector;
    the raw scale is offset by +1 so initialization behaves like plain
    instance normalization.
    """

    def __init__(self, cfg: ModelConfig, rng):
        c = cfg.content_channels
        half, quarter = max(c // 2, 8), max(c // 4, 8)
        self.res_convs = [
            (nn.Conv2d(c, c, 3, rng), nn.Conv2d(c, c, 3, rng))
            for _ in range(cfg.generator_resblocks)
        ]
        self.up1 = nn.Conv2d(c, half, 3, rng)
        self.up2 = nn.Conv2d(half, quarter, 3, rng)
        self.head = nn.Conv2d(quarter, 3, 3, rng)
        # channel count of every AdaIN site, in consumption order
        self.adain_channels: list[int] = []
        for _ in range(cfg.generator_resblocks):
            self.adain_channels += [c, c]
        self.adain_channels += [half, quarter]
        n_params = 2 * sum(self.adain_channels)
        h = cfg.adain_param_net_hidden
        self.mlp1 = nn.Linear(cfg.latent_dim, h, rng)
        self.mlp2 = nn.Linear(h, h, rng)
        self.mlp3 = nn.Linear(h, n_params, rng)

    def _adain_params(self, style: Tensor) -> list[tuple[Tensor, Tensor]]:
        raw = self.mlp3(engine.relu(self.mlp2(engine.relu(self.mlp1(style)))))
        out = []
        offset = 0
        for ch in self.adain_channels:
            gamma = raw[:, offset : offset + ch] + 1.0
            beta = raw[:, offset + ch : offset + 2 * ch]
            out.append((gamma, beta))
            offset += 2 * ch
        return out

    def forward(self, content: Tensor, style: Tensor) -> Tensor:
        params = iter(self._adain_params(style))
        h = content
        for conv1, conv2 in self.res_convs:
            g1, b1 = next(params)
            g2, b2 = next(params)
            r = engine.relu(nn.adain(conv1(h), g1, b1, EPS))
            r = nn.adain(conv2(r), g2, b2, EPS)
            h = h + r
        g, b = next(params)
        h = engine.relu(nn.adain(self.up1(engine.upsample2(h)), g, b, EPS))
        g, b = next(params)
        h = engine.relu(nn.adain(self.up2(engine.upsample2(h)), g, b, EPS))
        return engine.sigmoid(self.head(h))


class PatchDiscriminator(nn.Module):
    """Three stride-2 convs and a score head; no normalization, raw outputs."""

    def __init__(self, cfg: ModelConfig, rng):
        b = cfg.base_filters
        self.c1 = nn.Conv2d(3, b, 4, rng, stride=2, pad=1, pad_mode="zero")
        self.c2 = nn.Conv2d(b, 2 * b, 4, rng, stride=2, pad=1, pad_mode="zero")
        self.c3 = nn.Conv2d(2 * b, 4 * b, 4, rng, stride=2, pad=1, pad_mode="zero")
        self.head = nn.Conv2d(4 * b, 1, 3, rng, pad_mode="zero")

    def forward(self, x: Tensor) -> Tensor:
        h = engine.leaky_relu(self.c1(x), 0.2)
        h = engine.leaky_relu(self.c2(h), 0.2)
        h = engine.leaky_relu(self.c3(h), 0.2)
        return self.head(h)


class MultiScaleDiscriminator(nn.Module):
    """Runs an independent patch discriminator at each 2x downsampled scale."""

    def __init__(self, cfg: ModelConfig, rng):
        self.scales = [PatchDiscriminator(cfg, rng) for _ in range(cfg.discriminator_scales)]
        self.min_hw = 4 * 2 ** (cfg.discriminator_scales - 1)

    def forward(self, x: Tensor) -> list[Tensor]:
        if x.shape[2] < self.min_hw or x.shape[3] < self.min_hw:
            raise ValueError(
                f"input {x.shape[2]}x{x.shape[3]} smaller than the coarsest-scale "
                f"receptive field (needs at least {self.min_hw})"
            )
        outs = []
        for i, disc in enumerate(self.scales):
            outs.append(disc(x))
            if i + 1 < len(self.scales):
                x = engine.avg_pool2(x)
        return outs


class EnhancementModel(nn.Module):
    """The full bundle of trainable components."""

    def __init__(self, cfg: ModelConfig | None = None, seed: int = 0):
        self.cfg = cfg or ModelConfig()
        rng = np.random.default_rng(seed)
        self.content_enc = ContentEncoder(self.cfg, rng)
        self.style_enc_syn = StyleEncoder(self.cfg, rng)
        self.style_enc_real = StyleEncoder(self.cfg, rng)
        self.transform = TransformUnit(self.cfg, rng)
        self.generator = Generator(self.cfg, rng)
        self.disc_syn = MultiScaleDiscriminator(self.cfg, rng)
        self.disc_real = MultiScaleDiscriminator(self.cfg, rng)

    # named_parameters walks vars(); cfg is not a Module so it is skipped.

    def style_encoder_for(self, domain: str) -> StyleEncoder:
        if domain == SYN:
            return self.style_enc_syn
        if domain == REAL:
            return self.style_enc_real
        raise ValueError(f"no style encoder for domain {domain!r} (CLEAN styles only arise via transform_style)")

    def discriminator_for(self, domain: str) -> MultiScaleDiscriminator:
        if domain == SYN:
            return self.disc_syn
        if domain == REAL:
            return self.disc_real
        raise ValueError(f"no discriminator for domain {domain!r}")

    def generator_side_parameters(self) -> list[Tensor]:
        """Everything the generator-side optimizer updates."""
        parts = [self.content_enc, self.style_enc_syn, self.style_enc_real, self.transform, self.generator]
        return [p for m in parts for p in m.parameters()]

    def discriminator_side_parameters(self) -> list[Tensor]:
        return self.disc_syn.parameters() + self.disc_real.parameters()

    def summary(self) -> dict[str, int]:
        """Parameter count per component plus the total."""
        counts = {
            "content_encoder": self.content_enc.num_parameters(),
            "style_encoder_syn": self.style_enc_syn.num_parameters(),
            "style_encoder_real": self.style_enc_real.num_parameters(),
            "transform_unit": self.transform.num_parameters(),
            "generator": self.generator.num_parameters(),
            "discriminator_syn": self.disc_syn.num_parameters(),
            "discriminator_real": self.disc_real.num_parameters(),
        }
        counts["total"] = sum(counts.values())
        return counts

    # -- public single-image API (numpy in, numpy out, no gradients) -----------

    def encode_content(self, image: np.ndarray) -> np.ndarray:
        """Content latent of an H×W×3 image; shape (C, H/4, W/4)."""
        x = _to_bchw(image)
        if x.shape[2] % 4 or x.shape[3] % 4:
            raise ValueError(f"image dims must be divisible by 4, got {x.shape[2]}x{x.shape[3]}")
        with engine.no_grad():
            z = self.content_enc(Tensor(x))
        return z.data[0]

    def encode_style(self, image: np.ndarray, domain: str) -> StyleLatent:
        """Style 8-vector of an image under its domain's encoder."""
        enc = self.style_encoder_for(domain)
        with engine.no_grad():
            z = enc(Tensor(_to_bchw(image)))
        return StyleLatent(vector=z.data[0], domain=domain)

    def transform_style(self, z: StyleLatent) -> StyleLatent:
        """Map a degraded-domain style onto the clean manifold."""
        if z.domain == CLEAN:
            raise ValueError("transform_style maps degraded styles to clean; CLEAN input rejected")
        if z.domain not in (SYN, REAL):
            raise ValueError(f"transform_style needs a SYN or REAL style, got {z.domain!r}")
        if z.vector.shape != (self.cfg.latent_dim,):
            raise ValueError(f"style vector must have length {self.cfg.latent_dim}")
        with engine.no_grad():
            out = self.transform(Tensor(z.vector[None, :].astype(np.float32)))
        return StyleLatent(vector=out.data[0], domain=CLEAN)

    def decode(self, content: np.ndarray, style: StyleLatent) -> np.ndarray:
        """Render a content latent under a style; returns H×W×3 in [0, 1]."""
        c = np.asarray(content, dtype=np.float32)
        if c.ndim != 3 or c.shape[0] != self.cfg.content_channels:
            raise ValueError(
                f"content latent must be ({self.cfg.content_channels}, H', W'), got {c.shape}"
            )
        if style.vector.shape != (self.cfg.latent_dim,):
            raise ValueError(f"style vector must have length {self.cfg.latent_dim}")
        with engine.no_grad():
            img = self.generator(Tensor(c[None]), Tensor(style.vector[None, :].astype(np.float32)))
        return np.ascontiguousarray(np.transpose(img.data[0], (1, 2, 0)))

    def discriminate(self, image: np.ndarray, domain: str) -> list[np.ndarray]:
        """Raw score maps of the domain discriminator, one per scale."""
        disc = self.discriminator_for(domain)
        with engine.no_grad():
            outs = disc(Tensor(_to_bchw(image)))
        return [o.data[0, 0] for o in outs]

    def enhance(self, image: np.ndarray, domain: str) -> np.ndarray:
        """Full enhancement path: content + transformed style -> clean render."""
        content = self.encode_content(image)
        style = self.transform_style(self.encode_style(image, domain))
        return self.decode(content, style)


def _to_bchw(image: np.ndarray) -> np.ndarray:
    img = np.asarray(image, dtype=np.float32)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected H×W×3 image, got shape {img.shape}")
    if img.shape[0] < 8 or img.shape[1] < 8:
        raise ValueError("images must be at least 8×8")
    return np.ascontiguousarray(np.transpose(img, (2, 0, 1)))[None]
