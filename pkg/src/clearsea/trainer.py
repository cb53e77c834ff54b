"""End-to-end optimization loop.

One step builds every translation the objective needs (reconstructions,
cross-domain translations, cycles, and the three enhanced outputs),
updates the two discriminators on detached fakes, then updates the
generator side (content encoder, style encoders, transform unit,
generator) on the full weighted objective.  Steps are deterministic
given the seed, and a checkpoint carries everything needed to resume
bit-for-bit: parameters, both optimizer states, the step counter, and
the data-sampling RNG state.
"""
from __future__ import annotations

import csv
import os
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import checkpoint as ckpt
from . import datasynth, engine, imageio, losses
from .engine import Tensor, concat
from .errors import DataError, NumericError
from .losses import LossReport, LossWeights, PerceptualExtractor
from .model import EnhancementModel, ModelConfig


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    patch_size: int = 64  # desk-scale default; the reference setting is 128
    batch_size: int = 1
    learning_rate: float = 5e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    disable_cycle: bool = False
    disable_l1: bool = False
    disable_ssim: bool = False
    disable_perceptual: bool = False
    disable_gan: bool = False
    gan_form: str = "lsgan"
    ssim_window: int = 7
    hflip: bool = False
    checkpoint_every: int = 1000
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.steps <= 0 or self.batch_size <= 0 or self.patch_size <= 0:
            raise ValueError("steps, batch_size, and patch_size must be positive")
        if self.patch_size % 4:
            raise ValueError(f"patch_size must be divisible by 4, got {self.patch_size}")
        if self.patch_size < 16:
            raise ValueError("patch_size must be at least 16 (style encoder minimum)")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ValueError("adam betas must lie in [0, 1)")
        if self.gan_form not in ("lsgan", "log"):
            raise ValueError(f"gan_form must be 'lsgan' or 'log', got {self.gan_form!r}")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be non-negative")

    def to_meta(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.to_dict()
        return d


class AdamOptimizer:
    """Adaptive-moment optimizer over named parameters."""

    def __init__(self, named_params: list[tuple[str, Tensor]], lr: float, beta1: float, beta2: float, eps: float = 1e-8):
        self.params = named_params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in named_params}
        self.v = {name: np.zeros_like(p.data) for name, p in named_params}

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.grad = None

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1**self.t
        bias2 = 1.0 - b2**self.t
        for name, p in self.params:
            if p.grad is None:
                continue
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p.data -= (self.lr / bias1) * m / (np.sqrt(v / bias2) + self.eps)

    def state_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        out = {}
        for name in self.m:
            out[f"{prefix}/m/{name}"] = self.m[name]
            out[f"{prefix}/v/{name}"] = self.v[name]
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray], prefix: str, t: int) -> None:
        self.t = int(t)
        for name in self.m:
            self.m[name] = arrays[f"{prefix}/m/{name}"].astype(self.m[name].dtype, copy=True)
            self.v[name] = arrays[f"{prefix}/v/{name}"].astype(self.v[name].dtype, copy=True)


@dataclass
class StepArtifacts:
    """Every intermediate image and latent of one forward pass."""

    rec_syn: Tensor  # I_{S->S}
    rec_real: Tensor  # I_{R->R}
    syn2real: Tensor  # I_{S->R}
    real2syn: Tensor  # I_{R->S}
    cyc_syn: Tensor  # I_{S->R->S}
    cyc_real: Tensor  # I_{R->S->R}
    enh_syn: Tensor  # I_{S->C}
    enh_pseudo: Tensor  # I_{S->R->C}
    enh_real: Tensor  # I_{R->C}
    content_syn: Tensor
    content_real: Tensor
    style_syn: Tensor
    style_real: Tensor
    style_syn_clean: Tensor  # T(style_syn)
    style_real_clean: Tensor  # T(style_real)
    content_syn2real: Tensor
    content_real2syn: Tensor
    style_syn2real: Tensor
    style_pseudo_clean: Tensor

    def images(self) -> dict[str, Tensor]:
        return {
            "rec_syn": self.rec_syn,
            "rec_real": self.rec_real,
            "syn2real": self.syn2real,
            "real2syn": self.real2syn,
            "cyc_syn": self.cyc_syn,
            "cyc_real": self.cyc_real,
            "enh_syn": self.enh_syn,
            "enh_pseudo": self.enh_pseudo,
            "enh_real": self.enh_real,
        }


def forward_pass(i_s: Tensor, i_r: Tensor, i_y: Tensor, model: EnhancementModel) -> StepArtifacts:
    """Build all nine translations of one step.

    Generator invocations are batched: the six first-stage renders run as
    one call, the three second-stage renders as another, which keeps the
    matmuls large enough for BLAS to matter.
    """
    if not (i_s.data.shape == i_r.data.shape == i_y.data.shape):
        raise ValueError(
            f"patch shapes differ: {i_s.data.shape} vs {i_r.data.shape} vs {i_y.data.shape}"
        )
    b = i_s.data.shape[0]

    c_all = model.content_enc(concat([i_s, i_r], 0))
    c_s, c_r = c_all[0:b], c_all[b : 2 * b]
    s_s = model.style_enc_syn(i_s)
    s_r = model.style_enc_real(i_r)
    t_all = model.transform(concat([s_s, s_r], 0))
    s_sc, s_rc = t_all[0:b], t_all[b : 2 * b]

    g1 = model.generator(
        concat([c_s, c_r, c_s, c_r, c_s, c_r], 0),
        concat([s_s, s_r, s_r, s_s, s_sc, s_rc], 0),
    )
    rec_syn = g1[0:b]
    rec_real = g1[b : 2 * b]
    syn2real = g1[2 * b : 3 * b]
    real2syn = g1[3 * b : 4 * b]
    enh_syn = g1[4 * b : 5 * b]
    enh_real = g1[5 * b : 6 * b]

    c2 = model.content_enc(concat([syn2real, real2syn], 0))
    c_sr, c_rs = c2[0:b], c2[b : 2 * b]
    s_sr = model.style_enc_real(syn2real)
    s_src = model.transform(s_sr)

    g2 = model.generator(
        concat([c_sr, c_rs, c_sr], 0),
        concat([s_s, s_r, s_src], 0),
    )
    cyc_syn = g2[0:b]
    cyc_real = g2[b : 2 * b]
    enh_pseudo = g2[2 * b : 3 * b]

    return StepArtifacts(
        rec_syn=rec_syn,
        rec_real=rec_real,
        syn2real=syn2real,
        real2syn=real2syn,
        cyc_syn=cyc_syn,
        cyc_real=cyc_real,
        enh_syn=enh_syn,
        enh_pseudo=enh_pseudo,
        enh_real=enh_real,
        content_syn=c_s,
        content_real=c_r,
        style_syn=s_s,
        style_real=s_r,
        style_syn_clean=s_sc,
        style_real_clean=s_rc,
        content_syn2real=c_sr,
        content_real2syn=c_rs,
        style_syn2real=s_sr,
        style_pseudo_clean=s_src,
    )


def _zero_all(model: EnhancementModel) -> None:
    for p in model.parameters():
        p.grad = None


def train_step(
    batch: tuple[np.ndarray, np.ndarray, np.ndarray],
    model: EnhancementModel,
    opt_g: AdamOptimizer,
    opt_d: AdamOptimizer,
    cfg: TrainConfig,
    extractor: PerceptualExtractor,
) -> LossReport:
    """One discriminator update followed by one generator-side update.

    ``batch`` is (I_S, I_Y, I_R) as (B, 3, H, W) float32 arrays.
    Raises :class:`NumericError` naming the first non-finite term.
    """
    arr_s, arr_y, arr_r = batch
    t_s, t_y, t_r = Tensor(arr_s), Tensor(arr_y), Tensor(arr_r)
    w = cfg.weights

    arts = forward_pass(t_s, t_r, t_y, model)
    b = arr_s.shape[0]

    gan_d_value = 0.0
    if not cfg.disable_gan:
        _zero_all(model)
        both_r = model.disc_real(concat([t_r, arts.syn2real.detach()], 0))
        both_s = model.disc_syn(concat([t_s, arts.real2syn.detach()], 0))
        d_loss = losses.loss_lsgan(
            [m[0:b] for m in both_r], [m[b : 2 * b] for m in both_r], "discriminator", cfg.gan_form
        ) + losses.loss_lsgan(
            [m[0:b] for m in both_s], [m[b : 2 * b] for m in both_s], "discriminator", cfg.gan_form
        )
        d_loss.backward()
        opt_d.step()
        gan_d_value = d_loss.item()

    # generator-side objective, scored against the just-updated discriminators
    terms: dict[str, Tensor] = {}
    if not cfg.disable_gan:
        fake_r = model.disc_real(arts.syn2real)
        fake_s = model.disc_syn(arts.real2syn)
        terms["gan_g"] = losses.loss_lsgan(None, fake_r, "generator", cfg.gan_form) + losses.loss_lsgan(
            None, fake_s, "generator", cfg.gan_form
        )
    terms["self_rec"] = losses.loss_self(t_s, arts.rec_syn, t_r, arts.rec_real)
    if not cfg.disable_cycle:
        terms["cyc"] = losses.loss_cycle(t_s, t_r, arts.cyc_syn, arts.cyc_real)
    if not cfg.disable_l1:
        terms["pixel"] = losses.loss_pixel(arts.enh_syn, arts.enh_pseudo, t_y)
    if not cfg.disable_ssim:
        terms["ssim"] = losses.loss_ssim_pair(arts.enh_syn, arts.enh_pseudo, t_y, cfg.ssim_window)
    if not cfg.disable_perceptual:
        terms["per"] = losses.loss_perceptual(arts.enh_syn, arts.enh_pseudo, t_y, extractor)
    terms["tv"] = losses.loss_tv(arts.enh_syn) + losses.loss_tv(arts.enh_real)
    terms["latent"] = losses.loss_latent(arts.style_syn_clean, arts.style_real_clean)

    def get(name: str) -> Tensor | float:
        return terms.get(name, 0.0)

    iq = get("ssim") + get("pixel")
    total = (
        get("gan_g")
        + w.lambda_self * terms["self_rec"]
        + get("cyc")
        + w.lambda_latent * terms["latent"]
        + w.lambda_tv * terms["tv"]
        + w.lambda_per * get("per")
        + w.lambda_iq * iq
    )
    _zero_all(model)
    total.backward()
    opt_g.step()

    floats = {name: t.item() for name, t in terms.items()}
    floats["gan_d"] = gan_d_value
    for name, value in floats.items():
        if not np.isfinite(value):
            raise NumericError(f"non-finite loss term {name!r} = {value}")
    report = losses.aggregate(floats, w)
    if not report.finite():
        raise NumericError("non-finite loss aggregate")
    return report


class _PatchSampler:
    """Seeded crop/index sampler over in-memory dataset arrays."""

    def __init__(self, manifest: datasynth.DatasetManifest, root: str, cfg: TrainConfig):
        entries = manifest.split("train")
        if not entries:
            raise DataError("manifest has no training entries")
        self.syn = []
        self.clean = []
        self.real = []
        for e in entries:
            self.syn.append(self._load(root, e.syn))
            self.clean.append(self._load(root, e.clean))
            self.real.append(self._load(root, e.real))
        size = self.syn[0].shape[1]
        if cfg.patch_size > size:
            raise DataError(f"patch_size {cfg.patch_size} exceeds image size {size}")
        self.cfg = cfg
        self.size = size

    @staticmethod
    def _load(root: str, rel: str) -> np.ndarray:
        img = imageio.load_rgb(os.path.join(root, rel))
        return np.ascontiguousarray(np.transpose(img, (2, 0, 1)))

    def draw(self, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        p = self.cfg.patch_size
        hi = self.size - p + 1
        bs, by, br = [], [], []
        for _ in range(self.cfg.batch_size):
            i = int(rng.integers(len(self.syn)))
            y0, x0 = int(rng.integers(hi)), int(rng.integers(hi))
            j = int(rng.integers(len(self.real)))
            ry, rx = int(rng.integers(hi)), int(rng.integers(hi))
            ps = self.syn[i][:, y0 : y0 + p, x0 : x0 + p]
            py = self.clean[i][:, y0 : y0 + p, x0 : x0 + p]
            pr = self.real[j][:, ry : ry + p, rx : rx + p]
            if self.cfg.hflip:
                if rng.random() < 0.5:
                    ps, py = ps[:, :, ::-1], py[:, :, ::-1]
                if rng.random() < 0.5:
                    pr = pr[:, :, ::-1]
            bs.append(ps)
            by.append(py)
            br.append(pr)
        stack = lambda xs: np.ascontiguousarray(np.stack(xs, 0), dtype=np.float32)
        return stack(bs), stack(by), stack(br)


def _checkpoint_arrays(model: EnhancementModel, opt_g: AdamOptimizer, opt_d: AdamOptimizer) -> dict[str, np.ndarray]:
    arrays = {f"model/{k}": v for k, v in model.state_dict().items()}
    arrays.update(opt_g.state_arrays("opt_g"))
    arrays.update(opt_d.state_arrays("opt_d"))
    return arrays


def save_training_checkpoint(
    path: str,
    model: EnhancementModel,
    opt_g: AdamOptimizer,
    opt_d: AdamOptimizer,
    step: int,
    rng: np.random.Generator,
    cfg: TrainConfig,
) -> None:
    meta = {
        "step": int(step),
        "rng_state": rng.bit_generator.state,
        "opt_g_t": opt_g.t,
        "opt_d_t": opt_d.t,
        "train_config": cfg.to_meta(),
    }
    ckpt.save_archive(path, _checkpoint_arrays(model, opt_g, opt_d), meta)


def load_model_from_checkpoint(path: str) -> tuple[EnhancementModel, dict]:
    """Rebuild a model (weights only) from a checkpoint archive."""
    arrays, meta = ckpt.load_archive(path)
    mc = ModelConfig(**meta["train_config"]["model"])
    model = EnhancementModel(mc, seed=int(meta["train_config"]["seed"]))
    model.load_state_dict({k[len("model/") :]: v for k, v in arrays.items() if k.startswith("model/")})
    return model, meta


def restore_training_state(
    path: str, cfg: TrainConfig
) -> tuple[EnhancementModel, AdamOptimizer, AdamOptimizer, int, np.random.Generator]:
    arrays, meta = ckpt.load_archive(path)
    saved_model_cfg = meta["train_config"]["model"]
    if saved_model_cfg != cfg.model.to_dict():
        raise DataError("checkpoint model config does not match the requested configuration")
    model = EnhancementModel(cfg.model, seed=cfg.seed)
    model.load_state_dict({k[len("model/") :]: v for k, v in arrays.items() if k.startswith("model/")})
    opt_g, opt_d = _build_optimizers(model, cfg)
    opt_g.load_state_arrays(arrays, "opt_g", meta["opt_g_t"])
    opt_d.load_state_arrays(arrays, "opt_d", meta["opt_d_t"])
    rng = np.random.default_rng(cfg.seed)
    rng.bit_generator.state = meta["rng_state"]
    return model, opt_g, opt_d, int(meta["step"]), rng


def _build_optimizers(model: EnhancementModel, cfg: TrainConfig) -> tuple[AdamOptimizer, AdamOptimizer]:
    named = dict(model.named_parameters())
    g_ids = {id(p) for p in model.generator_side_parameters()}
    g_named = [(n, p) for n, p in named.items() if id(p) in g_ids]
    d_named = [(n, p) for n, p in named.items() if id(p) not in g_ids]
    opt_g = AdamOptimizer(g_named, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2)
    opt_d = AdamOptimizer(d_named, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2)
    return opt_g, opt_d


def train(
    cfg: TrainConfig,
    manifest_path: str,
    out_dir: str,
    resume: str | None = None,
    progress_every: int = 0,
) -> str:
    """Run the loop; returns the final checkpoint path.

    Writes ``loss_log.csv`` (one row per step) and periodic checkpoints
    into ``out_dir``.  With ``resume``, continues a previous run from its
    saved step, optimizer, and RNG state; the loss sequence matches an
    uninterrupted run exactly.
    """
    manifest = datasynth.load_manifest(manifest_path)
    root = os.path.dirname(os.path.abspath(manifest_path))
    for e in manifest.entries:
        for rel in (e.clean, e.syn, e.real):
            if not os.path.exists(os.path.join(root, rel)):
                raise DataError(f"dataset file missing: {rel}")
    os.makedirs(out_dir, exist_ok=True)
    sampler = _PatchSampler(manifest, root, cfg)
    extractor = PerceptualExtractor(seed=0)

    if resume:
        model, opt_g, opt_d, start_step, rng = restore_training_state(resume, cfg)
        if start_step >= cfg.steps:
            raise DataError(f"checkpoint already at step {start_step} >= steps {cfg.steps}")
        log_mode = "a"
    else:
        model = EnhancementModel(cfg.model, seed=cfg.seed)
        opt_g, opt_d = _build_optimizers(model, cfg)
        start_step = 0
        rng = np.random.default_rng(cfg.seed)
        log_mode = "w"

    log_path = os.path.join(out_dir, "loss_log.csv")
    final_path = os.path.join(out_dir, "checkpoint_final.ckpt")
    with open(log_path, log_mode, newline="") as fh:
        writer = csv.writer(fh)
        if log_mode == "w":
            writer.writerow(("step",) + LossReport.CSV_COLUMNS)
        for step in range(start_step + 1, cfg.steps + 1):
            batch = sampler.draw(rng)
            try:
                report = train_step(batch, model, opt_g, opt_d, cfg, extractor)
            except NumericError as exc:
                raise NumericError(f"step {step}: {exc}") from exc
            writer.writerow([step] + [repr(v) for v in report.csv_row()])
            if progress_every and step % progress_every == 0:
                fh.flush()
                print(f"step {step}/{cfg.steps}  total {report.total:.4f}  self {report.self_rec:.4f}", flush=True)
            if cfg.checkpoint_every and step % cfg.checkpoint_every == 0 and step < cfg.steps:
                save_training_checkpoint(
                    os.path.join(out_dir, f"checkpoint_{step:06d}.ckpt"),
                    model, opt_g, opt_d, step, rng, cfg,
                )
    save_training_checkpoint(final_path, model, opt_g, opt_d, cfg.steps, rng, cfg)
    return final_path
