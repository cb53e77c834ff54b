"""Optimizer, forward graph, step determinism, and checkpoint round-trips."""
import csv
import os

import numpy as np
import pytest

from clearsea import trainer
from clearsea.engine import Tensor
from clearsea.errors import DataError, NumericError
from clearsea.losses import LossReport, PerceptualExtractor
from clearsea.model import EnhancementModel, ModelConfig
from clearsea.trainer import (
    AdamOptimizer,
    TrainConfig,
    forward_pass,
    load_model_from_checkpoint,
    restore_training_state,
    save_training_checkpoint,
    train_step,
)

from conftest import small_model_config, small_train_config


# -- configuration -------------------------------------------------------------


@pytest.mark.parametrize(
    "kw",
    [
        dict(steps=0),
        dict(batch_size=0),
        dict(patch_size=18),  # not divisible by 4
        dict(patch_size=12),  # below the style encoder minimum
        dict(learning_rate=0.0),
        dict(adam_beta1=1.0),
        dict(adam_beta2=-0.1),
        dict(gan_form="hinge"),
        dict(checkpoint_every=-1),
    ],
)
def test_config_validation(kw):
    with pytest.raises(ValueError):
        TrainConfig(**kw)


def test_config_meta_is_plain_data():
    meta = small_train_config().to_meta()
    assert meta["model"] == small_model_config().to_dict()
    assert meta["weights"]["lambda_self"] == 10.0
    import json

    json.dumps(meta)  # must survive serialization as-is


# -- optimizer -------------------------------------------------------------------


def test_adam_first_step_closed_form():
    p = Tensor(np.array([1.0, -2.0], dtype=np.float32), requires_grad=True)
    g = np.array([0.3, -0.7], dtype=np.float32)
    p.grad = g.copy()
    opt = AdamOptimizer([("p", p)], lr=1e-2, beta1=0.5, beta2=0.9)
    opt.step()
    # bias correction cancels at t=1, so the update is lr * g / (|g| + eps)
    expect = np.array([1.0, -2.0]) - 1e-2 * g / (np.abs(g) + 1e-8)
    np.testing.assert_allclose(p.data, expect, rtol=1e-6)
    assert opt.t == 1


def test_adam_skips_gradless_params():
    p = Tensor(np.ones(3, dtype=np.float32), requires_grad=True)
    opt = AdamOptimizer([("p", p)], lr=0.1, beta1=0.5, beta2=0.9)
    opt.step()
    assert np.array_equal(p.data, np.ones(3, dtype=np.float32))


def test_adam_state_round_trip():
    p = Tensor(np.ones(2, dtype=np.float32), requires_grad=True)
    opt = AdamOptimizer([("p", p)], lr=0.1, beta1=0.5, beta2=0.9)
    p.grad = np.array([0.1, 0.2], dtype=np.float32)
    opt.step()
    arrays = {k: v.copy() for k, v in opt.state_arrays("o").items()}
    opt2 = AdamOptimizer([("p", p)], lr=0.1, beta1=0.5, beta2=0.9)
    opt2.load_state_arrays(arrays, "o", opt.t)
    assert opt2.t == 1
    np.testing.assert_array_equal(opt2.m["p"], opt.m["p"])
    np.testing.assert_array_equal(opt2.v["p"], opt.v["p"])


# -- forward graph ----------------------------------------------------------------


@pytest.fixture(scope="module")
def tiny_parts():
    model = EnhancementModel(small_model_config(), seed=0)
    cfg = small_train_config()
    opt_g, opt_d = trainer._build_optimizers(model, cfg)
    return model, cfg, opt_g, opt_d


def batch16(seed=0, b=1):
    rng = np.random.default_rng(seed)
    return tuple(rng.random((b, 3, 16, 16), dtype=np.float32) for _ in range(3))


def test_forward_pass_shapes(tiny_parts):
    model, cfg, _, _ = tiny_parts
    i_s, i_y, i_r = (Tensor(a) for a in batch16(b=2))
    arts = forward_pass(i_s, i_r, i_y, model)
    for name, img in arts.images().items():
        assert img.data.shape == (2, 3, 16, 16), name
    assert arts.content_syn.data.shape == (2, 16, 4, 4)
    assert arts.style_syn.data.shape == (2, 8)
    assert arts.style_real_clean.data.shape == (2, 8)


def test_forward_pass_rejects_mismatched_patches(tiny_parts):
    model = tiny_parts[0]
    a = Tensor(np.zeros((1, 3, 16, 16), dtype=np.float32))
    b = Tensor(np.zeros((1, 3, 32, 32), dtype=np.float32))
    with pytest.raises(ValueError):
        forward_pass(a, b, a, model)


# -- single step --------------------------------------------------------------------


def run_one_step(cfg, seed=0):
    model = EnhancementModel(cfg.model, seed=cfg.seed)
    opt_g, opt_d = trainer._build_optimizers(model, cfg)
    report = train_step(batch16(seed), model, opt_g, opt_d, cfg, PerceptualExtractor(seed=0))
    return model, report


def test_step_deterministic():
    r1 = run_one_step(small_train_config())[1]
    r2 = run_one_step(small_train_config())[1]
    assert r1.csv_row() == r2.csv_row()


def test_step_updates_both_sides():
    cfg = small_train_config()
    model = EnhancementModel(cfg.model, seed=cfg.seed)
    before_g = [p.data.copy() for p in model.generator_side_parameters()]
    before_d = [p.data.copy() for p in model.discriminator_side_parameters()]
    opt_g, opt_d = trainer._build_optimizers(model, cfg)
    train_step(batch16(), model, opt_g, opt_d, cfg, PerceptualExtractor(seed=0))
    moved_g = sum(not np.array_equal(a, p.data) for a, p in zip(before_g, model.generator_side_parameters()))
    moved_d = sum(not np.array_equal(a, p.data) for a, p in zip(before_d, model.discriminator_side_parameters()))
    assert moved_g > 0 and moved_d > 0


def test_disable_flags_zero_their_terms():
    r = run_one_step(small_train_config(disable_ssim=True))[1]
    assert r.ssim == 0.0 and r.pixel > 0.0
    r = run_one_step(small_train_config(disable_gan=True))[1]
    assert r.gan_g == 0.0 and r.gan_d == 0.0
    r = run_one_step(small_train_config(disable_cycle=True, disable_perceptual=True))[1]
    assert r.cyc == 0.0 and r.per == 0.0 and r.self_rec > 0.0


def test_non_finite_input_raises_numeric_error():
    cfg = small_train_config()
    model = EnhancementModel(cfg.model, seed=0)
    opt_g, opt_d = trainer._build_optimizers(model, cfg)
    bad = batch16()
    bad = (np.full_like(bad[0], np.nan), bad[1], bad[2])
    with pytest.raises(NumericError):
        train_step(bad, model, opt_g, opt_d, cfg, PerceptualExtractor(seed=0))


# -- the loop and checkpoints ----------------------------------------------------------


def read_log(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_train_writes_log_and_checkpoints(tiny_dataset, tmp_path):
    out = str(tmp_path / "run")
    cfg = small_train_config(steps=4, checkpoint_every=2)
    final = trainer.train(cfg, tiny_dataset, out)
    assert os.path.basename(final) == "checkpoint_final.ckpt"
    rows = read_log(os.path.join(out, "loss_log.csv"))
    assert rows[0] == ["step"] + list(LossReport.CSV_COLUMNS)
    assert [r[0] for r in rows[1:]] == ["1", "2", "3", "4"]
    # every logged value parses back to a finite float
    assert all(np.isfinite(float(v)) for r in rows[1:] for v in r[1:])
    # intermediate checkpoint at step 2; step 4 is the final one, not duplicated
    assert os.path.exists(os.path.join(out, "checkpoint_000002.ckpt"))
    assert not os.path.exists(os.path.join(out, "checkpoint_000004.ckpt"))


def test_resume_matches_uninterrupted_log(tiny_dataset, tmp_path):
    cfg = small_train_config(steps=4, checkpoint_every=2)
    straight = str(tmp_path / "straight")
    trainer.train(cfg, tiny_dataset, straight)

    split = str(tmp_path / "split")
    trainer.train(small_train_config(steps=2, checkpoint_every=2), tiny_dataset, split)
    trainer.train(cfg, tiny_dataset, split, resume=os.path.join(split, "checkpoint_final.ckpt"))

    a = read_log(os.path.join(straight, "loss_log.csv"))
    b = read_log(os.path.join(split, "loss_log.csv"))
    assert a == b  # repr'd floats, so equality means bit-identical losses


def test_resume_rejects_finished_checkpoint(tiny_dataset, tmp_path):
    out = str(tmp_path / "done")
    cfg = small_train_config(steps=2)
    final = trainer.train(cfg, tiny_dataset, out)
    with pytest.raises(DataError):
        trainer.train(cfg, tiny_dataset, out, resume=final)


def test_restore_rejects_model_mismatch(tiny_run):
    final, _ = tiny_run
    other = small_train_config(model=ModelConfig(base_filters=8, content_channels=16, style_channels=16, adain_param_net_hidden=32, latent_dim=4))
    with pytest.raises(DataError):
        restore_training_state(final, other)


def test_checkpoint_weights_round_trip(tiny_run, tmp_path):
    final, _ = tiny_run
    model, meta = load_model_from_checkpoint(final)
    assert meta["step"] == 3
    resaved = str(tmp_path / "again.ckpt")
    cfg = small_train_config()
    opt_g, opt_d = trainer._build_optimizers(model, cfg)
    rng = np.random.default_rng(cfg.seed)
    rng.bit_generator.state = meta["rng_state"]
    save_training_checkpoint(resaved, model, opt_g, opt_d, meta["step"], rng, cfg)
    m2, _ = load_model_from_checkpoint(resaved)
    for (n1, p1), (n2, p2) in zip(sorted(model.named_parameters()), sorted(m2.named_parameters())):
        assert n1 == n2
        np.testing.assert_array_equal(p1.data, p2.data)


def test_missing_dataset_file_raises(tiny_dataset, tmp_path):
    import shutil

    root = tmp_path / "broken"
    shutil.copytree(os.path.dirname(tiny_dataset), root)
    victims = list((root / "syn").glob("*.png"))
    victims[0].unlink()
    with pytest.raises(DataError):
        trainer.train(small_train_config(), str(root / "manifest.txt"), str(tmp_path / "out"))
