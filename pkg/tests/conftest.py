import os

import numpy as np
import pytest

from clearsea import cli, datasynth, trainer
from clearsea.losses import LossWeights
from clearsea.model import ModelConfig
from clearsea.trainer import TrainConfig

SMALL_MODEL_FLAGS = [
    "--base-filters", "8",
    "--content-channels", "16",
    "--style-channels", "16",
    "--adain-param-net-hidden", "32",
]


def small_model_config() -> ModelConfig:
    return ModelConfig(
        base_filters=8,
        content_channels=16,
        style_channels=16,
        adain_param_net_hidden=32,
    )


def small_train_config(**overrides) -> TrainConfig:
    kw = dict(
        steps=3,
        patch_size=16,
        seed=0,
        checkpoint_every=0,
        weights=LossWeights(),
        model=small_model_config(),
    )
    kw.update(overrides)
    return TrainConfig(**kw)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory) -> str:
    """Six 32x32 scenes; returns the manifest path."""
    root = tmp_path_factory.mktemp("data")
    manifest = datasynth.build_dataset(seed=0, count=6, out_dir=str(root), size=32)
    assert manifest.count == 6
    return os.path.join(str(root), "manifest.txt")


@pytest.fixture(scope="session")
def tiny_run(tiny_dataset, tmp_path_factory) -> tuple[str, str]:
    """A 3-step training run on the tiny dataset; (checkpoint, run dir)."""
    out = str(tmp_path_factory.mktemp("run"))
    final = trainer.train(small_train_config(), tiny_dataset, out)
    return final, out


@pytest.fixture(scope="session")
def tiny_model(tiny_run):
    model, _ = trainer.load_model_from_checkpoint(tiny_run[0])
    return model


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def cli_ws(tmp_path_factory):
    """A synth dataset and a 3-step checkpoint, both made via the CLI."""
    root = tmp_path_factory.mktemp("cliws")
    data, run = str(root / "data"), str(root / "run")
    assert cli.main(["synth", "--out", data, "--count", "6", "--seed", "0", "--size", "32"]) == 0
    assert (
        cli.main(
            ["train", "--manifest", os.path.join(data, "manifest.txt"), "--out", run,
             "--steps", "3", "--patch-size", "16", "--checkpoint-every", "0"]
            + SMALL_MODEL_FLAGS
        )
        == 0
    )
    return {
        "data": data,
        "run": run,
        "manifest": os.path.join(data, "manifest.txt"),
        "ckpt": os.path.join(run, "checkpoint_final.ckpt"),
        "syn0": os.path.join(data, "syn", "0000.png"),
        "real1": os.path.join(data, "real", "0001.png"),
    }


@pytest.fixture(scope="session")
def cli_golden(cli_ws, tmp_path_factory):
    """Reference enhance / reconstruction / interpolation outputs."""
    out = tmp_path_factory.mktemp("golden")
    enh, rec = str(out / "enh.png"), str(out / "rec.png")
    assert (
        cli.main(["enhance", "--checkpoint", cli_ws["ckpt"], "--input", cli_ws["syn0"],
                  "--out", enh, "--recon-out", rec])
        == 0
    )
    interp = str(out / "interp")
    assert (
        cli.main(["interpolate", "--checkpoint", cli_ws["ckpt"], "--input", cli_ws["syn0"],
                  "--out-dir", interp, "--alpha", "0,0.5,1"])
        == 0
    )
    return dict(cli_ws, enh=enh, rec=rec, interp=interp)
