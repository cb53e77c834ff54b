"""Command-line entry point.

One executable, eight subcommands: synth, train, enhance, translate,
interpolate, eval, latents, serve.  Every option can come from three
layers, resolved in order: command line beats config file beats the
built-in default.  Config files are plain ``key = value`` lines using
the option names with underscores; unknown keys are rejected.

Each artifact-producing run writes its fully resolved options back to
disk (``run_config.txt`` in the output directory, or ``<out>.config.txt``
next to single-file outputs), and that echo is itself a valid
``--config`` file, so a run can be replayed exactly.  ``serve`` has no
output directory and prints its resolved options instead.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import datasynth, imageio, latentlab, metrics, trainer
from .errors import DataError, NumericError
from .losses import LossWeights
from .model import REAL, SYN, ModelConfig
from .trainer import TrainConfig


@dataclass(frozen=True)
class Opt:
    name: str  # dest and config-file key
    typ: str  # int | float | str | bool
    default: object = None
    help: str = ""
    choices: tuple | None = None
    required: bool = False

    @property
    def flag(self) -> str:
        return "--" + self.name.replace("_", "-")


def _scalar_opts(cls, helps: dict[str, str], skip: tuple = ()) -> list[Opt]:
    """One Opt per plain-valued dataclass field, defaults carried over."""
    opts = []
    kinds = {bool: "bool", int: "int", float: "float", str: "str"}
    for f in dataclasses.fields(cls):
        if f.name in skip or f.default is dataclasses.MISSING:
            continue
        opts.append(
            Opt(
                f.name,
                kinds[type(f.default)],
                f.default,
                helps.get(f.name, ""),
                choices=("lsgan", "log") if f.name == "gan_form" else None,
            )
        )
    return opts


_TRAIN_HELPS = {
    "steps": "optimization steps",
    "patch_size": "square crop fed to the model (default 64; 128 is the reference setting)",
    "batch_size": "patches per step",
    "learning_rate": "Adam step size",
    "seed": "controls init and data sampling",
    "gan_form": "least-squares or log adversarial objective",
    "ssim_window": "box window for the structural term",
    "hflip": "random horizontal flips while sampling",
    "checkpoint_every": "periodic checkpoint interval in steps (0 disables)",
    "disable_cycle": "ablation: drop the cycle term",
    "disable_l1": "ablation: drop the pixel term",
    "disable_ssim": "ablation: drop the structural term",
    "disable_perceptual": "ablation: drop the feature-distance term",
    "disable_gan": "ablation: drop the adversarial terms",
}
_WEIGHT_HELPS = {
    "lambda_self": "weight of the self-reconstruction term",
    "lambda_latent": "weight of the clean-style agreement term",
    "lambda_tv": "weight of the smoothness term",
    "lambda_per": "weight of the feature-distance term",
    "lambda_iq": "weight of the pixel+structural pair",
}

TRAIN_OPTS = _scalar_opts(TrainConfig, _TRAIN_HELPS, skip=("weights", "model"))
WEIGHT_OPTS = _scalar_opts(LossWeights, _WEIGHT_HELPS)
MODEL_OPTS = _scalar_opts(ModelConfig, {})

_COMMANDS: dict[str, dict] = {
    "synth": {
        "help": "render a synthetic dataset with paired degradations",
        "opts": [
            Opt("out", "str", required=True, help="dataset directory"),
            Opt("count", "int", required=True, help="number of scenes"),
            Opt("seed", "int", 0, "generator seed"),
            Opt("size", "int", 64, "square image size"),
            Opt("heldout_fraction", "float", 0.25, "tail fraction reserved for evaluation"),
        ],
    },
    "train": {
        "help": "optimize a model on a synthesized dataset",
        "opts": [
            Opt("manifest", "str", required=True, help="dataset manifest path"),
            Opt("out", "str", required=True, help="run directory for logs and checkpoints"),
            Opt("resume", "str", None, "checkpoint to continue from"),
            Opt("progress_every", "int", 100, "print a progress line every N steps (0 silences)"),
        ]
        + TRAIN_OPTS
        + WEIGHT_OPTS
        + MODEL_OPTS,
    },
    "enhance": {
        "help": "map a degraded image to its clean rendering",
        "opts": [
            Opt("checkpoint", "str", required=True),
            Opt("input", "str", required=True, help="degraded image (PNG)"),
            Opt("out", "str", required=True, help="enhanced output (PNG)"),
            Opt("domain", "str", SYN, "which degraded domain the input belongs to", choices=(SYN, REAL)),
            Opt("recon_out", "str", None, "also write the self-reconstruction (decode with the original style)"),
        ],
    },
    "translate": {
        "help": "re-render an image under another image's style",
        "opts": [
            Opt("checkpoint", "str", required=True),
            Opt("input", "str", required=True, help="content source image"),
            Opt("style_ref", "str", required=True, help="image whose style to adopt"),
            Opt("target", "str", required=True, help="domain of the style reference", choices=(SYN, REAL)),
            Opt("out", "str", required=True),
        ],
    },
    "interpolate": {
        "help": "sweep the enhancement level, one image per alpha",
        "opts": [
            Opt("checkpoint", "str", required=True),
            Opt("input", "str", required=True),
            Opt("out_dir", "str", required=True),
            Opt("domain", "str", SYN, choices=(SYN, REAL)),
            Opt("alpha", "str", "0,0.25,0.5,0.75,1", "comma-separated enhancement levels"),
        ],
    },
    "eval": {
        "help": "score images listed in a pairs manifest",
        "opts": [
            Opt("pairs", "str", required=True, help="manifest of pair.<id>.image / pair.<id>.reference lines"),
            Opt("metrics", "str", "psnr,ssim", "comma-separated subset of psnr,ssim,uiqm,uciqe"),
            Opt("out", "str", required=True, help="report CSV path"),
        ],
    },
    "latents": {
        "help": "harvest style latents, embed them, and score separation",
        "opts": [
            Opt("checkpoint", "str", required=True),
            Opt("manifest", "str", required=True),
            Opt("out_dir", "str", required=True),
            Opt("split", "str", "all", "which manifest split to harvest", choices=("all", "train", "heldout")),
            Opt("seed", "int", 0, "embedding seed"),
            Opt("scatter", "bool", False, "render a 2D scatter PNG"),
        ],
    },
    "serve": {
        "help": "run the HTTP inference service",
        "opts": [
            Opt("checkpoint", "str", required=True),
            Opt("host", "str", "127.0.0.1"),
            Opt("port", "int", 8765),
            Opt("static_dir", "str", None, "optionally serve a UI build from this directory"),
            Opt("cache_size", "int", 16, "uploads kept in memory (LRU)"),
            Opt("max_side", "int", 1024, "largest accepted image side"),
            Opt("verbose", "bool", False, "log requests to stderr"),
        ],
    },
}


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="clearsea", description="underwater image enhancement toolkit")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    subparsers = {}
    for name, spec in _COMMANDS.items():
        p = sub.add_parser(name, help=spec["help"])
        p.add_argument("--config", default=None, help="key = value file supplying defaults for any option")
        for o in spec["opts"]:
            if o.typ == "bool":
                p.add_argument(o.flag, dest=o.name, action="store_const", const=True, default=None, help=o.help)
            else:
                kind = {"int": int, "float": float, "str": str}[o.typ]
                p.add_argument(o.flag, dest=o.name, type=kind, default=None, help=o.help, choices=o.choices)
        subparsers[name] = p
    return parser, subparsers


def _read_config(path: str) -> dict[str, str]:
    if not os.path.exists(path):
        raise DataError(f"no such config file: {path}")
    kv: dict[str, str] = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataError(f"malformed config line: {line!r}")
            key, _, value = line.partition("=")
            kv[key.strip()] = value.strip()
    return kv


def _from_string(raw: str, opt: Opt) -> object:
    if opt.typ == "bool":
        lowered = raw.lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise DataError(f"config key {opt.name}: expected a boolean, got {raw!r}")
    try:
        value = {"int": int, "float": float, "str": str}[opt.typ](raw)
    except ValueError as exc:
        raise DataError(f"config key {opt.name}: {exc}") from exc
    if opt.choices and value not in opt.choices:
        raise DataError(f"config key {opt.name}: {value!r} not in {opt.choices}")
    return value


def _resolve(command: str, ns: argparse.Namespace, subparser: argparse.ArgumentParser) -> dict:
    """Merge command line, config file, and defaults; echo-ready."""
    opts = _COMMANDS[command]["opts"]
    config: dict[str, str] = {}
    if ns.config is not None:
        config = _read_config(ns.config)
        if config.get("command", command) != command:
            raise DataError(f"config file is for {config['command']!r}, not {command!r}")
        config.pop("command", None)
        unknown = set(config) - {o.name for o in opts}
        if unknown:
            raise DataError(f"config file has keys {sorted(unknown)} unknown to {command}")
    vals = {}
    for o in opts:
        given = getattr(ns, o.name)
        if given is not None:
            vals[o.name] = given
        elif o.name in config:
            vals[o.name] = _from_string(config[o.name], o)
        else:
            vals[o.name] = o.default
        if vals[o.name] is None and o.required:
            subparser.error(f"missing required option {o.flag}")
    return vals


def _format_value(v: object) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_echo(path: str, command: str, vals: dict) -> None:
    lines = [f"command = {command}"]
    for o in _COMMANDS[command]["opts"]:
        if vals[o.name] is not None:
            lines.append(f"{o.name} = {_format_value(vals[o.name])}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def _load_model(path: str):
    model, meta = trainer.load_model_from_checkpoint(path)
    return model, meta


def _model_input(path: str) -> np.ndarray:
    return imageio.load_rgb(path)


def _decode_at_alpha(model, image: np.ndarray, domain: str, alpha: float) -> np.ndarray:
    """The one decoding path shared by enhance, interpolate, and serve."""
    content = model.encode_content(image)
    z = model.encode_style(image, domain)
    z_clean = model.transform_style(z)
    return model.decode(content, latentlab.manipulate_style(z, z_clean, alpha))


def _wrap_image_errors(fn, context: str):
    try:
        return fn()
    except ValueError as exc:
        raise DataError(f"{context}: {exc}") from exc


# -- subcommand bodies ------------------------------------------------------


def cmd_synth(vals: dict) -> int:
    manifest = datasynth.build_dataset(
        seed=vals["seed"],
        count=vals["count"],
        out_dir=vals["out"],
        size=vals["size"],
        heldout_fraction=vals["heldout_fraction"],
    )
    _write_echo(os.path.join(vals["out"], "run_config.txt"), "synth", vals)
    print(f"wrote {manifest.count} samples under {vals['out']} (manifest.txt, {len(manifest.split('heldout'))} held out)")
    return 0


def cmd_train(vals: dict) -> int:
    weights = LossWeights(**{o.name: vals[o.name] for o in WEIGHT_OPTS})
    model_cfg = ModelConfig(**{o.name: vals[o.name] for o in MODEL_OPTS})
    cfg = TrainConfig(
        weights=weights,
        model=model_cfg,
        **{o.name: vals[o.name] for o in TRAIN_OPTS},
    )
    os.makedirs(vals["out"], exist_ok=True)
    _write_echo(os.path.join(vals["out"], "run_config.txt"), "train", vals)
    final = trainer.train(
        cfg,
        vals["manifest"],
        vals["out"],
        resume=vals["resume"],
        progress_every=vals["progress_every"],
    )
    print(f"final checkpoint: {final}")
    return 0


def cmd_enhance(vals: dict) -> int:
    model, _ = _load_model(vals["checkpoint"])
    image = _model_input(vals["input"])
    out = _wrap_image_errors(lambda: _decode_at_alpha(model, image, vals["domain"], 1.0), vals["input"])
    _ensure_parent(vals["out"])
    imageio.save_rgb(vals["out"], out)
    written = [vals["out"]]
    if vals["recon_out"] is not None:
        recon = _wrap_image_errors(lambda: _decode_at_alpha(model, image, vals["domain"], 0.0), vals["input"])
        _ensure_parent(vals["recon_out"])
        imageio.save_rgb(vals["recon_out"], recon)
        written.append(vals["recon_out"])
    _write_echo(vals["out"] + ".config.txt", "enhance", vals)
    print("wrote " + ", ".join(written))
    return 0


def cmd_translate(vals: dict) -> int:
    model, _ = _load_model(vals["checkpoint"])
    image = _model_input(vals["input"])
    ref = _model_input(vals["style_ref"])

    def run():
        content = model.encode_content(image)
        style = model.encode_style(ref, vals["target"])
        return model.decode(content, style)

    out = _wrap_image_errors(run, vals["input"])
    _ensure_parent(vals["out"])
    imageio.save_rgb(vals["out"], out)
    _write_echo(vals["out"] + ".config.txt", "translate", vals)
    print(f"wrote {vals['out']}")
    return 0


def cmd_interpolate(vals: dict) -> int:
    try:
        alphas = [float(tok) for tok in vals["alpha"].split(",") if tok.strip()]
    except ValueError as exc:
        raise ValueError(f"bad --alpha list {vals['alpha']!r}: {exc}") from exc
    if not alphas:
        raise ValueError("empty --alpha list")
    names = [f"alpha_{a:.2f}.png" for a in alphas]
    if len(set(names)) != len(names):
        raise ValueError("alpha values collide at two decimals; thin the grid")
    model, _ = _load_model(vals["checkpoint"])
    image = _model_input(vals["input"])
    os.makedirs(vals["out_dir"], exist_ok=True)
    for a, name in zip(alphas, names):
        out = _wrap_image_errors(lambda: _decode_at_alpha(model, image, vals["domain"], a), vals["input"])
        imageio.save_rgb(os.path.join(vals["out_dir"], name), out)
    _write_echo(os.path.join(vals["out_dir"], "run_config.txt"), "interpolate", vals)
    print(f"wrote {len(alphas)} images under {vals['out_dir']}")
    return 0


def cmd_eval(vals: dict) -> int:
    names = [m.strip() for m in vals["metrics"].split(",") if m.strip()]
    _ensure_parent(vals["out"])
    report = metrics.evaluate_folder(vals["pairs"], names, vals["out"])
    _write_echo(vals["out"] + ".config.txt", "eval", vals)
    print("means: " + ", ".join(f"{n} = {report.means[n]:.6g}" for n in report.metrics))
    print(f"wrote {vals['out']}")
    return 0


def cmd_latents(vals: dict) -> int:
    model, _ = _load_model(vals["checkpoint"])
    split = None if vals["split"] == "all" else vals["split"]
    col = latentlab.harvest_latents(vals["manifest"], model, split=split)
    result = latentlab.embed_and_score(col, vals["seed"])
    os.makedirs(vals["out_dir"], exist_ok=True)
    col.save_csv(os.path.join(vals["out_dir"], "latents.csv"))
    latentlab.save_embedding_csv(col, result, os.path.join(vals["out_dir"], "embedding.csv"))
    if vals["scatter"]:
        latentlab.render_scatter(col, result, os.path.join(vals["out_dir"], "scatter.png"))
    _write_echo(os.path.join(vals["out_dir"], "run_config.txt"), "latents", vals)
    print(f"latents = {len(col)}")
    print(f"silhouette = {result.silhouette!r}")
    print(f"degenerate = {str(result.degenerate).lower()}")
    for (t1, t2), d in sorted(result.centroid_distances.items()):
        print(f"centroid_distance.{t1}.{t2} = {d!r}")
    return 0


def cmd_serve(vals: dict) -> int:
    from . import serve

    for o in _COMMANDS["serve"]["opts"]:
        if vals[o.name] is not None:
            print(f"{o.name} = {_format_value(vals[o.name])}")
    cfg = serve.ServiceConfig(
        checkpoint=vals["checkpoint"],
        host=vals["host"],
        port=vals["port"],
        static_dir=vals["static_dir"],
        cache_size=vals["cache_size"],
        max_side=vals["max_side"],
        verbose=vals["verbose"],
    )
    serve.run(cfg)
    return 0


_DISPATCH = {
    "synth": cmd_synth,
    "train": cmd_train,
    "enhance": cmd_enhance,
    "translate": cmd_translate,
    "interpolate": cmd_interpolate,
    "eval": cmd_eval,
    "latents": cmd_latents,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    parser, subparsers = build_parser()
    try:
        ns = parser.parse_args(argv)
        vals = _resolve(ns.command, ns, subparsers[ns.command])
        return _DISPATCH[ns.command](vals)
    except SystemExit as exc:  # argparse printed its own diagnostic
        return int(exc.code) if exc.code else 0
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
