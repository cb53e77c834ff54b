"""Timing comparison of the numba and numpy kernel backends.

Measures the three raw kernels, a convolution round trip through the
autograd engine, and a complete optimization step of the default model.
Numba timings exclude compilation: each case runs once for warmup
before the clock starts.

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --repeats 9 --train-steps 5
"""
import argparse
import sys
import time

import numpy as np

sys.path.insert(0, "src")

from clearsea import kernels, losses, trainer
from clearsea.engine import Tensor, conv2d
from clearsea.model import EnhancementModel
from clearsea.trainer import TrainConfig


def best_of(fn, repeats: int) -> float:
    """Minimum wall time of ``repeats`` calls, in seconds."""
    fn()  # warmup: first numba call pays for compilation
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_cases(rng):
    x = rng.standard_normal((1, 32, 66, 66)).astype(np.float32)
    cols = kernels.im2col(x, 3, 3, 1, 1)
    box = rng.standard_normal((1, 3, 64, 64)).astype(np.float32)
    return [
        ("im2col 32x64x64 k3", lambda: kernels.im2col(x, 3, 3, 1, 1)),
        ("im2col 32x64x64 k3 s2", lambda: kernels.im2col(x, 3, 3, 2, 2)),
        ("col2im 32x64x64 k3", lambda: kernels.col2im(cols, 32, 66, 66, 3, 3, 1, 1)),
        ("box_sum 3x64x64 w7", lambda: kernels.box_sum_valid(box, 7)),
    ]


def conv_case(rng):
    x = Tensor(rng.standard_normal((1, 32, 66, 66)).astype(np.float32), requires_grad=True)
    w = Tensor(rng.standard_normal((64, 32, 3, 3)).astype(np.float32) * 0.05, requires_grad=True)
    b = Tensor(np.zeros(64, dtype=np.float32), requires_grad=True)

    def run():
        x.grad = w.grad = b.grad = None
        conv2d(x, w, b).mean().backward()

    return [("conv 32->64 fwd+bwd", run)]


def train_case(rng, steps: int):
    cfg = TrainConfig()
    model = EnhancementModel(cfg.model, seed=cfg.seed)
    opt_g, opt_d = trainer._build_optimizers(model, cfg)
    extractor = losses.PerceptualExtractor(seed=cfg.seed)
    batch = tuple(
        rng.random((1, 3, cfg.patch_size, cfg.patch_size)).astype(np.float32) for _ in range(3)
    )

    def run():
        for _ in range(steps):
            trainer.train_step(batch, model, opt_g, opt_d, cfg, extractor)

    return [(f"train step x{steps} (64px)", run)]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5, help="timed repetitions per case (best is kept)")
    parser.add_argument("--train-steps", type=int, default=3, help="optimization steps per timing")
    parser.add_argument("--skip-train", action="store_true", help="only time the raw kernels and conv")
    args = parser.parse_args(argv)

    backends = ["numpy"] + (["numba"] if kernels.HAS_NUMBA else [])
    if not kernels.HAS_NUMBA:
        print("numba not importable; timing the numpy backend alone")

    results: dict[str, dict[str, float]] = {}
    for backend in backends:
        kernels.set_backend(backend)
        rng = np.random.default_rng(0)
        cases = kernel_cases(rng) + conv_case(rng)
        if not args.skip_train:
            cases += train_case(rng, args.train_steps)
        for name, fn in cases:
            results.setdefault(name, {})[backend] = best_of(fn, args.repeats)

    width = max(len(n) for n in results)
    header = f"{'case':<{width}}  " + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name, times in results.items():
        row = f"{name:<{width}}  " + "".join(f"{times[b] * 1e3:>10.2f}ms" for b in backends)
        if len(backends) == 2:
            row += f"{times['numpy'] / times['numba']:>9.1f}x"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
