"""Compare the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--repeat 5]

Times the hot paths the toolkit leans on: batched MLP logits, the fused
forward-and-count used for every Monte Carlo accuracy draw, the sign-clip
perturbation step, and a full n=200 smoothing run.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from learncert import kernels, nn, smoothing
from learncert.data import BlobSpec, make_blobs


def cases(repeat_data):
    spec, theta, test = repeat_data
    widths = spec.layer_widths
    x, y = test.samples, test.labels
    delta = np.zeros((10, 64))
    grad = np.random.default_rng(0).standard_normal((10, 64))
    cfg = smoothing.SmoothingConfig(0.25, 200, 0)
    return {
        "mlp_logits (1000x64 -> 10)": lambda: kernels.mlp_logits(theta, widths, kernels.ACT_RELU, x),
        "mlp_count_correct": lambda: kernels.mlp_count_correct(theta, widths, kernels.ACT_RELU, x, y),
        "sign_clip_step (10x64)": lambda: kernels.sign_clip_step(delta, grad, 0.003, 8 / 255),
        "sample_accuracies n=200": lambda: smoothing.sample_accuracies(theta, spec, test, cfg),
    }


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args()

    _, test = make_blobs(BlobSpec())
    spec = nn.ModelSpec()
    theta = nn.init_params(spec, 0)
    backends = kernels.available_backends()
    if "compiled" not in backends:
        print("compiled backend not built; run `python setup.py build_ext --inplace` first")
    timings = {}
    for backend in backends:
        previous = kernels.use_backend(backend)
        try:
            for name, fn in cases((spec, theta, test)).items():
                number = 1 if name.startswith("sample") else 50
                best = min(timeit.repeat(fn, number=number, repeat=args.repeat)) / number
                timings.setdefault(name, {})[backend] = best
        finally:
            kernels.use_backend(previous)

    print(f"{'kernel':32s} " + " ".join(f"{b:>12s}" for b in backends) + "   speedup")
    for name, t in timings.items():
        cells = " ".join(f"{t[b] * 1e3:10.3f}ms" for b in backends)
        speed = f"{t['python'] / t['compiled']:8.2f}x" if len(t) == 2 else ""
        print(f"{name:32s} {cells} {speed}")


if __name__ == "__main__":
    main()
