"""Time the numba kernels against the pure-numpy fallback.

Each backend runs in its own interpreter because the switch is read at
import time::

    python benchmarks/bench_backends.py            # both backends, table
    python benchmarks/bench_backends.py --repeat 5
"""
import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def best_of(fn, repeat):
    fn()  # warm-up, includes JIT compilation
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def worker(repeat):
    from multisvm import backend_name
    from multisvm.harness import SCENARIOS, generate_synthetic
    from multisvm.kernels import KernelSpec, gram_matrix, kernel_expansion
    from multisvm.multiclass import Strategy, train_multiclass
    from multisvm.raster_io import classify_raster, extract_samples
    from multisvm.svm_binary import BinaryProblem, train

    rng = np.random.default_rng(0)
    image, samples, _ = generate_synthetic(**SCENARIOS["overlap"])
    dataset = extract_samples(image, samples)
    xs = rng.normal(size=(1500, 6))
    pixels = image.pixel_features()
    sv, coefs = rng.normal(size=(200, 6)), rng.normal(size=200)
    rbf = KernelSpec.rbf()
    y = np.where(dataset.labels == 1, 1.0, -1.0)
    model = train_multiclass(dataset, Strategy.ONE_AGAINST_ONE, rbf, 10.0)

    cases = {
        "gram rbf 1500x1500": lambda: gram_matrix(rbf.resolve(6), xs),
        "expansion rbf 16384 px x 200 sv": lambda: kernel_expansion(rbf.resolve(6), pixels, sv, coefs),
        "expansion poly3 16384 px x 200": lambda: kernel_expansion(KernelSpec.polynomial(3), pixels, sv, coefs),
        "smo rbf n=120 C=10": lambda: train(BinaryProblem(dataset.features, y, 10.0), rbf.resolve(6)),
        "train 1A1 rbf (3 machines)": lambda: train_multiclass(dataset, Strategy.ONE_AGAINST_ONE, rbf, 10.0),
        "classify 128x128 raster": lambda: classify_raster(model, image),
    }
    out = {name: best_of(fn, repeat) for name, fn in cases.items()}
    print(json.dumps({"backend": backend_name(), "times": out}))


def run_backend(disable_jit, repeat):
    env = dict(os.environ, MULTISVM_DISABLE_JIT="1" if disable_jit else "0")
    proc = subprocess.run([sys.executable, __file__, "--worker", "--repeat", str(repeat)], env=env,
                          capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args()
    if args.worker:
        worker(args.repeat)
        return
    fast = run_backend(False, args.repeat)
    slow = run_backend(True, args.repeat)
    print(f"{'case':<34}{fast['backend']:>12}{slow['backend']:>12}{'ratio':>9}")
    for name, t_fast in fast["times"].items():
        t_slow = slow["times"][name]
        print(f"{name:<34}{t_fast * 1e3:>10.2f}ms{t_slow * 1e3:>10.2f}ms{t_slow / t_fast:>8.1f}x")


if __name__ == "__main__":
    main()
