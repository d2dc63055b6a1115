"""Numba vs pure-numpy kernels.

    python3 benchmarks/bench_kernels.py            # kernel micro-benchmarks
    python3 benchmarks/bench_kernels.py --train    # also time a short training run per backend

The end-to-end timing runs in subprocesses because the backend is chosen at
import time from RAEA_DISABLE_JIT.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from raea import _kernels_numba as nb
from raea import _kernels_numpy as npk


def cases(rng, n_items, n_seg, width, n_rows, n_cols, dim):
    seg = rng.integers(0, n_seg, size=n_items)
    vals = rng.normal(size=n_items)
    mat = rng.normal(size=(n_items, width))
    scores = rng.normal(size=(n_rows, n_cols))
    gold = rng.integers(0, n_cols, size=n_rows)
    a, b = rng.normal(size=(n_rows, dim)), rng.normal(size=(n_cols, dim))
    return {
        "segment_max": lambda k: k.segment_max(vals, seg, n_seg),
        "segment_sum_1d": lambda k: k.segment_sum(vals, seg, n_seg),
        "segment_sum_2d": lambda k: k.segment_sum(mat, seg, n_seg),
        "gold_ranks": lambda k: k.gold_ranks(scores, gold),
        "pairwise_l1": lambda k: k.pairwise_l1(a, b),
    }


def best_of(fn, repeat):
    t = timeit.Timer(fn)
    number, _ = t.autorange()
    return min(t.repeat(repeat=repeat, number=number)) / number


TRAIN_SNIPPET = """
import time
from raea import kernels, pipeline
from raea.kg import ChannelKind
from raea.synth import SynthConfig, generate_aligned_pair, split_seeds
from raea.trainer import TrainConfig, train_channel
p = generate_aligned_pair(SynthConfig(n_entities={n}, rng_seed=0))
b = pipeline.Bundle(p.kg1, p.kg2, split_seeds(p.gold, (0.3, 0.0), 0))
cfg = pipeline.PipelineConfig()
emb = cfg.make_embedder()
inputs = pipeline.channel_inputs(b, ChannelKind.STRUCTURE, cfg, emb)
train_channel(pipeline.new_model(b, ChannelKind.STRUCTURE, cfg, emb), inputs, b.seeds.train, [],
              TrainConfig(max_epochs=2, patience=2))  # warm-up / compile
t0 = time.perf_counter()
train_channel(pipeline.new_model(b, ChannelKind.STRUCTURE, cfg, emb), inputs, b.seeds.train, [],
              TrainConfig(max_epochs={epochs}, patience={epochs}))
print(kernels.BACKEND, (time.perf_counter() - t0) / {epochs})
"""


def train_timing(n_entities, epochs):
    out = {}
    for flag in ("0", "1"):
        env = dict(os.environ, RAEA_DISABLE_JIT=flag)
        res = subprocess.run([sys.executable, "-c", TRAIN_SNIPPET.format(n=n_entities, epochs=epochs)],
                             env=env, capture_output=True, text=True, check=True)
        backend, secs = res.stdout.split()
        out[backend] = float(secs)
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--items", type=int, default=200_000, help="segment op input length")
    ap.add_argument("--segments", type=int, default=5_000)
    ap.add_argument("--width", type=int, default=64)
    ap.add_argument("--rows", type=int, default=500)
    ap.add_argument("--cols", type=int, default=2_000)
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--train", action="store_true", help="time structure-channel epochs per backend")
    ap.add_argument("--train-entities", type=int, default=1000)
    ap.add_argument("--train-epochs", type=int, default=10)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    table = cases(rng, args.items, args.segments, args.width, args.rows, args.cols, args.dim)
    print(f"{'kernel':<16}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, call in table.items():
        ref, got = call(npk), call(nb)  # also compiles the numba version
        np.testing.assert_allclose(got, ref, rtol=1e-10, atol=1e-10)
        t_np = best_of(lambda: call(npk), args.repeat)
        t_nb = best_of(lambda: call(nb), args.repeat)
        print(f"{name:<16}{t_np * 1e3:>12.3f}{t_nb * 1e3:>12.3f}{t_np / t_nb:>9.1f}x")
    if args.train:
        t = train_timing(args.train_entities, args.train_epochs)
        print(f"\nstructure channel, {args.train_entities} entities, seconds per epoch:")
        for backend in ("numpy", "numba"):
            print(f"  {backend:<6} {t[backend]:.4f}")
        print(f"  speedup {t['numpy'] / t['numba']:.2f}x")


if __name__ == "__main__":
    main()
