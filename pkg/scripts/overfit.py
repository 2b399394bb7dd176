"""Overfit DBPN-SS on eight fixed 32x32 patches and compare with bicubic.

    python3 scripts/overfit.py --iterations 2000 --lr 1e-3 [--log log.csv]
"""

import argparse
import time

import numpy as np

from dbpn import resample
from dbpn.imaging import load_image, luminance
from dbpn.metrics import EvalProtocol, psnr
from dbpn.training import PairDataset, TrainConfig, train, validate


def main() -> None:
    ap = argparse.ArgumentParser(description="overfit smoke run")
    ap.add_argument("--image", default="tests/data/astronaut128.png")
    ap.add_argument("--iterations", type=int, default=2000)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--preset", default="DBPN-SS")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--log", help="write the training log CSV here")
    args = ap.parse_args()

    y = luminance(load_image(args.image)).pixels
    patches = [y[r : r + 32, c : c + 32] for r in (0, 32, 64, 96) for c in (16, 80)]
    ds = PairDataset.from_hr(patches, 2)
    cfg = TrainConfig(
        scale=2,
        preset=args.preset,
        batch_size=len(patches),
        iterations=args.iterations,
        lr=args.lr,
        sampling="sequential",
        log_interval=max(1, args.iterations // 20),
        seed=args.seed,
    )
    start = time.perf_counter()
    net, log = train(cfg, ds)
    for r in log.records:
        print(f"iter {r.iteration:>6}  lr {r.lr:.0e}  L1 {r.loss:.5f}")
    bicubic = np.mean([psnr(np.clip(resample.upscale(l, 2), 0, 1), h, EvalProtocol(scale=2)) for l, h in ds.pairs])
    print(f"bicubic {bicubic:.2f} dB, network {validate(net, ds.pairs, 2):.2f} dB, {time.perf_counter() - start:.0f}s")
    if args.log:
        log.to_csv(args.log)


if __name__ == "__main__":
    main()
