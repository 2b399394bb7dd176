"""Desk-scale training loop: patch sampling, L1/MSE objective, Adam, step decay."""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import tensor as T
from .checkpoint import load_checkpoint, save_checkpoint
from .imaging import ImagePlane, augment, crop_to_multiple, degrade, draw_augment, load_image, luminance
from .metrics import EvalProtocol, psnr
from .network import DbpnNetwork, NetworkConfig, build, preset
from .optim import Adam
from .resample import resize_bicubic
from .tensor import Tensor, no_grad

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    dataset: str | None = None
    scale: int = 4
    preset: str = "DBPN-SS"
    network: NetworkConfig | None = None
    batch_size: int = 16
    patch_size: int = 40
    iterations: int = 2000
    lr: float = 1e-4
    decay_factor: float = 10.0
    decay_interval: int | None = None  # None: half the run (the published ratio); 0: no decay
    seed: int = 0
    checkpoint_interval: int = 0
    checkpoint_dir: str = "checkpoints"
    loss: str = "l1"
    log_interval: int = 50
    augment: bool = True
    scale_jitter: bool = False
    scale_jitter_range: tuple[float, float] = (0.5, 1.0)
    sampling: str = "random"  # or "sequential": walk the dataset in order, no crops
    dtype: str = "float32"
    threads: int = 1

    def __post_init__(self):
        if self.loss not in ("l1", "mse"):
            raise ValueError(f"loss must be 'l1' or 'mse', got {self.loss!r}")
        if self.sampling not in ("random", "sequential"):
            raise ValueError(f"sampling must be 'random' or 'sequential', got {self.sampling!r}")
        if self.decay_interval is None:
            self.decay_interval = self.iterations // 2
        if self.decay_interval < 0:
            raise ValueError("decay_interval must be >= 0")
        if self.decay_interval > self.iterations:
            raise ValueError(
                f"decay_interval {self.decay_interval} exceeds iterations {self.iterations}; use 0 to disable decay"
            )
        if self.iterations < 0 or self.batch_size < 1 or self.patch_size < 1:
            raise ValueError("iterations must be >= 0, batch_size and patch_size >= 1")

    def network_config(self) -> NetworkConfig:
        return self.network if self.network is not None else preset(self.preset, self.scale)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["network"] = None if self.network is None else self.network.to_dict()
        d["scale_jitter_range"] = list(self.scale_jitter_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if d.get("network") is not None:
            d["network"] = NetworkConfig.from_dict(d["network"])
        if "scale_jitter_range" in d:
            d["scale_jitter_range"] = tuple(d["scale_jitter_range"])
        known = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


_INT_KEYS = {"scale", "batch_size", "patch_size", "iterations", "seed", "checkpoint_interval", "log_interval", "threads"}
_FLOAT_KEYS = {"lr", "decay_factor"}
_BOOL_KEYS = {"augment", "scale_jitter"}


def parse_config_file(path) -> dict:
    """Read ``key = value`` lines (``#`` comments) into TrainConfig keyword values."""
    out: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        out[key] = _coerce(key, value, f"{path}:{lineno}")
    return out


def _coerce(key: str, value: str, where: str):
    if key in _INT_KEYS:
        return int(value)
    if key in _FLOAT_KEYS:
        return float(value)
    if key in _BOOL_KEYS:
        if value.lower() not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
            raise ValueError(f"{where}: {key} expects a boolean, got {value!r}")
        return value.lower() in ("1", "true", "yes", "on")
    if key == "decay_interval":
        if value.lower() == "auto":
            return None
        return 0 if value.lower() in ("none", "off", "") else int(value)
    if key == "scale_jitter_range":
        lo, hi = (float(v) for v in value.split(","))
        return (lo, hi)
    if key in {f.name for f in dataclasses.fields(TrainConfig)}:
        return value
    raise ValueError(f"{where}: unknown key {key!r}")


# ---------------------------------------------------------------------------
# data


@dataclass
class PairDataset:
    """Aligned (LR, HR) arrays, (H, W) for Y or (H, W, 3) for RGB."""

    scale: int
    pairs: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    hr_images: list[np.ndarray] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.pairs)

    @classmethod
    def from_hr(cls, images, scale: int, color: str = "Y") -> "PairDataset":
        ds = cls(scale)
        for img in images:
            if not isinstance(img, ImagePlane):
                img = ImagePlane(img)
            if color == "Y":
                img = luminance(img)
            elif img.channels != 3:
                img = ImagePlane(np.repeat(img.pixels[:, :, None], 3, axis=2), "RGB")
            hr = crop_to_multiple(img, scale)
            ds.pairs.append((degrade(hr, scale).pixels, hr.pixels))
            ds.hr_images.append(hr.pixels)
        return ds

    @classmethod
    def from_directory(cls, path, scale: int, color: str = "Y") -> "PairDataset":
        """Load ``path/HR`` (as written by ``prepare``) or every image directly in ``path``."""
        root = Path(path)
        hr_dir = root / "HR" if (root / "HR").is_dir() else root
        files = sorted(p for p in hr_dir.iterdir() if p.suffix.lower() in (".png", ".ppm", ".pgm", ".pnm"))
        if not files:
            raise ValueError(f"no training images found in {hr_dir}")
        return cls.from_hr([load_image(p) for p in files], scale, color)


def _to_nchw(batch: list[np.ndarray], dtype) -> np.ndarray:
    arr = np.stack(batch)
    arr = arr[:, None] if arr.ndim == 3 else arr.transpose(0, 3, 1, 2)
    return np.ascontiguousarray(arr, dtype=dtype)


def sample_batch(dataset: PairDataset, config: TrainConfig, rng: np.random.Generator, step: int = 0):
    """Return aligned (lr, hr) tensors of shape (B, C, p, p) and (B, C, s*p, s*p)."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    s = dataset.scale
    dtype = np.dtype(config.dtype)
    lrs, hrs = [], []
    if config.sampling == "sequential":
        for k in range(config.batch_size):
            lr, hr = dataset.pairs[(step * config.batch_size + k) % len(dataset)]
            lrs.append(lr)
            hrs.append(hr)
        return Tensor(_to_nchw(lrs, dtype)), Tensor(_to_nchw(hrs, dtype))
    p = config.patch_size
    for _ in range(config.batch_size):
        i = int(rng.integers(0, len(dataset)))
        lr, hr = dataset.pairs[i]
        if config.scale_jitter:
            lo, hi = config.scale_jitter_range
            factor = float(rng.uniform(lo, hi))
            jittered = resize_bicubic(dataset.hr_images[i], factor, exact=False)
            hr_plane = crop_to_multiple(ImagePlane(jittered), s)
            lr, hr = degrade(hr_plane, s).pixels, hr_plane.pixels
        if min(lr.shape[:2]) < p:
            raise ValueError(f"image {i} ({hr.shape[0]}x{hr.shape[1]}) too small for {p}x{p} LR patches at {s}x")
        draw = draw_augment(lr.shape[:2], p, rng, geometric=config.augment)
        lr_p, hr_p = augment(lr, hr, s, p, draw)
        lrs.append(lr_p)
        hrs.append(hr_p)
    return Tensor(_to_nchw(lrs, dtype)), Tensor(_to_nchw(hrs, dtype))


# ---------------------------------------------------------------------------
# schedule, logging


def lr_schedule(iteration: int, config: TrainConfig) -> float:
    """lr0 * factor^-(iteration // interval)."""
    if iteration < 0:
        raise ValueError("iteration must be >= 0")
    if not config.decay_interval:
        return config.lr
    return config.lr * config.decay_factor ** (-(iteration // config.decay_interval))


@dataclass
class TrainRecord:
    iteration: int
    lr: float
    loss: float
    val_psnr: float | None = None


@dataclass
class TrainLog:
    records: list[TrainRecord] = field(default_factory=list)

    def append(self, rec: TrainRecord) -> None:
        if self.records and rec.iteration <= self.records[-1].iteration:
            raise ValueError("log iterations must be strictly increasing")
        self.records.append(rec)

    @property
    def losses(self) -> list[float]:
        return [r.loss for r in self.records]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "lr", "loss", "val_psnr"])
            for r in self.records:
                w.writerow([r.iteration, f"{r.lr:.6g}", f"{r.loss:.8f}", "" if r.val_psnr is None else f"{r.val_psnr:.4f}"])


def validate(net: DbpnNetwork, pairs, scale: int) -> float:
    """Mean Y-channel PSNR (border crop = scale) of the network on (lr, hr) pairs."""
    vals = []
    dtype = net.dtype
    with no_grad():
        for lr, hr in pairs:
            out = net(Tensor(_to_nchw([lr], dtype))).data[0]
            sr = out[0] if out.shape[0] == 1 else out.transpose(1, 2, 0)
            vals.append(psnr(np.clip(sr, 0, 1), hr, EvalProtocol(scale=scale)))
    return float(np.mean(vals))


# ---------------------------------------------------------------------------
# loop


def _loss_fn(name: str):
    return T.l1_loss if name == "l1" else T.mse_loss


def train(
    config: TrainConfig,
    dataset: PairDataset | None = None,
    net: DbpnNetwork | None = None,
    resume: str | Path | None = None,
    stop_at: int | None = None,
    val_pairs=None,
) -> tuple[DbpnNetwork, TrainLog]:
    """Run sample -> forward -> loss -> backward -> Adam -> schedule.

    ``resume`` continues from a checkpoint (parameters, Adam moments, RNG and
    iteration counter). ``stop_at`` ends early at that iteration, e.g. to
    checkpoint mid-run. A final checkpoint is written when
    ``checkpoint_interval`` is set.
    """
    netcfg = config.network_config()
    if dataset is None:
        if config.dataset is None:
            raise ValueError("no dataset given")
        dataset = PairDataset.from_directory(config.dataset, netcfg.scale, netcfg.color)
    if dataset.scale != netcfg.scale:
        raise ValueError(f"dataset scale {dataset.scale} does not match network scale {netcfg.scale}")
    dtype = np.dtype(config.dtype).type
    rng = np.random.default_rng(config.seed)
    start = 0
    if resume is not None:
        ckpt = load_checkpoint(resume)
        net = ckpt.net
        opt = Adam(net.parameters(), lr=config.lr)
        ckpt.restore_optimizer(opt)
        start = int(ckpt.train_state.get("iteration", 0))
        if "rng" in ckpt.train_state:
            rng.bit_generator.state = ckpt.train_state["rng"]
    else:
        if net is None:
            net = build(netcfg, seed=config.seed, dtype=dtype)
        opt = Adam(net.parameters(), lr=config.lr)
    end = config.iterations if stop_at is None else min(stop_at, config.iterations)
    loss_fn = _loss_fn(config.loss)
    tlog = TrainLog()
    ckdir = Path(config.checkpoint_dir)

    def snapshot(it: int, path: Path) -> None:
        state = {"iteration": it, "rng": rng.bit_generator.state, "train_config": config.to_dict()}
        save_checkpoint(path, net, opt, state)

    with threadpool_limits(limits=config.threads):
        for it in range(start, end):
            opt.lr = lr_schedule(it, config)
            lr_b, hr_b = sample_batch(dataset, config, rng, step=it)
            loss = loss_fn(net(lr_b), hr_b)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingDiverged(f"non-finite loss {value} at iteration {it + 1}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            done = it + 1
            if done % config.log_interval == 0 or done == end:
                val = validate(net, val_pairs, netcfg.scale) if val_pairs else None
                tlog.append(TrainRecord(done, opt.lr, value, val))
                log.info("iter %d lr %.3g loss %.6f%s", done, opt.lr, value, "" if val is None else f" val {val:.2f}dB")
            if config.checkpoint_interval and done % config.checkpoint_interval == 0:
                snapshot(done, ckdir / f"iter_{done:07d}.ckpt")
        if config.checkpoint_interval:
            snapshot(end, ckdir / "final.ckpt")
    return net, tlog
