"""DBPN assembly: feature extraction, back-projection stages, reconstruction."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .projection import ConvLayer, ProjectionUnit, scale_preset
from .resample import upscale_matrices
from .tensor import DimensionError, Tensor

RECURRENT_MODES = ("none", "shared", "transition")


@dataclass
class NetworkConfig:
    """Declarative description of one DBPN variant.

    ``dense_window`` caps how many of the most recent same-resolution outputs a
    dense unit concatenates (None = all of them); ``dense_scope`` restricts dense
    wiring to down- or up-units.
    """

    scale: int = 4
    n0: int = 128
    nR: int = 32
    stages: int = 2
    color: str = "Y"
    dense: bool = False
    dense_window: int | None = None
    dense_scope: str = "all"
    error_feedback: bool = True
    recurrent: str = "none"
    iterations: int = 1
    residual: bool = False
    recon_kernel: int = 1
    per_channel_slope: bool = False
    name: str = "custom"

    def __post_init__(self):
        scale_preset(self.scale)
        if self.stages < 1:
            raise ValueError("stages must be >= 1")
        if not (self.n0 >= self.nR >= 1):
            raise ValueError(f"need n0 >= nR >= 1, got n0={self.n0}, nR={self.nR}")
        if self.color not in ("Y", "RGB"):
            raise ValueError(f"color must be 'Y' or 'RGB', got {self.color!r}")
        if self.recurrent not in RECURRENT_MODES:
            raise ValueError(f"recurrent must be one of {RECURRENT_MODES}")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.recurrent == "shared" and (self.dense or self.stages != 1):
            raise ValueError("shared-unit recurrence uses one up/down pair: stages=1, no dense connections")
        if self.dense_scope not in ("all", "up", "down"):
            raise ValueError(f"dense_scope must be all/up/down, got {self.dense_scope!r}")
        if self.dense_window is not None and self.dense_window < 1:
            raise ValueError("dense_window must be >= 1")
        if self.recon_kernel not in (1, 3):
            raise ValueError("recon_kernel must be 1 or 3")

    @property
    def channels(self) -> int:
        return 1 if self.color == "Y" else 3

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


_PRESETS = {
    "DBPN-SS": dict(n0=64, nR=18, stages=2),
    "DBPN-S": dict(n0=128, nR=32, stages=2),
    "DBPN-M": dict(n0=128, nR=32, stages=4),
    "DBPN-L": dict(n0=128, nR=32, stages=6),
    "D-DBPN-L": dict(n0=128, nR=32, stages=6, dense=True, dense_window=2, dense_scope="down"),
    "D-DBPN": dict(n0=256, nR=64, stages=7, color="RGB", dense=True, recon_kernel=3),
    "DBPN": dict(n0=256, nR=64, stages=10, color="RGB", dense=True, recon_kernel=3),
    "DBPN-RES": dict(n0=256, nR=64, stages=10, color="RGB", dense=True, recon_kernel=3, residual=True),
    "DBPN-R64-10": dict(n0=256, nR=64, stages=1, color="RGB", recurrent="shared", iterations=10, recon_kernel=3),
    "DBPN-R128-5": dict(n0=256, nR=128, stages=1, color="RGB", recurrent="shared", iterations=5, recon_kernel=3),
    "DBPN-MR64-3": dict(
        n0=256, nR=64, stages=7, color="RGB", dense=True, recurrent="transition", iterations=3, recon_kernel=3
    ),
    "DBPN-RES-MR64-3": dict(
        n0=256,
        nR=64,
        stages=7,
        color="RGB",
        dense=True,
        recurrent="transition",
        iterations=3,
        recon_kernel=3,
        residual=True,
    ),
}

PRESET_NAMES = tuple(_PRESETS)


def preset(name: str, scale: int = 4, **overrides) -> NetworkConfig:
    try:
        fields = _PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}") from None
    return NetworkConfig(scale=scale, name=name, **{**fields, **overrides})


# ---------------------------------------------------------------------------
# wiring


def _dense_for(config: NetworkConfig, direction: str) -> bool:
    return config.dense and config.dense_scope in ("all", direction)


def _window(config: NetworkConfig, outputs: list, direction: str) -> list:
    """Inputs for the next unit: newest first, capped by the dense window."""
    if not _dense_for(config, direction):
        return outputs[-1:]
    recent = outputs[::-1]
    return recent if config.dense_window is None else recent[: config.dense_window]


def unit_fan_in(config: NetworkConfig) -> list[tuple[str, int]]:
    """(direction, number of concatenated maps) for each unit of one stage pass."""
    fan = []
    n_h = n_l = 0
    for t in range(config.stages):
        if t == 0:
            fan.append(("up", 1))
        else:
            fan.append(("up", len(_window(config, [None] * n_l, "up"))))
        n_h += 1
        if t < config.stages - 1 or config.recurrent == "shared":
            fan.append(("down", len(_window(config, [None] * n_h, "down"))))
            n_l += 1
    return fan


@dataclass
class DbpnNetwork:
    config: NetworkConfig
    feat0: ConvLayer
    feat1: ConvLayer
    units: list[ProjectionUnit]
    reconstruction: ConvLayer
    dtype: type = field(default=np.float32)

    def weighted_layers(self) -> list[ConvLayer]:
        layers = [self.feat0, self.feat1]
        for u in self.units:
            layers.extend(u.weighted_layers())
        layers.append(self.reconstruction)
        return layers

    def parameters(self) -> list[Tensor]:
        ps: list[Tensor] = []
        for layer in self.weighted_layers():
            ps.extend(layer.parameters())
        return ps

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return [(p.name, p) for p in self.parameters()]

    def __call__(self, x: Tensor) -> Tensor:
        return forward(self, x)


def collected_maps(config: NetworkConfig) -> int:
    """Number of HR maps concatenated into the reconstruction layer."""
    if config.recurrent == "shared":
        return config.iterations
    if config.recurrent == "transition":
        return config.iterations
    return config.stages


def build(config: NetworkConfig, seed: int = 0, dtype=np.float32) -> DbpnNetwork:
    """Construct every layer of ``config`` and He-initialize it from ``seed``."""
    rng = np.random.default_rng(seed)
    ps = scale_preset(config.scale)
    kw = dict(per_channel_slope=config.per_channel_slope, dtype=dtype)
    feat0 = ConvLayer("feat0", config.channels, config.n0, 3, 1, 1, **kw)
    feat1 = ConvLayer("feat1", config.n0, config.nR, 1, 1, 0, **kw)
    units = []
    counters = {"up": 0, "down": 0}
    for direction, fan in unit_fan_in(config):
        counters[direction] += 1
        units.append(
            ProjectionUnit(
                f"{direction}{counters[direction]}",
                direction,
                config.nR,
                ps,
                in_channels=fan * config.nR,
                error_feedback=config.error_feedback,
                **kw,
            )
        )
    k = config.recon_kernel
    recon = ConvLayer(
        "recon", collected_maps(config) * config.nR, config.channels, k, 1, k // 2, activation=False, dtype=dtype
    )
    net = DbpnNetwork(config, feat0, feat1, units, recon, dtype)
    for layer in net.weighted_layers():
        layer.init(rng)
    return net


def _stage_pass(net: DbpnNetwork, seed_map: Tensor) -> tuple[list[Tensor], list[Tensor]]:
    cfg = net.config
    hs: list[Tensor] = []
    ls: list[Tensor] = []
    units = iter(net.units)
    for t in range(cfg.stages):
        up = next(units)
        hs.append(up([seed_map] if t == 0 else _window(cfg, ls, "up")))
        if t < cfg.stages - 1:
            ls.append(next(units)(_window(cfg, hs, "down")))
    return hs, ls


def forward(net: DbpnNetwork, lr: Tensor) -> Tensor:
    """Super-resolve an (n, c, h, w) batch to (n, c, s*h, s*w)."""
    cfg = net.config
    if lr.data.ndim != 4 or lr.shape[1] != cfg.channels:
        raise DimensionError(f"{cfg.name}: expected (n, {cfg.channels}, h, w) input, got {lr.shape}")
    x = net.feat1(net.feat0(lr))
    if cfg.recurrent == "shared":
        up, down = net.units
        collected = []
        l = x
        for i in range(cfg.iterations):
            h = up(l)
            collected.append(h)
            if i < cfg.iterations - 1:
                l = down(h)
    elif cfg.recurrent == "transition":
        collected = []
        l = x
        for _ in range(cfg.iterations):
            hs, ls = _stage_pass(net, l)
            collected.append(hs[-1])
            if ls:
                l = ls[-1]
    else:
        collected, _ = _stage_pass(net, x)
    out = net.reconstruction(T.concat_channels(collected))
    if cfg.residual:
        mh, mw = upscale_matrices(lr.shape[2], lr.shape[3], cfg.scale)
        out = T.add(out, T.resize_separable(lr, mh, mw))
    return out


def count_params(net: DbpnNetwork) -> int:
    return int(sum(p.size for p in net.parameters()))


# ---------------------------------------------------------------------------
# summaries


@dataclass
class LayerRow:
    name: str
    kind: str
    f: int
    n: int
    st: int
    pd: int
    in_ch: int
    params: int


@dataclass
class NetworkSummary:
    config: NetworkConfig
    rows: list[LayerRow]
    total: int

    @property
    def depth(self) -> int:
        return len(self.rows)

    @property
    def bottlenecks(self) -> list[LayerRow]:
        return [r for r in self.rows if r.name.endswith(".bottleneck")]

    def format(self) -> str:
        c = self.config
        lines = [
            f"{c.name} x{c.scale}  n0={c.n0} nR={c.nR} T={c.stages} color={c.color} "
            f"dense={'yes' if c.dense else 'no'} ef={'on' if c.error_feedback else 'off'} "
            f"recurrent={c.recurrent} iterations={c.iterations} residual={'yes' if c.residual else 'no'}",
            f"{'#':>3}  {'layer':<18} {'kind':<6} {'(f,n,st,pd)':<14} {'in':>5} {'params':>10}",
        ]
        for i, r in enumerate(self.rows, 1):
            geo = f"({r.f},{r.n},{r.st},{r.pd})"
            lines.append(f"{i:>3}  {r.name:<18} {r.kind:<6} {geo:<14} {r.in_ch:>5} {r.params:>10,}")
        lines.append(f"weighted layers: {self.depth}")
        lines.append(f"total parameters: {self.total:,}")
        return "\n".join(lines)


def describe(net: DbpnNetwork) -> NetworkSummary:
    rows = []
    for layer in net.weighted_layers():
        rows.append(
            LayerRow(
                layer.name,
                layer.kind,
                layer.f,
                layer.out_ch,
                layer.stride,
                layer.pad,
                layer.in_ch,
                sum(p.size for p in layer.parameters()),
            )
        )
    return NetworkSummary(net.config, rows, count_params(net))


# Published "Parameters (k)" figures.
TABLE1_PARAMS_K = {
    "DBPN-SS": {2: 106, 4: 188, 8: 421},
    "DBPN-S": {2: 337, 4: 595, 8: 1332},
    "DBPN-M": {2: 779, 4: 1381, 8: 3101},
    "DBPN-L": {2: 1221, 4: 2168, 8: 4871},
    "D-DBPN-L": {2: 1230, 4: 2176, 8: 4879},
    "D-DBPN": {2: 5819, 4: 10426, 8: 23205},
    "DBPN": {2: 8811, 4: 15348, 8: 34026},
}

# 4x figures for the recurrent/residual variants.
VARIANT_PARAMS_K = {
    "DBPN": 15348,
    "DBPN-R64-10": 1614,
    "DBPN-R128-5": 6349,
    "DBPN-MR64-3": 10419,
    "DBPN-RES": 15348,
    "DBPN-RES-MR64-3": 10419,
}

TABLE1_DEPTH = {"DBPN-SS": 12, "DBPN-S": 12, "DBPN-M": 24, "DBPN-L": 36, "D-DBPN-L": 40, "D-DBPN": 52, "DBPN": 76}


def published_params_k(name: str, scale: int) -> int | None:
    if name in TABLE1_PARAMS_K:
        return TABLE1_PARAMS_K[name].get(scale)
    if scale == 4:
        return VARIANT_PARAMS_K.get(name)
    return None
