"""Up- and down-projection units with error feedback, plus their dense and
single-layer ("without error feedback") forms."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .optim import he_init
from .tensor import DimensionError, Tensor


@dataclass(frozen=True)
class ScalePreset:
    s: int
    f: int
    st: int
    pd: int


SCALE_PRESETS = {
    2: ScalePreset(2, 6, 2, 2),
    4: ScalePreset(4, 8, 4, 2),
    8: ScalePreset(8, 12, 8, 2),
}


def scale_preset(s: int) -> ScalePreset:
    try:
        return SCALE_PRESETS[s]
    except KeyError:
        raise ValueError(f"unsupported scale {s}; expected one of {sorted(SCALE_PRESETS)}") from None


class ConvLayer:
    """A conv or transposed-conv layer, optionally followed by PReLU.

    Kernels are (out, in, f, f) for conv and (in, out, f, f) for deconv.
    """

    def __init__(
        self,
        name: str,
        in_ch: int,
        out_ch: int,
        f: int,
        stride: int = 1,
        pad: int = 0,
        transposed: bool = False,
        activation: bool = True,
        per_channel_slope: bool = False,
        dtype=np.float32,
    ):
        self.name = name
        self.in_ch, self.out_ch = in_ch, out_ch
        self.f, self.stride, self.pad = f, stride, pad
        self.transposed = transposed
        shape = (in_ch, out_ch, f, f) if transposed else (out_ch, in_ch, f, f)
        self.weight = Tensor(np.zeros(shape, dtype=dtype), requires_grad=True, name=f"{name}.weight")
        self.bias = Tensor(np.zeros(out_ch, dtype=dtype), requires_grad=True, name=f"{name}.bias")
        self.slope = None
        if activation:
            n = out_ch if per_channel_slope else 1
            self.slope = Tensor(np.full(n, 0.25, dtype=dtype), requires_grad=True, name=f"{name}.slope")

    @property
    def kind(self) -> str:
        return "deconv" if self.transposed else "conv"

    def parameters(self) -> list[Tensor]:
        ps = [self.weight, self.bias]
        if self.slope is not None:
            ps.append(self.slope)
        return ps

    def init(self, rng: np.random.Generator) -> None:
        he_init(self.weight, self.bias, rng, n_filters=self.out_ch)
        if self.slope is not None:
            self.slope.data[...] = 0.25

    def __call__(self, x: Tensor) -> Tensor:
        op = T.conv_transpose2d if self.transposed else T.conv2d
        y = op(x, self.weight, self.bias, self.stride, self.pad)
        return T.prelu(y, self.slope) if self.slope is not None else y


class ProjectionUnit:
    """One up- or down-projection unit.

    With ``error_feedback`` the unit holds three layers (scale, back-project,
    residual); without it a single sampling layer. ``bottleneck`` is a 1x1
    conv applied to concatenated dense inputs wider than ``channels``.
    """

    def __init__(
        self,
        name: str,
        direction: str,
        channels: int,
        preset: ScalePreset,
        in_channels: int | None = None,
        error_feedback: bool = True,
        per_channel_slope: bool = False,
        dtype=np.float32,
    ):
        if direction not in ("up", "down"):
            raise ValueError(f"direction must be 'up' or 'down', got {direction!r}")
        self.name = name
        self.direction = direction
        self.channels = channels
        self.preset = preset
        self.error_feedback = error_feedback
        in_channels = channels if in_channels is None else in_channels
        self.in_channels = in_channels
        kw = dict(per_channel_slope=per_channel_slope, dtype=dtype)
        self.bottleneck = None
        if in_channels > channels:
            self.bottleneck = ConvLayer(f"{name}.bottleneck", in_channels, channels, 1, **kw)
        elif in_channels != channels:
            raise DimensionError(f"{name}: {in_channels} input channels is fewer than nR={channels}")
        geo = dict(f=preset.f, stride=preset.st, pad=preset.pd)
        first_up = direction == "up"
        order = (True, False, True) if first_up else (False, True, False)
        if not error_feedback:
            order = order[:1]
        self.layers = [
            ConvLayer(f"{name}.{i}", channels, channels, transposed=tr, **geo, **kw) for i, tr in enumerate(order)
        ]

    def parameters(self) -> list[Tensor]:
        ps = [] if self.bottleneck is None else self.bottleneck.parameters()
        for layer in self.layers:
            ps.extend(layer.parameters())
        return ps

    def weighted_layers(self) -> list[ConvLayer]:
        return ([] if self.bottleneck is None else [self.bottleneck]) + list(self.layers)

    def init(self, rng: np.random.Generator) -> None:
        for layer in self.weighted_layers():
            layer.init(rng)

    def __call__(self, inputs: Tensor | Sequence[Tensor]) -> Tensor:
        if isinstance(inputs, Tensor):
            inputs = [inputs]
        return dense_project(self, inputs)


def _check_input(unit: ProjectionUnit, x: Tensor, direction: str) -> None:
    if unit.direction != direction:
        raise ValueError(f"{unit.name} is a {unit.direction}-projection unit")
    if x.data.ndim != 4 or x.shape[1] != unit.channels:
        raise DimensionError(f"{unit.name}: expected (n, {unit.channels}, h, w) input, got {x.shape}")


def up_project(unit: ProjectionUnit, l_prev: Tensor, intermediates: dict | None = None) -> Tensor:
    """LR features -> HR features with error feedback.

    h0 = up(l_prev); l0 = down(h0); e = l0 - l_prev; h1 = up(e); return h0 + h1.
    Each layer output is PReLU-activated before the subtraction/sum uses it.
    """
    _check_input(unit, l_prev, "up")
    if not unit.error_feedback:
        return unit.layers[0](l_prev)
    p, g, q = unit.layers
    h0 = p(l_prev)
    l0 = g(h0)
    e = T.sub(l0, l_prev)
    h1 = q(e)
    if intermediates is not None:
        intermediates.update(h0=h0, l0=l0, residual=e, h1=h1)
    return T.add(h0, h1)


def down_project(unit: ProjectionUnit, h: Tensor, intermediates: dict | None = None) -> Tensor:
    """HR features -> LR features; mirror image of ``up_project``."""
    _check_input(unit, h, "down")
    s = unit.preset.s
    if h.shape[2] % s or h.shape[3] % s:
        raise DimensionError(f"{unit.name}: spatial dims {h.shape[2:]} not divisible by {s}")
    if not unit.error_feedback:
        return unit.layers[0](h)
    g1, p, g2 = unit.layers
    l0 = g1(h)
    h0 = p(l0)
    e = T.sub(h0, h)
    l1 = g2(e)
    if intermediates is not None:
        intermediates.update(l0=l0, h0=h0, residual=e, l1=l1)
    return T.add(l0, l1)


def dense_project(unit: ProjectionUnit, prior_outputs: Sequence[Tensor]) -> Tensor:
    """Concatenate prior outputs, squeeze through the bottleneck if present, then project."""
    if not prior_outputs:
        raise DimensionError(f"{unit.name}: no inputs")
    hw = prior_outputs[0].shape[2:]
    for t in prior_outputs:
        if t.shape[2:] != hw:
            raise DimensionError(f"{unit.name}: prior outputs at different resolutions {hw} vs {t.shape[2:]}")
    x = T.concat_channels(prior_outputs)
    if x.shape[1] != unit.in_channels:
        raise DimensionError(f"{unit.name}: {x.shape[1]} concatenated channels, unit expects {unit.in_channels}")
    if unit.bottleneck is not None:
        x = unit.bottleneck(x)
    if unit.direction == "up":
        return up_project(unit, x)
    return down_project(unit, x)


def plain_sample_block(direction: str, layer: ConvLayer, x: Tensor) -> Tensor:
    """Single deconv (up) or conv (down) layer with PReLU; the no-feedback ablation."""
    if (direction == "up") != layer.transposed:
        raise ValueError(f"{direction} block needs a {'deconv' if direction == 'up' else 'conv'} layer")
    return layer(x)
