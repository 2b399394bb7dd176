"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor, no_grad, record_kinks


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_tensor: dict[str, float] = field(default_factory=dict)
    skipped: int = 0  # probes whose +/- evaluations straddled a PReLU or L1 kink
    probed: int = 0

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error < tol


def finite_diff_check(
    fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    step: float = 1e-5,
    names: Sequence[str] | None = None,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
    corrupt: float = 0.0,
) -> GradCheckReport:
    """Compare backward() gradients of the scalar ``fn()`` against central differences.

    The error for one tensor is max|analytic - numeric| / max|numeric|, so it is
    relative to the gradient's own scale. ``max_entries`` probes a random subset
    of large tensors. Probes whose two evaluations see a different sign
    pattern at any kink are skipped, since the central difference is not a
    derivative there; ``report.skipped`` counts them. ``corrupt`` scales the analytic gradients by
    ``1 + corrupt`` before comparing, to prove the harness can fail.
    """
    for t in tensors:
        t.grad = None
    with record_kinks() as base:
        loss = fn()
    loss.backward()
    analytic = [(1.0 + corrupt) * (np.zeros_like(t.data) if t.grad is None else t.grad) for t in tensors]
    for t in tensors:
        t.grad = None

    rng = rng or np.random.default_rng(0)
    names = list(names) if names is not None else [t.name or f"t{i}" for i, t in enumerate(tensors)]
    report = GradCheckReport(0.0)
    for name, t, a in zip(names, tensors, analytic):
        flat = t.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = rng.choice(flat.size, size=max_entries, replace=False)
        numeric = np.empty(idx.size)
        keep = np.ones(idx.size, dtype=bool)
        with no_grad():
            for k, i in enumerate(idx):
                orig = flat[i]
                flat[i] = orig + step
                with record_kinks() as plus:
                    fp = fn().item()
                flat[i] = orig - step
                with record_kinks() as minus:
                    fm = fn().item()
                flat[i] = orig
                numeric[k] = (fp - fm) / (2.0 * step)
                keep[k] = _same_pattern(base, plus) and _same_pattern(base, minus)
        report.skipped += int((~keep).sum())
        report.probed += int(idx.size)
        idx, numeric = idx[keep], numeric[keep]
        a_sel = a.reshape(-1)[idx]
        scale = max(np.abs(numeric).max(initial=0.0), np.abs(a_sel).max(initial=0.0))
        err = 0.0 if scale == 0.0 else float(np.abs(a_sel - numeric).max() / scale)
        report.per_tensor[name] = err
        report.max_rel_error = max(report.max_rel_error, err)
    return report


def _same_pattern(a: list, b: list) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


# ---------------------------------------------------------------------------
# canned suites (float64), shared by the CLI and the tests


def _away_from_zero(rng: np.random.Generator, shape, margin: float = 1e-3) -> np.ndarray:
    """Standard normal draws with |x| >= margin, so no entry sits on a PReLU kink."""
    x = rng.standard_normal(shape)
    small = np.abs(x) < margin
    x[small] = np.where(x[small] < 0, -1.0, 1.0) * (margin + rng.random(int(small.sum())))
    return x


def _probe(fn: Callable[[], Tensor], rng: np.random.Generator) -> Callable[[], Tensor]:
    w = _away_from_zero(rng, fn().shape)
    return lambda: T.weighted_sum(fn(), w)


def op_suite(seed: int = 0, corrupt: float = 0.0) -> dict[str, GradCheckReport]:
    rng = np.random.default_rng(seed)

    def leaf(*shape, name=None):
        return Tensor(_away_from_zero(rng, shape), requires_grad=True, name=name)

    out: dict[str, GradCheckReport] = {}
    for f, st, pd in ((6, 2, 2), (8, 4, 2), (3, 1, 1), (1, 1, 0)):
        h = 2 * st
        x, w, b = leaf(2, 2, h, h), leaf(3, 2, f, f), leaf(3)
        fn = _probe(lambda: T.conv2d(x, w, b, st, pd), rng)
        out[f"conv2d{(f, st, pd)}"] = finite_diff_check(fn, [x, w, b], corrupt=corrupt)
        x, w, b = leaf(2, 2, 3, 3), leaf(2, 3, f, f), leaf(3)
        fn = _probe(lambda: T.conv_transpose2d(x, w, b, st, pd), rng)
        out[f"conv_transpose2d{(f, st, pd)}"] = finite_diff_check(fn, [x, w, b], corrupt=corrupt)
    x, a, ac = leaf(2, 3, 4, 4), leaf(1), leaf(3)
    out["prelu(scalar)"] = finite_diff_check(_probe(lambda: T.prelu(x, a), rng), [x, a], corrupt=corrupt)
    out["prelu(channel)"] = finite_diff_check(_probe(lambda: T.prelu(x, ac), rng), [x, ac], corrupt=corrupt)
    p, q, r = leaf(1, 2, 3, 3), leaf(1, 1, 3, 3), leaf(1, 2, 3, 3)
    out["concat_channels"] = finite_diff_check(_probe(lambda: T.concat_channels([p, q, r]), rng), [p, q, r], corrupt=corrupt)
    out["add"] = finite_diff_check(_probe(lambda: T.add(p, r), rng), [p, r], corrupt=corrupt)
    out["sub"] = finite_diff_check(_probe(lambda: T.sub(p, r), rng), [p, r], corrupt=corrupt)
    c = rng.standard_normal(p.shape)
    out["add_constant"] = finite_diff_check(_probe(lambda: T.add_constant(p, c), rng), [p], corrupt=corrupt)
    from .resample import upscale_matrices

    mh, mw = upscale_matrices(3, 3, 2)
    out["resize_separable"] = finite_diff_check(_probe(lambda: T.resize_separable(p, mh, mw), rng), [p], corrupt=corrupt)
    out["sum"] = finite_diff_check(lambda: T.tensor_sum(p), [p], corrupt=corrupt)
    target = Tensor(p.data + _away_from_zero(rng, p.shape))
    out["l1_loss"] = finite_diff_check(lambda: T.l1_loss(p, target), [p], corrupt=corrupt)
    out["mse_loss"] = finite_diff_check(lambda: T.mse_loss(p, target), [p], corrupt=corrupt)
    return out


def unit_suite(seed: int = 0, corrupt: float = 0.0, shape=(1, 4, 6, 6), scale: int = 2) -> dict[str, GradCheckReport]:
    """Check an up and a down projection unit (all parameters and the input)."""
    from .projection import ProjectionUnit, scale_preset

    rng = np.random.default_rng(seed)
    n, c, h, w = shape
    out = {}
    for direction in ("up", "down"):
        unit = ProjectionUnit(direction, direction, c, scale_preset(scale), dtype=np.float64)
        unit.init(rng)
        for layer in unit.layers:
            layer.slope.data[...] = rng.uniform(0.1, 0.4, layer.slope.shape)
            layer.bias.data[...] = 0.1 * rng.standard_normal(layer.bias.shape)
        x = Tensor(_away_from_zero(rng, shape), requires_grad=True, name="input")
        fn = _probe(lambda: unit(x), rng)
        out[f"{direction}_project{shape}"] = finite_diff_check(fn, [x] + unit.parameters(), corrupt=corrupt)
    return out


def network_suite(seed: int = 0, corrupt: float = 0.0, max_entries: int = 12) -> dict[str, GradCheckReport]:
    """A small dense DBPN in float64 with a sampled subset of entries per tensor."""
    from .network import NetworkConfig, build

    rng = np.random.default_rng(seed)
    out = {}
    configs = {
        "dense": NetworkConfig(scale=2, n0=6, nR=3, stages=3, dense=True, name="tiny-dense"),
        "residual-mr": NetworkConfig(
            scale=2, n0=6, nR=3, stages=2, dense=True, recurrent="transition", iterations=2, residual=True, name="tiny-mr"
        ),
    }
    for label, cfg in configs.items():
        net = build(cfg, seed=seed, dtype=np.float64)
        x = Tensor(rng.random((1, 1, 4, 4)) + 0.01, requires_grad=True, name="input")
        target = Tensor(rng.random((1, 1, 8, 8)))
        fn = lambda: T.mse_loss(net(x), target)  # noqa: E731
        out[f"network[{label}]"] = finite_diff_check(
            fn, [x] + net.parameters(), max_entries=max_entries, rng=rng, corrupt=corrupt
        )
    return out


SUITES = {"ops": op_suite, "unit": unit_suite, "network": network_suite}
