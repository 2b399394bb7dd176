"""Classical single-image iterative back-projection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import resample


@dataclass
class IbpConfig:
    scale: int = 2
    sigma: float | None = None  # blur g; None means scale / 8
    iterations: int = 10
    tolerance: float = 0.0
    antialias: bool = True

    def __post_init__(self):
        if self.scale not in (2, 4, 8):
            raise ValueError(f"scale must be 2, 4 or 8, got {self.scale}")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.tolerance < 0:
            raise ValueError("tolerance must be >= 0")
        if self.sigma is not None and self.sigma <= 0:
            raise ValueError("sigma must be positive")

    @property
    def blur_sigma(self) -> float:
        return self.scale / 8.0 if self.sigma is None else self.sigma


@dataclass
class IbpState:
    estimate: np.ndarray
    residual: np.ndarray
    iteration: int = 0


def project_down(hr: np.ndarray, config: IbpConfig) -> np.ndarray:
    """Simulated observation: blur with g, then bicubic downscale by s."""
    return resample.downscale(resample.gaussian_blur(hr, config.blur_sigma), config.scale, config.antialias)


def project_up(lr: np.ndarray, config: IbpConfig) -> np.ndarray:
    return resample.upscale(lr, config.scale)


def ibp_step(lr: np.ndarray, state: IbpState, config: IbpConfig) -> IbpState:
    simulated = project_down(state.estimate, config)
    residual = lr - simulated
    estimate = state.estimate + project_up(residual, config)
    return IbpState(estimate, residual, state.iteration + 1)


def ibp_run(lr, config: IbpConfig | None = None) -> tuple[np.ndarray, list[float]]:
    """Refine a bicubic upscale of ``lr`` until the iteration budget or tolerance.

    Returns the final estimate and the L2 norm of the LR residual measured
    at each iteration (before that iteration's correction is applied).
    """
    config = config or IbpConfig()
    lr = np.asarray(getattr(lr, "pixels", lr), dtype=np.float64)
    if lr.ndim not in (2, 3) or lr.size == 0:
        raise ValueError(f"expected a non-empty (H, W[, C]) image, got shape {lr.shape}")
    state = IbpState(project_up(lr, config), np.zeros_like(lr))
    expected = (lr.shape[0] * config.scale, lr.shape[1] * config.scale)
    if state.estimate.shape[:2] != expected:
        raise ValueError(f"upscaled estimate {state.estimate.shape[:2]} does not match {expected}")
    trace: list[float] = []
    for _ in range(config.iterations):
        state = ibp_step(lr, state, config)
        norm = float(np.linalg.norm(state.residual))
        trace.append(norm)
        if norm <= config.tolerance:
            break
    return state.estimate, trace
