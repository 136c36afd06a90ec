"""Reverse-diffusion sampling loop shared by prior sampling and DPS."""

import logging
from collections.abc import Callable
from typing import TYPE_CHECKING

import numpy as np

from diffrecon.diffusion.schedule import NoiseSchedule
from diffrecon.diffusion.steps import ddim_step, tweedie_x0
from diffrecon.errors import ConfigurationError, DivergenceError

if TYPE_CHECKING:
    from diffrecon.score.models import NoisePredictor


logger = logging.getLogger(__name__)

# Called after each reverse step with (t, x_t, x0_hat); returns the corrected x_{t-1}.
StepHook = Callable[[int, np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def reverse_diffusion(
    predictor: "NoisePredictor",
    g: np.ndarray,
    sched: NoiseSchedule,
    rng: np.random.Generator,
    *,
    eta: float = 0.0,
    t_start: int | None = None,
    x_start: np.ndarray | None = None,
    after_step: StepHook | None = None,
    shape: tuple[int, ...] | None = None,
) -> np.ndarray:
    """
    Run DDIM from t_start down to 0.

    Args:
        predictor: Noise predictor eps(x_t, t, g)
        g: Anatomical prior (zeros for unconditional sampling)
        sched: Noise schedule
        rng: Stream for the initial state and per-step noise. One noise image is
            drawn per step even when eta = 0, so streams stay aligned across callers.
        eta: DDIM stochasticity
        t_start: First time step (default T)
        x_start: State at t_start (default: standard normal draw)
        after_step: Optional correction applied to each x_{t-1}
        shape: State shape when sampling a batch (default g.shape)

    Returns:
        x_0
    """
    t_start = sched.T if t_start is None else t_start
    if not 1 <= t_start <= sched.T:
        raise ConfigurationError(f"t_start must lie in [1, {sched.T}], got {t_start}")

    shape = g.shape if shape is None else tuple(shape)
    x = rng.standard_normal(shape) if x_start is None else np.array(x_start, dtype=np.float64)
    for t in range(t_start, 0, -1):
        eps = predictor.predict(x, t, g)
        x0_hat = tweedie_x0(x, t, eps, sched)
        noise = rng.standard_normal(shape)
        x_next = ddim_step(x, t, eps, x0_hat, eta, noise, sched)
        if after_step is not None:
            x_next = after_step(t, x, x0_hat, x_next)
        if not np.all(np.isfinite(x_next)):
            raise DivergenceError("Non-finite sample during reverse diffusion", step=t)
        x = x_next
    return x


def ddim_sample(
    predictor: "NoisePredictor",
    g: np.ndarray,
    sched: NoiseSchedule,
    rng: np.random.Generator,
    eta: float = 0.0,
) -> np.ndarray:
    """Prior sample from pure noise at t = T, conditioned on g."""
    return reverse_diffusion(predictor, g, sched, rng, eta=eta)
