"""Score-model interface, the analytic Gaussian oracle, and training settings."""

import math
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np
from pydantic import ConfigDict, Field
from pydantic.dataclasses import dataclass as pydantic_dataclass

from diffrecon.diffusion.schedule import NoiseSchedule
from diffrecon.errors import ConfigurationError


@runtime_checkable
class NoisePredictor(Protocol):
    """eps(x_t, t, g): predicted noise with the shape of x_t."""

    def predict(self, x_t: np.ndarray, t: int, g: np.ndarray) -> np.ndarray: ...


@pydantic_dataclass(frozen=True, config=ConfigDict(extra="forbid"))
class TrainConfig:
    """Denoising score-matching training settings (AdamW)."""

    epochs: int = Field(default=200, ge=1)
    batch_size: int = Field(default=16, ge=1)
    learning_rate: float = Field(default=1e-3, gt=0)
    weight_decay: float = Field(default=1e-4, ge=0)
    # Unset: the train command derives it from the master seed.
    rng_seed: int | None = Field(default=None, ge=0)


def per_sample(coef, like):
    """Reshape a per-sample coefficient vector to broadcast against a batch `like`."""
    coef = np.asarray(coef, dtype=np.float64)
    if coef.ndim == 0:
        return float(coef)
    shape = (coef.shape[0],) + (1,) * (like.ndim - 1)
    coef = coef.reshape(shape)
    if isinstance(like, np.ndarray):
        return coef
    import torch

    return torch.as_tensor(coef, dtype=like.dtype, device=like.device)


@dataclass
class GaussianOracle:
    """Exact noise predictor for data distributed as N(mean, var * I)."""

    mean: np.ndarray
    var: float

    def __post_init__(self):
        if self.var <= 0:
            raise ConfigurationError(f"Oracle variance must be positive, got {self.var}")
        self.mean = np.asarray(self.mean, dtype=np.float64)


def oracle_predict(o: GaussianOracle, x_t, t, sched: NoiseSchedule):
    """
    eps*(x_t, t) = sqrt(beta_bar_t) (x_t - sqrt(alpha_bar_t) mu) / (alpha_bar_t s^2 + beta_bar_t).

    `t` may be a scalar or one time step per leading batch entry.
    """
    if np.ndim(t) == 0:
        ab = sched.alpha_bar_at(int(t))
        bb = 1.0 - ab
        return math.sqrt(bb) * (x_t - math.sqrt(ab) * o.mean) / (ab * o.var + bb)
    ab_vec = sched.alpha_bar_table(np.asarray(t))
    ab = per_sample(ab_vec, x_t)
    bb = per_sample(1.0 - ab_vec, x_t)
    return bb**0.5 * (x_t - ab**0.5 * o.mean) / (ab * o.var + bb)


@dataclass
class OraclePredictor:
    """NoisePredictor adapter around a GaussianOracle; ignores g."""

    oracle: GaussianOracle
    sched: NoiseSchedule

    def predict(self, x_t: np.ndarray, t: int, g: np.ndarray) -> np.ndarray:
        return oracle_predict(self.oracle, x_t, t, self.sched)
