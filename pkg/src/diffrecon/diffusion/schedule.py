"""Linear variance schedule and its derived products."""

from dataclasses import dataclass, field

import numpy as np

from diffrecon.errors import ConfigurationError


DEFAULT_T = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """
    beta_t, alpha_t = 1 - beta_t, alpha_bar_t = prod_{s<=t} alpha_s and
    beta_bar_t = 1 - alpha_bar_t for t = 1..T (arrays indexed t - 1).

    The accessor methods accept t = 0 with the convention alpha_bar_0 = 1.
    """

    T: int
    beta_start: float
    beta_end: float
    beta: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    alpha_bar: np.ndarray = field(repr=False)
    beta_bar: np.ndarray = field(repr=False)

    def _check(self, t: int) -> int:
        if not 0 <= t <= self.T:
            raise ConfigurationError(f"Time step {t} outside [0, {self.T}]")
        return int(t)

    def alpha_bar_at(self, t: int) -> float:
        t = self._check(t)
        return 1.0 if t == 0 else float(self.alpha_bar[t - 1])

    def beta_bar_at(self, t: int) -> float:
        t = self._check(t)
        return 0.0 if t == 0 else float(self.beta_bar[t - 1])

    def beta_at(self, t: int) -> float:
        t = self._check(t)
        if t == 0:
            raise ConfigurationError("beta_t is defined for t >= 1")
        return float(self.beta[t - 1])

    def alpha_bar_table(self, t: np.ndarray) -> np.ndarray:
        """Vectorized alpha_bar for an integer array of time steps in [0, T]."""
        padded = np.concatenate(([1.0], self.alpha_bar))
        return padded[np.asarray(t)]

    def describe(self) -> dict:
        """Parameters that reproduce this schedule (for run manifests)."""
        return {"T": self.T, "beta_start": self.beta_start, "beta_end": self.beta_end}


def make_schedule(
    T: int = DEFAULT_T,
    beta_start: float = DEFAULT_BETA_START,
    beta_end: float = DEFAULT_BETA_END,
) -> NoiseSchedule:
    """Linear beta ramp from beta_start to beta_end over T steps."""
    if T < 1:
        raise ConfigurationError(f"T must be >= 1, got {T}")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ConfigurationError(
            f"Need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
        )
    beta = np.linspace(beta_start, beta_end, T) if T > 1 else np.array([beta_start])
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    return NoiseSchedule(
        T=T,
        beta_start=beta_start,
        beta_end=beta_end,
        beta=beta,
        alpha=alpha,
        alpha_bar=alpha_bar,
        beta_bar=1.0 - alpha_bar,
    )
