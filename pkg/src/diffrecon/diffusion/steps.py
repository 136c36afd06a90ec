"""Forward diffusion, Tweedie estimate and reverse steps in noise-prediction form.

Every function is plain arithmetic on its array arguments, so numpy arrays and
torch tensors both work (gradients flow through the torch path).
"""

import math

from diffrecon.diffusion.schedule import NoiseSchedule
from diffrecon.errors import ConfigurationError


def forward_diffuse(x0, t: int, noise, sched: NoiseSchedule):
    """x_t = sqrt(alpha_bar_t) x0 + sqrt(beta_bar_t) noise."""
    return math.sqrt(sched.alpha_bar_at(t)) * x0 + math.sqrt(sched.beta_bar_at(t)) * noise


def tweedie_x0(x_t, t: int, eps_pred, sched: NoiseSchedule):
    """Posterior-mean clean image x0_hat = (x_t - sqrt(beta_bar_t) eps) / sqrt(alpha_bar_t)."""
    if t < 1:
        raise ConfigurationError(f"Tweedie estimate needs t >= 1, got {t}")
    return (x_t - math.sqrt(sched.beta_bar_at(t)) * eps_pred) / math.sqrt(sched.alpha_bar_at(t))


def ddpm_sigma(t: int, sched: NoiseSchedule) -> float:
    """Posterior standard deviation sqrt(beta_t beta_bar_{t-1} / beta_bar_t)."""
    return math.sqrt(sched.beta_at(t) * sched.beta_bar_at(t - 1) / sched.beta_bar_at(t))


def ddim_sigma(t: int, eta: float, sched: NoiseSchedule) -> float:
    """eta * sqrt(beta_bar_{t-1} / beta_bar_t) * sqrt(1 - alpha_bar_t / alpha_bar_{t-1})."""
    ab_t, ab_prev = sched.alpha_bar_at(t), sched.alpha_bar_at(t - 1)
    return eta * math.sqrt(sched.beta_bar_at(t - 1) / sched.beta_bar_at(t)) * math.sqrt(
        1.0 - ab_t / ab_prev
    )


def ddim_step(x_t, t: int, eps_pred, x0_hat, eta: float, noise, sched: NoiseSchedule):
    """
    x_{t-1} = sqrt(alpha_bar_{t-1}) x0_hat + sqrt(beta_bar_{t-1} - s^2) eps + s noise,
    with s = ddim_sigma(t, eta). eta = 0 is deterministic; eta = 1 matches DDPM.
    """
    if not 1 <= t <= sched.T:
        raise ConfigurationError(f"DDIM step needs 1 <= t <= {sched.T}, got {t}")
    if not 0.0 <= eta <= 1.0:
        raise ConfigurationError(f"eta must lie in [0, 1], got {eta}")
    sigma = ddim_sigma(t, eta, sched)
    direction = math.sqrt(max(sched.beta_bar_at(t - 1) - sigma * sigma, 0.0))
    out = math.sqrt(sched.alpha_bar_at(t - 1)) * x0_hat + direction * eps_pred
    if sigma > 0.0:
        out = out + sigma * noise
    return out


def ddpm_step(x_t, t: int, eps_pred, noise, sched: NoiseSchedule):
    """x_{t-1} = (x_t - beta_t / sqrt(beta_bar_t) eps) / sqrt(alpha_t) + sigma_t noise."""
    if not 1 <= t <= sched.T:
        raise ConfigurationError(f"DDPM step needs 1 <= t <= {sched.T}, got {t}")
    beta_t = sched.beta_at(t)
    mean = (x_t - beta_t / math.sqrt(sched.beta_bar_at(t)) * eps_pred) / math.sqrt(1.0 - beta_t)
    sigma = ddpm_sigma(t, sched)
    if sigma > 0.0:
        mean = mean + sigma * noise
    return mean
