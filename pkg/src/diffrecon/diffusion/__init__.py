"""Noise schedule, forward diffusion, Tweedie estimate and reverse samplers."""

from diffrecon.diffusion.sampling import ddim_sample, reverse_diffusion
from diffrecon.diffusion.schedule import NoiseSchedule, make_schedule
from diffrecon.diffusion.steps import (
    ddim_sigma,
    ddim_step,
    ddpm_sigma,
    ddpm_step,
    forward_diffuse,
    tweedie_x0,
)

__all__ = [
    "NoiseSchedule",
    "ddim_sample",
    "ddim_sigma",
    "ddim_step",
    "ddpm_sigma",
    "ddpm_step",
    "forward_diffuse",
    "make_schedule",
    "reverse_diffusion",
    "tweedie_x0",
]
