"""Diffusion posterior sampling with a preconditioned Poisson likelihood step."""

import logging
from collections.abc import Callable
from typing import NamedTuple

import numpy as np
import torch

from diffrecon.diffusion.sampling import ddim_sample, reverse_diffusion
from diffrecon.diffusion.schedule import NoiseSchedule
from diffrecon.diffusion.steps import tweedie_x0
from diffrecon.errors import ConfigurationError, DiffreconError
from diffrecon.geometry.models import Image, Sinogram
from diffrecon.geometry.projector import Projector, get_projector
from diffrecon.recon.ddip import init_x_Tprime
from diffrecon.recon.models import (
    DpsConfig,
    ReconDiagnostics,
    ReconProblem,
    ReconResult,
    StepRecord,
)
from diffrecon.score.models import NoisePredictor
from diffrecon.score.network import NetPredictor, as_batch, net_predict


logger = logging.getLogger(__name__)

# Maps a clamped network-space x0_hat to a network-space ascent direction.
DirectionFn = Callable[[np.ndarray], np.ndarray]


class LikelihoodGrad(NamedTuple):
    grad: Image
    excluded_bins: int


def likelihood_direction(
    projector: Projector, x0: np.ndarray, y: np.ndarray, b: np.ndarray, s: np.ndarray
) -> tuple[np.ndarray, int]:
    """Array form of dps_likelihood_grad; returns (direction, excluded bin count)."""
    ybar = projector.forward_array(x0) + b
    excluded = (ybar <= 0) & (y > 0)
    ratio = np.divide(y, ybar, out=np.zeros_like(ybar), where=ybar > 0)
    direction = np.divide(
        x0 * (projector.back_array(ratio) - s), s, out=np.zeros_like(x0), where=s > 0
    )
    return direction, int(excluded.sum())


def dps_likelihood_grad(x0_hat: Image, y: Sinogram, b: Sinogram, S: Image) -> LikelihoodGrad:
    """
    (x0_hat / S) * (A^T (y / (A x0_hat + b)) - S), equal to MLEM(x0_hat) - x0_hat.

    Bins with counts but zero expected mean are dropped from the ratio and counted.
    """
    projector = get_projector(x0_hat.grid, y.proj)
    x0 = np.maximum(x0_hat.values, 0.0)
    direction, excluded = likelihood_direction(projector, x0, y.values, b.values, S.values)
    if excluded:
        logger.warning(f"{excluded} sinogram bins excluded from the DPS likelihood step")
    return LikelihoodGrad(x0_hat.like(direction), excluded)


def _jacobian_transpose(predictor: NetPredictor, x_t, t, g, v, sched: NoiseSchedule):
    """(d x0_hat / d x_t)^T v by one vector-Jacobian product through the network."""
    x = as_batch(x_t, predictor.device, predictor.dtype).requires_grad_(True)
    cond = as_batch(g, predictor.device, predictor.dtype)
    eps = net_predict(predictor.net, predictor.adapters, x, t, cond)
    x0_hat = tweedie_x0(x, t, eps, sched)
    weights = as_batch(v, predictor.device, predictor.dtype)
    (grad,) = torch.autograd.grad(x0_hat, x, grad_outputs=weights)
    return grad[0, 0].to(torch.float64).cpu().numpy()


def dps_reconstruct(
    problem: ReconProblem,
    predictor: NoisePredictor,
    config: DpsConfig,
    sched: NoiseSchedule,
    rng: np.random.Generator,
    *,
    direction_fn: DirectionFn | None = None,
) -> ReconResult:
    """
    Reverse diffusion where each x_{t-1} is pushed along the likelihood direction.

    x_{t-1} = x'_{t-1} + lambda * dir(x0_hat) with x'_{t-1} the DDIM step. No
    network weights change.

    Args:
        problem: Data, prior, projector and count scale
        predictor: Noise predictor (NetPredictor for the exact Jacobian option)
        config: Step size, eta, start time and flags
        sched: Noise schedule
        rng: Stream for the initial state and per-step noise
        direction_fn: Replaces the Poisson direction (network space in, network space out)

    Returns:
        Final x_0 clamped at 0, in count space
    """
    t_start = sched.T if config.t_start is None else config.t_start
    if t_start > sched.T:
        raise ConfigurationError(f"t_start {t_start} exceeds T = {sched.T}")
    if config.exact_jacobian and not isinstance(predictor, NetPredictor):
        raise ConfigurationError("exact_jacobian needs a network predictor")

    g = problem.prior(config.unconditional)
    y, b, s = problem.y.values, problem.b.values, problem.s
    diagnostics = ReconDiagnostics(info={"method": "dps", "count_scale": problem.count_scale})

    x_start = None
    if t_start < sched.T:
        x_start, _ = init_x_Tprime(problem, t_start, config.mlem_init_iters, sched, rng)

    def direction(x0_net: np.ndarray) -> tuple[np.ndarray, int]:
        if direction_fn is not None:
            return direction_fn(x0_net), 0
        d, excluded = likelihood_direction(
            problem.projector, problem.to_counts(x0_net), y, b, s
        )
        return problem.to_network(d), excluded

    def likelihood_step(t, x_t, x0_hat, x_next):
        x0 = np.maximum(x0_hat, 0.0)
        d, excluded = direction(x0)
        if config.exact_jacobian:
            d = _jacobian_transpose(predictor, x_t, t, g, d, sched)
        if config.snapshot_every and t % config.snapshot_every == 0:
            diagnostics.snapshots[t] = problem.to_counts(x0)
        if direction_fn is None:
            diagnostics.records.append(
                StepRecord(
                    t=t,
                    round=0,
                    log_likelihood=problem.log_likelihood(
                        problem.to_counts(x0), skip_zero_mean=True
                    ),
                    excluded_bins=excluded,
                )
            )
        return x_next + config.lambda_step * d

    logger.info(f"DPS: lambda={config.lambda_step}, eta={config.eta}, t_start={t_start}")
    try:
        x0 = reverse_diffusion(
            predictor,
            g,
            sched,
            rng,
            eta=config.eta,
            t_start=t_start,
            x_start=x_start,
            after_step=likelihood_step if config.lambda_step > 0 else None,
        )
    except DiffreconError as exc:
        exc.diagnostics = diagnostics.rows()
        logger.warning(f"DPS aborted: {exc}")
        raise

    if diagnostics.excluded_bins:
        logger.warning(f"DPS excluded {diagnostics.excluded_bins} bin evaluations in total")
    image = problem.to_counts(np.maximum(x0, 0.0))
    return ReconResult(Image(problem.grid, image), diagnostics)


def ddim_reference(
    problem: ReconProblem,
    predictor: NoisePredictor,
    sched: NoiseSchedule,
    rng: np.random.Generator,
    eta: float = 0.0,
    unconditional: bool = False,
) -> ReconResult:
    """Prior sample conditioned on g, ignoring y; rescaled to count space."""
    x0 = ddim_sample(predictor, problem.prior(unconditional), sched, rng, eta)
    image = problem.to_counts(np.maximum(x0, 0.0))
    return ReconResult(
        Image(problem.grid, image),
        ReconDiagnostics(info={"method": "ddim-sample", "count_scale": problem.count_scale}),
    )
