"""
Anatomically guided DDIP reconstruction.

Each reverse-diffusion step alternates a half-quadratic-splitting image update
(EM sub-steps plus a voxel-wise closed-form solve anchored at the Tweedie
estimate) with a few optimizer steps that pull the network's Tweedie estimate
toward that image, then takes one DDIM step with the adapted network.
"""

import copy
import logging
from collections.abc import Callable, Iterator

import numpy as np
import torch

from diffrecon.classical.mlem import mlem, mlem_step
from diffrecon.diffusion.schedule import NoiseSchedule
from diffrecon.diffusion.steps import ddim_step, forward_diffuse, tweedie_x0
from diffrecon.errors import ConfigurationError, DiffreconError, DivergenceError
from diffrecon.geometry.likelihood import log_likelihood_from_mean
from diffrecon.geometry.models import Image, Sinogram
from diffrecon.geometry.projector import Projector, get_projector
from diffrecon.recon.models import (
    DdipConfig,
    DdipRunState,
    ReconDiagnostics,
    ReconProblem,
    ReconResult,
    StepRecord,
)
from diffrecon.score.lora import LoraAdapterSet, freeze
from diffrecon.score.network import ConvScoreNet, as_batch, net_predict


logger = logging.getLogger(__name__)

StepCallback = Callable[[DdipRunState], None]


# =============================================================================
# Initialization
# =============================================================================


def init_x_Tprime(
    problem: ReconProblem,
    t_start: int,
    mlem_iters: int,
    sched: NoiseSchedule,
    rng: np.random.Generator,
) -> tuple[np.ndarray, Image]:
    """
    Forward-diffuse an MLEM image to the starting time step.

    Args:
        problem: Data and count scale
        t_start: T' (0 returns the normalized MLEM image unchanged)
        mlem_iters: MLEM iterations for the initializer
        sched: Noise schedule
        rng: Stream for the diffusion noise

    Returns:
        (x_T' in network space, MLEM initializer in count space)
    """
    if mlem_iters < 1:
        raise ConfigurationError(f"mlem_init_iters must be >= 1, got {mlem_iters}")
    x_em = mlem(problem.y, problem.b, mlem_iters, grid=problem.grid)
    noise = rng.standard_normal(problem.grid.shape)
    x_t = forward_diffuse(problem.to_network(x_em.values), t_start, noise, sched)
    return x_t, x_em


# =============================================================================
# HQS image update
# =============================================================================


def closed_form_update(anchor, x_em, s_over_beta):
    """
    Non-negative root of x^2 + (S/beta - a) x - x_em S/beta = 0.

    That root minimizes S (x - x_em log x) + beta/2 (x - a)^2 per voxel. For
    a < S/beta the algebraically equal form 2 x_em (S/beta) / (r - c) is used to
    avoid cancellation.
    """
    anchor = np.asarray(anchor, dtype=np.float64)
    c = anchor - s_over_beta
    r = np.sqrt(c * c + 4.0 * x_em * s_over_beta)
    with np.errstate(divide="ignore", invalid="ignore"):
        lower = np.where(r - c > 0, 2.0 * x_em * s_over_beta / (r - c), 0.0)
    return np.where(c >= 0, 0.5 * (c + r), lower)


def hqs_objective(
    projector: Projector,
    x: np.ndarray,
    anchor: np.ndarray,
    y: np.ndarray,
    b: np.ndarray,
    beta: float,
) -> float:
    """-L(y|x) + beta/2 ||x - a||^2, non-increasing over the EM sub-steps."""
    ybar = projector.forward_array(x) + b
    return -log_likelihood_from_mean(y, ybar) + 0.5 * beta * float(np.sum((x - anchor) ** 2))


def hqs_iterates(
    projector: Projector,
    anchor: np.ndarray,
    x_prev: np.ndarray,
    y: np.ndarray,
    b: np.ndarray,
    s: np.ndarray,
    beta: float,
    m1: int,
) -> Iterator[np.ndarray]:
    """Yield each of the m1 image iterates; every EM sub-step chains from the last iterate."""
    if beta <= 0:
        raise ConfigurationError(f"beta must be positive, got {beta}")
    s_over_beta = s / beta
    x = x_prev
    for _ in range(m1):
        x_em = mlem_step(projector, x, y, b, s)
        x = np.where(s > 0, closed_form_update(anchor, x_em, s_over_beta), 0.0)
        yield x


def hqs_image_update(
    x_anchor: Image,
    x_prev: Image,
    y: Sinogram,
    b: Sinogram,
    S: Image,
    beta: float,
    M1: int,
) -> Image:
    """
    M1 rounds of (MLEM sub-update, closed-form voxel solve) anchored at x_anchor.

    Voxels with S_j = 0 are held at 0. The output is non-negative whenever the
    anchor is.
    """
    projector = get_projector(x_anchor.grid, y.proj)
    x = x_prev.values
    for x in hqs_iterates(
        projector, x_anchor.values, x_prev.values, y.values, b.values, S.values, beta, M1
    ):
        pass
    return x_anchor.like(x)


def em_surrogate(x: np.ndarray, x_n: np.ndarray, projector: Projector, y, b, s) -> float:
    """
    Separable EM surrogate Q(x | x_n) = sum_j S_j (x_em_j log x_j - x_j), x_em = MLEM(x_n).

    Minorizes the log-likelihood up to a constant and is tangent to it at x_n.
    """
    x_em = mlem_step(projector, x_n, y, b, s)
    support = s > 0
    return float(np.sum(s[support] * (x_em[support] * np.log(x[support]) - x[support])))


# =============================================================================
# Network fine-tuning
# =============================================================================


class FineTuner:
    """
    Per-subject trainable state: LoRA adapters over the frozen net, or a full
    copy of the net when the rank is 0. The optimizer state persists across t.
    """

    def __init__(
        self,
        net: ConvScoreNet,
        rank: int,
        learning_rate: float,
        weight_decay: float = 0.0,
        seed: int = 0,
    ):
        if rank > 0:
            self.net = freeze(net)
            self.adapters = LoraAdapterSet(net, rank, seed)
            params = list(self.adapters.parameters())
        else:
            self.net = copy.deepcopy(net).requires_grad_(True)
            self.adapters = None
            params = list(self.net.parameters())
        self.optimizer = torch.optim.AdamW(params, lr=learning_rate, weight_decay=weight_decay)
        reference = next(self.net.parameters())
        self.device = reference.device
        self.dtype = reference.dtype

    def tensor(self, array: np.ndarray) -> torch.Tensor:
        return as_batch(array, self.device, self.dtype)

    def predict(self, x_t: np.ndarray, t: int, g: np.ndarray) -> np.ndarray:
        with torch.no_grad():
            eps = net_predict(self.net, self.adapters, self.tensor(x_t), t, self.tensor(g))
        return eps[0, 0].to(torch.float64).cpu().numpy()


def fine_tune_step(
    tuner: FineTuner,
    x_target: np.ndarray,
    x_t: np.ndarray,
    t: int,
    g: np.ndarray,
    sched: NoiseSchedule,
    steps: int = 1,
) -> float:
    """
    `steps` optimizer steps on ||x_target - x0_hat(x_t, t, g)||^2 (network space).

    Gradients flow through the Tweedie estimate into the trainable parameters only.

    Returns:
        Objective before the last step
    """
    target = tuner.tensor(x_target)
    x = tuner.tensor(x_t)
    cond = tuner.tensor(g)
    loss_value = float("nan")
    for step in range(steps):
        eps = net_predict(tuner.net, tuner.adapters, x, t, cond)
        x0_hat = tweedie_x0(x, t, eps, sched)
        loss = ((target - x0_hat) ** 2).sum()
        loss_value = loss.item()
        if not np.isfinite(loss_value):
            raise DivergenceError(f"Fine-tuning loss became {loss_value} at t={t}", step=step)
        tuner.optimizer.zero_grad()
        loss.backward()
        tuner.optimizer.step()
    return loss_value


# =============================================================================
# Reconstruction loop
# =============================================================================


def ddip_reconstruct(
    problem: ReconProblem,
    net: ConvScoreNet,
    config: DdipConfig,
    sched: NoiseSchedule,
    rng: np.random.Generator,
    *,
    on_step: StepCallback | None = None,
) -> ReconResult:
    """
    Run DDIP from t = T' down to 1 and return x0_hat at t = 1 in count space.

    Args:
        problem: Data, prior, projector and count scale
        net: Pretrained score network (left untouched when LoRA is used)
        config: Loop settings
        sched: Noise schedule
        rng: Stream for the initial noise and DDIM noise draws
        on_step: Called with the run state after each time step

    Raises:
        DivergenceError: On a non-finite iterate
        DomainError: If an EM update meets a ray with counts but zero mean

    Every abort carries the diagnostics recorded so far on `exc.diagnostics`.
    """
    if config.t_start > sched.T:
        raise ConfigurationError(f"t_start {config.t_start} exceeds T = {sched.T}")

    g = problem.prior(config.unconditional)
    y, b, s = problem.y.values, problem.b.values, problem.s
    diagnostics = ReconDiagnostics(info={"method": "ddip", "count_scale": problem.count_scale})
    tuner = FineTuner(
        net,
        config.lora_rank,
        config.learning_rate,
        config.weight_decay,
        seed=int(rng.integers(2**31)),
    )
    x_t, _ = init_x_Tprime(problem, config.t_start, config.mlem_init_iters, sched, rng)
    state = DdipRunState(config.t_start, x_t, tuner.adapters, diagnostics)

    logger.info(
        f"DDIP: T'={config.t_start}, beta={config.beta}, rank={config.lora_rank}, "
        f"N={config.outer_iters}, M1={config.em_iters}, M2={config.finetune_steps}"
    )
    try:
        for t in range(config.t_start, 0, -1):
            state.t = t
            for n in range(config.outer_iters):
                eps = tuner.predict(x_t, t, g)
                anchor = problem.to_counts(np.maximum(tweedie_x0(x_t, t, eps, sched), 0.0))
                x = anchor
                for x in hqs_iterates(
                    problem.projector, anchor, anchor, y, b, s, config.beta, config.em_iters
                ):
                    pass
                loss = fine_tune_step(
                    tuner, problem.to_network(x), x_t, t, g, sched, config.finetune_steps
                )
                objective = hqs_objective(problem.projector, x, anchor, y, b, config.beta)
                diagnostics.records.append(
                    StepRecord(
                        t=t,
                        round=n,
                        log_likelihood=problem.log_likelihood(x),
                        hqs_objective=objective,
                        finetune_loss=loss,
                    )
                )

            eps = tuner.predict(x_t, t, g)
            x0_hat = tweedie_x0(x_t, t, eps, sched)
            noise = rng.standard_normal(x_t.shape)
            x_t = ddim_step(x_t, t, eps, x0_hat, config.eta, noise, sched)
            if not np.all(np.isfinite(x_t)):
                raise DivergenceError("Non-finite DDIP iterate", step=t)
            if config.snapshot_every and t % config.snapshot_every == 0:
                diagnostics.snapshots[t] = problem.to_counts(np.maximum(x0_hat, 0.0))
            state.x_t = x_t
            if on_step is not None:
                on_step(state)
    except DiffreconError as exc:
        exc.diagnostics = diagnostics.rows()
        logger.warning(f"DDIP aborted at t={state.t}: {exc}")
        raise

    image = problem.to_counts(np.maximum(x_t, 0.0))
    return ReconResult(Image(problem.grid, image), diagnostics, tuner.adapters)
