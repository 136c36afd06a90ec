"""Denoising score matching and the pretraining loop."""

import logging
import math
from collections.abc import Callable, Sequence

import numpy as np
import torch
from skimage.filters import sobel
from torch.utils.data import DataLoader, TensorDataset

from diffrecon.diffusion.schedule import NoiseSchedule
from diffrecon.errors import ConfigurationError, DivergenceError
from diffrecon.phantom.models import PhantomSample
from diffrecon.score.models import TrainConfig, per_sample
from diffrecon.score.network import ConvScoreNet


logger = logging.getLogger(__name__)

EpochCallback = Callable[[int, float], None]


def dsm_loss(predict, x0, g, t, noise, sched: NoiseSchedule):
    """
    Batch mean of ||noise - predict(x_t, t, g)||^2 with x_t = sqrt(ab_t) x0 + sqrt(bb_t) noise.

    Works on numpy arrays or torch tensors. The squared norm is summed over each
    image, so a zero predictor scores about N (pixels per image).

    Args:
        predict: Callable (x_t, t, g) -> eps for a batch with one time step per entry
        x0: Clean images, leading batch dimension
        g: Priors matching x0
        t: Integer time steps, one per batch entry, in [1, T]
        noise: Standard normal draws matching x0
        sched: Noise schedule
    """
    t_np = t.detach().cpu().numpy() if isinstance(t, torch.Tensor) else np.asarray(t)
    if t_np.shape[0] != x0.shape[0] or x0.shape[0] == 0:
        raise ConfigurationError("dsm_loss needs a non-empty batch with one t per image")
    ab = sched.alpha_bar_table(t_np)
    x_t = per_sample(np.sqrt(ab), x0) * x0 + per_sample(np.sqrt(1.0 - ab), x0) * noise
    diff = noise - predict(x_t, t, g)
    return (diff**2).reshape(diff.shape[0], -1).sum(1).mean()


def _stack(dataset: Sequence[PhantomSample], activity_scale: float):
    x0 = np.stack([s.activity.values for s in dataset]) / activity_scale
    g = np.stack([s.mr_prior.values for s in dataset])
    return (
        torch.as_tensor(x0, dtype=torch.float32)[:, None],
        torch.as_tensor(g, dtype=torch.float32)[:, None],
    )


def train_score(
    dataset: Sequence[PhantomSample],
    config: TrainConfig,
    sched: NoiseSchedule,
    *,
    activity_scale: float = 1.0,
    on_epoch: EpochCallback | None = None,
    net: ConvScoreNet | None = None,
) -> ConvScoreNet:
    """
    Train a ConvScoreNet with AdamW on the DSM objective.

    Args:
        dataset: Phantom samples; activity / activity_scale is the network space
        config: Optimizer and loop settings
        sched: Noise schedule; t is drawn uniformly from 1..T
        activity_scale: Activity value mapped to 1.0 (the GM level)
        on_epoch: Called with (epoch, mean loss) after every epoch
        net: Warm-start network (fresh one when omitted)

    Returns:
        The trained network in eval mode
    """
    if not dataset:
        raise ConfigurationError("Training set is empty")
    seed = 0 if config.rng_seed is None else config.rng_seed
    torch.manual_seed(seed)
    generator = torch.Generator().manual_seed(seed)
    net = ConvScoreNet() if net is None else net
    net.requires_grad_(True)
    net.train()

    x0, g = _stack(dataset, activity_scale)
    loader = DataLoader(
        TensorDataset(x0, g), batch_size=config.batch_size, shuffle=True, generator=generator
    )
    optimizer = torch.optim.AdamW(
        net.parameters(), lr=config.learning_rate, weight_decay=config.weight_decay
    )
    predict = lambda x, t, cond: net(x, t, cond)  # noqa: E731

    logger.info(
        f"Training on {len(dataset)} images for {config.epochs} epochs "
        f"(batch {config.batch_size}, T={sched.T})"
    )
    curve = []
    for epoch in range(1, config.epochs + 1):
        total, count = 0.0, 0
        for x_batch, g_batch in loader:
            t = torch.randint(1, sched.T + 1, (x_batch.shape[0],), generator=generator)
            noise = torch.randn(x_batch.shape, generator=generator)
            loss = dsm_loss(predict, x_batch, g_batch, t, noise, sched)
            if not torch.isfinite(loss):
                raise DivergenceError(
                    f"Training loss became {loss.item()} in epoch {epoch}",
                    step=epoch,
                    diagnostics=[{"epoch": e, "loss": v} for e, v in curve],
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += loss.item() * x_batch.shape[0]
            count += x_batch.shape[0]
        mean_loss = total / count
        curve.append((epoch, mean_loss))
        logger.debug(f"epoch {epoch}: loss {mean_loss:.4f}")
        if on_epoch is not None:
            on_epoch(epoch, mean_loss)

    net.eval()
    return net


def mean_dsm_loss(
    net: ConvScoreNet,
    dataset: Sequence[PhantomSample],
    sched: NoiseSchedule,
    seed: int = 0,
    activity_scale: float = 1.0,
) -> float:
    """Monte-Carlo DSM loss of a network over a dataset with fixed draws."""
    x0, g = _stack(dataset, activity_scale)
    generator = torch.Generator().manual_seed(seed)
    t = torch.randint(1, sched.T + 1, (x0.shape[0],), generator=generator)
    noise = torch.randn(x0.shape, generator=generator)
    with torch.no_grad():
        loss = dsm_loss(lambda x, tt, c: net(x, tt, c), x0, g, t, noise, sched)
    return float(loss)


def edge_ncc(a: np.ndarray, b: np.ndarray) -> float:
    """Normalized cross-correlation of Sobel edge magnitudes."""
    ea, eb = sobel(a), sobel(b)
    ea, eb = ea - ea.mean(), eb - eb.mean()
    denom = math.sqrt(float((ea * ea).sum() * (eb * eb).sum()))
    return float((ea * eb).sum() / denom) if denom > 0 else 0.0


def conditioning_fidelity(samples: Sequence[np.ndarray], g: np.ndarray, g_other: np.ndarray) -> float:
    """Fraction of samples whose edges correlate better with g than with g_other."""
    if not samples:
        raise ConfigurationError("No samples to score")
    hits = sum(edge_ncc(s, g) > edge_ncc(s, g_other) for s in samples)
    return hits / len(samples)
