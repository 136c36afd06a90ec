"""Low-rank adapters over the convolution weights of a frozen score network."""

import logging
import math
from collections.abc import Callable

import torch
from torch import nn

from diffrecon.errors import ConfigurationError
from diffrecon.score.network import ConvScoreNet


logger = logging.getLogger(__name__)


class LoraFactor(nn.Module):
    """Delta W = U V with U (d x r) random and V (r x k) zero, so Delta W starts at 0."""

    def __init__(self, d: int, k: int, rank: int, generator: torch.Generator | None = None):
        super().__init__()
        bound = 1.0 / math.sqrt(rank)
        self.U = nn.Parameter(torch.empty(d, rank).uniform_(-bound, bound, generator=generator))
        self.V = nn.Parameter(torch.zeros(rank, k))

    def delta(self) -> torch.Tensor:
        return self.U @ self.V


class LoraAdapterSet(nn.Module):
    """One LoraFactor per convolution of a ConvScoreNet."""

    def __init__(self, net: ConvScoreNet, rank: int, seed: int = 0):
        super().__init__()
        if rank < 1:
            raise ConfigurationError(f"LoRA rank must be >= 1, got {rank}")
        self.rank = rank
        generator = torch.Generator().manual_seed(int(seed))
        self.factors = nn.ModuleList(
            LoraFactor(d, k, rank, generator) for d, k in net.layer_shapes()
        )
        device = next(net.parameters()).device
        self.to(device)

    def effective_weight(self, index: int, base: torch.Tensor) -> torch.Tensor:
        return base + self.factors[index].delta().view_as(base)

    def param_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def state_arrays(self) -> list[tuple]:
        """(U, V) numpy pairs in layer order."""
        return [
            (f.U.detach().cpu().numpy(), f.V.detach().cpu().numpy()) for f in self.factors
        ]

    def load_arrays(self, pairs: list[tuple]) -> None:
        if len(pairs) != len(self.factors):
            raise ConfigurationError(
                f"Adapter has {len(self.factors)} layers, got {len(pairs)} factor pairs"
            )
        with torch.no_grad():
            for factor, (u, v) in zip(self.factors, pairs):
                if tuple(u.shape) != tuple(factor.U.shape) or tuple(v.shape) != tuple(
                    factor.V.shape
                ):
                    raise ConfigurationError("LoRA factor shapes do not match the network")
                factor.U.copy_(torch.as_tensor(u))
                factor.V.copy_(torch.as_tensor(v))


def lora_param_count(net: ConvScoreNet, rank: int) -> int:
    """sum over adapted layers of r (d + k)."""
    return sum(rank * (d + k) for d, k in net.layer_shapes())


def freeze(net: nn.Module) -> nn.Module:
    net.requires_grad_(False)
    return net


def grad_lora(
    net: ConvScoreNet,
    adapters: LoraAdapterSet,
    loss_fn: Callable[..., torch.Tensor],
    *inputs,
) -> dict[str, torch.Tensor]:
    """
    Gradient of loss_fn(net, adapters, *inputs) with respect to the adapter factors only.

    The base weights receive no gradient; they are frozen before the loss is built.
    """
    freeze(net)
    names, params = zip(*adapters.named_parameters())
    loss = loss_fn(net, adapters, *inputs)
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    return {
        name: torch.zeros_like(p) if grad is None else grad
        for name, p, grad in zip(names, params, grads)
    }
