"""Small time-conditioned convolutional noise predictor."""

import math
from typing import TYPE_CHECKING

import torch
import torch.nn.functional as F
from torch import nn

from diffrecon.errors import ConfigurationError

if TYPE_CHECKING:
    from diffrecon.score.lora import LoraAdapterSet


HIDDEN_CHANNELS = 32
TIME_EMBED_DIM = 32
KERNEL_SIZE = 3


def timestep_embedding(t: torch.Tensor, dim: int = TIME_EMBED_DIM) -> torch.Tensor:
    """Sinusoidal features of integer time steps, shape (B, dim)."""
    half = dim // 2
    freqs = torch.exp(
        -math.log(10000.0) * torch.arange(half, dtype=torch.float32, device=t.device) / half
    )
    args = t.to(torch.float32)[:, None] * freqs[None, :]
    return torch.cat([torch.sin(args), torch.cos(args)], dim=1)


class ConvScoreNet(nn.Module):
    """
    Five 3x3 convolutions (2 -> 32 -> 32 -> 32 -> 32 -> 1) with SiLU activations.

    Input channels are [x_t, g]. A learned projection of the time embedding is
    added after the first and third convolutions, and the first hidden map is
    carried forward as a skip into the third.
    """

    def __init__(self, hidden: int = HIDDEN_CHANNELS, time_dim: int = TIME_EMBED_DIM):
        super().__init__()
        self.hidden = hidden
        self.time_dim = time_dim
        channels = (2, hidden, hidden, hidden, hidden, 1)
        self.convs = nn.ModuleList(
            nn.Conv2d(c_in, c_out, KERNEL_SIZE, padding=KERNEL_SIZE // 2)
            for c_in, c_out in zip(channels[:-1], channels[1:])
        )
        self.time_mlp = nn.Sequential(
            nn.Linear(time_dim, hidden), nn.SiLU(), nn.Linear(hidden, hidden)
        )

    def layer_shapes(self) -> list[tuple[int, int]]:
        """(out, in * k * k) for each convolution: the matrix shape LoRA factors target."""
        return [
            (conv.out_channels, conv.in_channels * conv.kernel_size[0] * conv.kernel_size[1])
            for conv in self.convs
        ]

    def _conv(self, index: int, h: torch.Tensor, adapters: "LoraAdapterSet | None"):
        conv = self.convs[index]
        weight = conv.weight if adapters is None else adapters.effective_weight(index, conv.weight)
        return F.conv2d(h, weight, conv.bias, padding=conv.padding)

    def forward(
        self,
        x_t: torch.Tensor,
        t: torch.Tensor,
        g: torch.Tensor,
        adapters: "LoraAdapterSet | None" = None,
    ) -> torch.Tensor:
        """
        Args:
            x_t: Noisy images (B, 1, H, W)
            t: Integer time steps (B,)
            g: Anatomical priors (B, 1, H, W)
            adapters: Optional low-rank weight offsets

        Returns:
            Predicted noise (B, 1, H, W)
        """
        if x_t.shape != g.shape:
            raise ConfigurationError(f"x_t {tuple(x_t.shape)} and g {tuple(g.shape)} differ")
        features = timestep_embedding(t, self.time_dim).to(x_t.dtype)
        temb = self.time_mlp(features)[:, :, None, None]
        h0 = torch.cat([x_t, g], dim=1)
        h1 = F.silu(self._conv(0, h0, adapters) + temb)
        h2 = F.silu(self._conv(1, h1, adapters))
        h3 = F.silu(self._conv(2, h2 + h1, adapters) + temb)
        h4 = F.silu(self._conv(3, h3, adapters))
        return self._conv(4, h4, adapters)

    def describe(self) -> dict:
        return {"kind": "ConvScoreNet", "hidden": self.hidden, "time_dim": self.time_dim}


def as_batch(array, device=None, dtype=torch.float32) -> torch.Tensor:
    """(H, W) or (B, H, W) array to a (B, 1, H, W) tensor."""
    tensor = torch.as_tensor(array, dtype=dtype, device=device)
    if tensor.ndim == 2:
        return tensor[None, None]
    if tensor.ndim == 3:
        return tensor[:, None]
    if tensor.ndim == 4:
        return tensor
    raise ConfigurationError(f"Expected 2-D, 3-D or 4-D image data, got {tensor.ndim}-D")


def net_predict(
    net: ConvScoreNet,
    adapters: "LoraAdapterSet | None",
    x_t: torch.Tensor,
    t: int,
    g: torch.Tensor,
) -> torch.Tensor:
    """eps_theta(x_t, t, g) for a (B, 1, H, W) batch sharing one time step."""
    steps = torch.full((x_t.shape[0],), int(t), dtype=torch.long, device=x_t.device)
    if g.shape[0] != x_t.shape[0]:
        g = g.expand(x_t.shape[0], *g.shape[1:])
    return net(x_t, steps, g, adapters)


class NetPredictor:
    """NoisePredictor over numpy arrays for a trained network and optional adapters."""

    def __init__(self, net: ConvScoreNet, adapters: "LoraAdapterSet | None" = None):
        self.net = net
        self.adapters = adapters
        reference = next(net.parameters())
        self.device = reference.device
        self.dtype = reference.dtype

    def predict(self, x_t, t: int, g):
        squeeze = x_t.ndim == 2
        x = as_batch(x_t, self.device, self.dtype)
        g_batch = as_batch(g, self.device, self.dtype)
        with torch.no_grad():
            eps = net_predict(self.net, self.adapters, x, t, g_batch)
        eps = eps[:, 0].to(torch.float64).cpu().numpy()
        return eps[0] if squeeze else eps
