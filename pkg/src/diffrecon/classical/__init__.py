"""Baseline reconstructions: MLEM and MAPEM with the relative-difference penalty."""

from diffrecon.classical.mlem import (
    MlemState,
    em_backprojection,
    mlem,
    mlem_iterates,
    mlem_step,
    mlem_update,
    uniform_init,
)
from diffrecon.classical.rdp import (
    DEFAULT_GAMMA,
    mapem,
    mapem_iterates,
    rdp_gradient,
    rdp_penalty,
)

__all__ = [
    "DEFAULT_GAMMA",
    "MlemState",
    "em_backprojection",
    "mapem",
    "mapem_iterates",
    "mlem",
    "mlem_iterates",
    "mlem_step",
    "mlem_update",
    "rdp_gradient",
    "rdp_penalty",
    "uniform_init",
]
