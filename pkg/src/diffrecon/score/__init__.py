"""Noise predictors: Gaussian oracle, conditional conv net, LoRA adapters, training."""

from diffrecon.score.lora import LoraAdapterSet, freeze, grad_lora, lora_param_count
from diffrecon.score.models import (
    GaussianOracle,
    NoisePredictor,
    OraclePredictor,
    TrainConfig,
    oracle_predict,
)
from diffrecon.score.network import ConvScoreNet, NetPredictor, as_batch, net_predict
from diffrecon.score.training import (
    conditioning_fidelity,
    dsm_loss,
    edge_ncc,
    mean_dsm_loss,
    train_score,
)

__all__ = [
    "ConvScoreNet",
    "GaussianOracle",
    "LoraAdapterSet",
    "NetPredictor",
    "NoisePredictor",
    "OraclePredictor",
    "TrainConfig",
    "as_batch",
    "conditioning_fidelity",
    "dsm_loss",
    "edge_ncc",
    "freeze",
    "grad_lora",
    "lora_param_count",
    "mean_dsm_loss",
    "net_predict",
    "oracle_predict",
    "train_score",
]
