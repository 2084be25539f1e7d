from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .layers import (attention_coefficients, batchnorm_forward, cross_entropy, gat_forward,
                     gcn_forward, global_mean_pool, nvgcn_forward)
from .model import (VARIANTS, GraphBatch, ModelConfig, ModelState, backward, build_model,
                    forward, loss_and_grads, predict, prepare_batch)
from .optim import AdamState, adam_step

__all__ = [
    "AdamState", "CheckpointError", "GraphBatch", "ModelConfig", "ModelState", "VARIANTS",
    "adam_step", "attention_coefficients", "backward", "batchnorm_forward", "build_model",
    "cross_entropy", "forward", "gat_forward", "gcn_forward", "global_mean_pool",
    "load_checkpoint", "loss_and_grads", "nvgcn_forward", "predict", "prepare_batch",
    "save_checkpoint",
]
