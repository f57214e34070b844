from .model import (
    ForwardError,
    GanConfig,
    GenerationStats,
    autofade,
    condition_vector,
    discriminator_forward,
    discriminator_forward_batch,
    generate_batch,
    generator_forward,
    generator_forward_batch,
    init_params,
    load_checkpoint,
    make_noises,
    mapping_network,
    noise_fade,
    noise_layer,
    save_checkpoint,
    shaped_noise,
    zero_noises,
)
from .train import Adam, TrainingDiverged, TrainResult, train, wgan_lp_loss, write_loss_log

__all__ = [
    "Adam",
    "ForwardError",
    "GanConfig",
    "GenerationStats",
    "TrainResult",
    "TrainingDiverged",
    "autofade",
    "condition_vector",
    "discriminator_forward",
    "discriminator_forward_batch",
    "generate_batch",
    "generator_forward",
    "generator_forward_batch",
    "init_params",
    "load_checkpoint",
    "make_noises",
    "mapping_network",
    "noise_fade",
    "noise_layer",
    "save_checkpoint",
    "shaped_noise",
    "train",
    "wgan_lp_loss",
    "write_loss_log",
    "zero_noises",
]
