from .checkpoint import (CheckpointError, ModelCheckpoint, file_digest, load_checkpoint,
                         save_checkpoint)
from .gradcheck import grad_check
from .layers import (Linear, LstmParams, LstmStack, MlpParams, ResNetParams, forward_bilstm,
                     forward_lstm, forward_mlp)
from .optim import AdamState, adam_step
from .rng import stream
from .tape import NumericError, Tape, Tensor, backward

__all__ = [
    "AdamState", "CheckpointError", "Linear", "LstmParams", "LstmStack", "MlpParams",
    "ModelCheckpoint", "NumericError", "ResNetParams", "Tape", "Tensor", "adam_step",
    "backward", "file_digest", "forward_bilstm", "forward_lstm", "forward_mlp", "grad_check",
    "load_checkpoint", "save_checkpoint", "stream",
]
