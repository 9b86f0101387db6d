from . import tensor as T
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import grad_check, relative_error
from .optim import AdamState, adam_step, warmup_cosine_lr
from .tensor import Tape, Tensor, custom_op, parameter

__all__ = [
    "T", "Tape", "Tensor", "parameter", "custom_op", "grad_check", "relative_error",
    "AdamState", "adam_step", "warmup_cosine_lr", "save_checkpoint", "load_checkpoint",
]
