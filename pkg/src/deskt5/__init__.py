"""Desk-scale multilingual text-to-text pre-training lab."""
from .vocab import Vocab, build_vocab, decode, encode
from .objectives import Example, NoiseSpec, Objective, build_example, reconstruct, span_corrupt
from .sampler import MixtureSpec, language_probs, mixed_stream, sample_language
from .model import ModelConfig, Params, forward, init_model, loss_and_grads
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .trainer import TrainConfig, finetune, make_batches, pretrain

__version__ = "0.1.0"
