"""Logits server: a small causal LM behind the codec wire protocol."""

from .model import ModelConfig, TinyCausalLM, model_fingerprint
from .tokenizer import WordDigitTokenizer
from .server import LogitsServer, ServerConfig
from .training import FineTuneConfig, finetune, pretrain

__version__ = "0.1.0"
