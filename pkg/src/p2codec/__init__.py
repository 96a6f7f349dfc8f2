"""Lossless image codec driven by autoregressive next-symbol models.

The pipeline: partition an image into patches, serialize each patch into
symbol sequences (channel-joint or channel-independent), ask a probability
provider for a next-symbol distribution at every position, quantize it to a
fixed-point CDF, and range-code the symbols. Decoding replays the identical
model path, so round trips are bit-exact for any deterministic provider.
"""

from .coder import Bitstream, QuantizedCdf, decode_symbols, encode_symbols, quantize_cdf
from .container import CompressedContainer, ContainerHeader
from .errors import (
    BenchHarnessError,
    CodecError,
    ConfigError,
    ContextOverflowError,
    CorruptContainerError,
    CorruptProviderOutputError,
    CorruptStreamError,
    InvalidInputError,
    ProviderUnavailableError,
    TokenizerUnsuitableError,
    UnsupportedCheckError,
    WrongProviderError,
)
from .image import ImageBuffer, read_image, read_raw, write_image
from .pipeline import CodecConfig, compress, decompress, schedule_patches
from .providers import (
    AdaptiveContextModel,
    ProbabilityProvider,
    ProviderSession,
    RemoteProvider,
    factorization_check,
    sample_distribution,
)
from .serialization import (
    OrderingMode,
    PatchSpec,
    SymbolSequence,
    flatten_patch,
    partition,
    unflatten_patch,
)
from .tokens import (
    DigitalTokenMap,
    PromptConfig,
    TokenizedContext,
    build_digital_token_map,
    detokenize_symbols,
    identity_token_map,
    map_fingerprint,
    tokenize_context,
)

__version__ = "0.1.0"
