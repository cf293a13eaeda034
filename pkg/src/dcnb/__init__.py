"""Lossy-then-lossless codec for neural-network weight tensors.

Pipeline: weighted rate-distortion quantization onto an equidistant grid,
then context-adaptive binary arithmetic coding of the quantized indices
into a bit-exact, self-contained bitstream.
"""

from .bacore import (ArithDecoder, ArithEncoder, CoderStateError,
                     PayloadTruncatedError, prob_to_fixed)
from .binarizer import (BinarizationParams, QuantIndexTensor, binarize_index,
                        decode_tensor, encode_tensor, matrixify,
                        min_remainder_bits)
from .bitstream import FormatError, LayerHeader, parse, serialize
from .codec import (EncodeParams, EncodeResult, SweepResult, decode_model,
                    encode_model, sweep)
from .ctxmodel import ContextModel, ContextSet
from .ingest import CodableLayer, Role, TensorEntry, load, save, select_codable
from .metrics import (compression_ratio, empirical_entropy, huffman_baseline,
                      sparsity, weighted_distortion)
from .quantizer import (QuantGrid, RdConfig, WeightStats, build_grid,
                        dequantize, rd_quantize_layer, rd_quantize_weight)

__version__ = "0.1.0"
