"""Bit-exact simulator and cost model for a hamming-weight-compression
convolution engine (NESTA)."""
from .costmodel import PpaParams, SizingRule, load_params
from .engine import EngineBank, EngineConfig, EngineState, consume_batch, finalize, partial_value, reset
from .hwc import BitMatrix, CelNetwork, Compressor, build_cel_network, evaluate_network
from .oracle import LayerShape, conv_layer, dot9

__version__ = "0.1.0"
