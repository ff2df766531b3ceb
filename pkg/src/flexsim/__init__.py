"""Simulator for a bit-scalable, sparsity-aware GEMM accelerator and NeRF encoding kernels."""

__version__ = "0.1.0"

from .errors import ConfigError, FlexSimError, FormatError, PlanError, SimulationFault
from .formats import SparsityFormat, decode, encode, footprint_bits, select_format
from .mac import fused_multiply
from .noc import DataflowTag, TagKind, classify_dataflow, clb_deliver, plan_mapping, route
from .reduction import TaggedPartial, flexible_reduce, reduce_latency
from .sim import ArchConfig, BaselineKind, LayerSpec, run_baseline, run_gemm, run_layer_sequence
from .tensor import DenseTile, PrecisionMode, fetch_geometry, measure_sparsity, synth_sparse

__all__ = [
    "ArchConfig", "BaselineKind", "ConfigError", "DataflowTag", "DenseTile", "FlexSimError",
    "FormatError", "LayerSpec", "PlanError", "PrecisionMode", "SimulationFault",
    "SparsityFormat", "TagKind", "TaggedPartial", "classify_dataflow", "clb_deliver", "decode",
    "encode", "fetch_geometry", "flexible_reduce", "footprint_bits", "fused_multiply",
    "measure_sparsity", "plan_mapping", "reduce_latency", "route", "run_baseline", "run_gemm",
    "run_layer_sequence", "select_format", "synth_sparse",
]
