"""Deterministic desk-scale simulator for personalized federated learning
with mutual data-free distillation and a deep-to-shallow layer schedule."""

from .data import Dataset, PartitionPlan, dirichlet_partition, synth_blobs, synth_digits, train_test_split
from .experiment import MetricsLog, RunConfig, average_ua, fairness_histogram, run_training
from .models import desk_spec, m1_spec, m2_spec
from .nn import ModelSpec, forward, forward_prefix, forward_suffix, init_params
from .protocol import DropConfig, distillation_layer

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "DropConfig",
    "MetricsLog",
    "ModelSpec",
    "PartitionPlan",
    "RunConfig",
    "average_ua",
    "desk_spec",
    "dirichlet_partition",
    "distillation_layer",
    "fairness_histogram",
    "forward",
    "forward_prefix",
    "forward_suffix",
    "init_params",
    "m1_spec",
    "m2_spec",
    "run_training",
    "synth_blobs",
    "synth_digits",
    "train_test_split",
    "__version__",
]
