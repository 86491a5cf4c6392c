"""Two-client broad learning with additively masked joint feature generation."""

from .bls import BlsHyperParams, BlsModel
from .datasets import LabeledDataset, SplitPlan
from .experiment import ExperimentConfig, MetricsReport, run_experiment
from .linalg import RngStream, pseudoinverse, random_matrix, ridge_solve
from .messages import MessageKind, ProtocolMessage, Role
from .protocol import FederationKeys, PartyRngs, ProtocolAbort, run_protocol

__version__ = "0.1.0"

__all__ = [
    "BlsHyperParams",
    "BlsModel",
    "ExperimentConfig",
    "FederationKeys",
    "LabeledDataset",
    "MessageKind",
    "MetricsReport",
    "PartyRngs",
    "ProtocolAbort",
    "ProtocolMessage",
    "RngStream",
    "Role",
    "SplitPlan",
    "pseudoinverse",
    "random_matrix",
    "ridge_solve",
    "run_experiment",
    "run_protocol",
    "__version__",
]
