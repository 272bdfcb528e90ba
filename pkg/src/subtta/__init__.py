"""Online test-time adaptation through textual-visual subspace alignment and
semantic projection, with a synthetic shift benchmark and a binary embedding
file format."""

from .adapt import StepReport, SubspaceTTA, run_stream
from .encoder import ToyEncoder
from .linalg import EigenPairs, principal_angles, svd_small, sym_eig
from .objectives import entropy_objective, icv_objective
from .optim import AdamState, adam_step
from .predictor import (
    Prediction,
    SampleDiagnostics,
    TextAnchorSet,
    diagnose,
    predict_after_projection,
    project,
    zero_shot,
)
from .subspace import (
    AlignmentGradient,
    CovarianceTracker,
    Subspace,
    basis_invariance_check,
    chordal_loss,
    chordal_loss_grad,
    ema_update,
    extract_subspace,
    text_covariance,
)
from .synth import SynthConfig, SynthDataset, generate, oracle_accuracy

__version__ = "0.1.0"

__all__ = [
    "AdamState", "AlignmentGradient", "CovarianceTracker", "EigenPairs",
    "Prediction", "SampleDiagnostics", "StepReport", "Subspace", "SubspaceTTA",
    "SynthConfig", "SynthDataset", "TextAnchorSet", "ToyEncoder", "adam_step",
    "basis_invariance_check", "chordal_loss", "chordal_loss_grad", "diagnose",
    "ema_update", "entropy_objective", "extract_subspace", "generate",
    "icv_objective", "oracle_accuracy", "predict_after_projection",
    "principal_angles", "project", "run_stream", "svd_small", "sym_eig",
    "text_covariance", "zero_shot",
]
