"""Random error-correcting-output-code ensembles with abstention."""
from .codebook import ABSTAIN, CodeMatrix, DecodeResult, decode, hamming, sample_code
from .data import Dataset, RelabelMap, load_csv, load_idx, relabel, synth_gaussian, synth_symmetric
from .ensemble import Ensemble, build_ensemble
from .kernels import BACKEND
from .learners import BinaryClassifier, SubstituteModel, TrainConfig, train_binary, train_substitute

__version__ = "0.1.0"

__all__ = [
    "ABSTAIN", "BACKEND", "BinaryClassifier", "CodeMatrix", "Dataset", "DecodeResult", "Ensemble",
    "RelabelMap", "SubstituteModel", "TrainConfig", "build_ensemble", "decode", "hamming", "load_csv",
    "load_idx", "relabel", "sample_code", "synth_gaussian", "synth_symmetric", "train_binary",
    "train_substitute",
]
