"""Domain-adaptation training as a defense against membership inference."""
from .attack import AttackReport, ScoreSet, advantage, attack, extract_scores, fit_threshold
from .data import Dataset, Domain, Split, domain_diversity, domain_size, mix, subset_per_category
from .imaging import Fingerprint, domain_norm, perturb, phash, similarity
from .numcore import MlpModel, backward, forward, sgd_step
from .trainers import DaJob, TrainConfig, TrainedArtifact, mmd, train

__version__ = "0.1.0"

__all__ = [
    "AttackReport", "ScoreSet", "advantage", "attack", "extract_scores", "fit_threshold",
    "Dataset", "Domain", "Split", "domain_diversity", "domain_size", "mix", "subset_per_category",
    "Fingerprint", "domain_norm", "perturb", "phash", "similarity",
    "MlpModel", "backward", "forward", "sgd_step",
    "DaJob", "TrainConfig", "TrainedArtifact", "mmd", "train",
]
