"""Black-box threshold membership inference on confidence scores."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .numcore import MlpModel, forward

RANDOM_GUESS = 0.5


@dataclass(frozen=True)
class ScoreSet:
    member_scores: np.ndarray
    nonmember_scores: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.member_scores, dtype=np.float64).ravel()
        n = np.asarray(self.nonmember_scores, dtype=np.float64).ravel()
        if m.size == 0 or n.size == 0:
            raise ValueError("both member and non-member scores are required")
        for arr in (m, n):
            if not np.all((arr >= 0.0) & (arr <= 1.0)):
                raise ValueError("scores must lie in [0, 1]")
        object.__setattr__(self, "member_scores", m)
        object.__setattr__(self, "nonmember_scores", n)


@dataclass(frozen=True)
class AttackReport:
    p_thresh: float
    p_inference: float  # balanced accuracy, (TPR + TNR) / 2
    adv_mi: float
    n_members: int
    n_nonmembers: int
    plain_accuracy: float  # fraction of all samples classified correctly at p_thresh


def extract_scores(model: MlpModel, train, non_train) -> ScoreSet:
    """Score of a sample = the model's top softmax confidence."""
    return ScoreSet(
        forward(model, train.features).probs.max(axis=1),
        forward(model, non_train.features).probs.max(axis=1),
    )


def advantage(p_inference: float) -> float:
    if not 0.0 <= p_inference <= 1.0:
        raise ValueError(f"p_inference must be in [0, 1], got {p_inference}")
    return abs(p_inference - RANDOM_GUESS) / RANDOM_GUESS


def fit_threshold(scores: ScoreSet) -> AttackReport:
    """Pick t maximising balanced accuracy of "member iff score >= t".

    Candidates are every distinct observed score plus one value above the
    maximum (flag nobody). Ties go to the smallest t.
    """
    m = np.sort(scores.member_scores)
    n = np.sort(scores.nonmember_scores)
    candidates = np.unique(np.concatenate([m, n]))
    candidates = np.append(candidates, np.nextafter(candidates[-1], np.inf))
    # members at or above t; non-members below t
    tp = len(m) - np.searchsorted(m, candidates, side="left")
    tn = np.searchsorted(n, candidates, side="left")
    acc = (tp / len(m) + tn / len(n)) / 2.0
    best = int(np.argmax(acc))
    p = float(acc[best])
    plain = (int(tp[best]) + int(tn[best])) / (len(m) + len(n))
    return AttackReport(float(candidates[best]), p, advantage(p), len(m), len(n), plain)


def attack(model: MlpModel, train, non_train) -> AttackReport:
    return fit_threshold(extract_scores(model, train, non_train))


def write_scores_csv(path, scores: ScoreSet) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["score", "is_member"])
        for s in scores.member_scores:
            w.writerow([repr(float(s)), 1])
        for s in scores.nonmember_scores:
            w.writerow([repr(float(s)), 0])


def read_scores_csv(path) -> ScoreSet:
    members, nonmembers = [], []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            flag = row["is_member"].strip()
            if flag not in ("0", "1"):
                raise ValueError(f"is_member must be 0 or 1, got {flag!r}")
            (members if flag == "1" else nonmembers).append(float(row["score"]))
    return ScoreSet(np.array(members), np.array(nonmembers))
