"""Undefended and domain-adaptation training procedures.

Domain-adaptation trainers take the labeled public split as source and an
``UnlabeledSplit`` as target; they reject anything that still carries labels.
Only :func:`train_baseline` sees sensitive labels, because it models the
undefended victim.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterator, Literal, Optional

import numpy as np

from .data import Split, UnlabeledSplit
from .errors import ShapeError
from .numcore import (
    Gradients,
    MlpModel,
    accuracy,
    backward,
    cross_entropy,
    forward,
    init_mlp,
    sgd_step,
    spawn_rngs,
)

log = logging.getLogger(__name__)

METHODS = ("baseline", "source_only", "ddc", "drcn", "adda")
DA_METHODS = ("ddc", "drcn", "adda")
FULL_BATCH_LIMIT = 2048
DISC_HIDDEN = 32
ADV_LR_SCALE = 0.1


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    learning_rate: float = 0.05
    batch_size: int = 32
    seed: int = 0
    lambda_mmd: float = 0.25
    recon_weight: float = 1.0
    kernel: Literal["linear", "rbf"] = "rbf"
    rbf_bandwidth: Optional[float] = None  # None -> median heuristic
    hidden: tuple[int, ...] = (64, 64)
    feature_layer: int = -1

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lambda_mmd < 0 or self.recon_weight < 0:
            raise ValueError("loss weights must be >= 0")
        if self.kernel not in ("linear", "rbf"):
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.rbf_bandwidth is not None and not self.rbf_bandwidth > 0:
            raise ValueError("rbf_bandwidth must be > 0")
        if not self.hidden:
            raise ValueError("at least one hidden layer is required")
        if not -len(self.hidden) <= self.feature_layer < len(self.hidden):
            raise ValueError(f"feature_layer {self.feature_layer} out of range for {len(self.hidden)} hidden layers")


@dataclass
class DaJob:
    source: Split
    target: Split
    method: str
    config: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.source.n_categories != self.target.n_categories:
            raise ShapeError("source and target must share the label space")


@dataclass
class TrainedArtifact:
    model: MlpModel
    method: str
    history: list[dict] = field(default_factory=list)
    # decoder / discriminator / frozen source model, depending on the method
    aux: dict = field(default_factory=dict)


# -- maximum mean discrepancy ------------------------------------------------


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    return np.maximum(d, 0.0)


def median_bandwidth(xs: np.ndarray, xt: np.ndarray) -> float:
    """Median of pairwise squared distances over the pooled sample (1.0 if degenerate)."""
    pooled = np.vstack([xs, xt])
    d = _sq_dists(pooled, pooled)[np.triu_indices(len(pooled), k=1)]
    med = float(np.median(d)) if d.size else 0.0
    return med if med > 0 else 1.0


def _check_pair(xs, xt) -> tuple[np.ndarray, np.ndarray]:
    xs = np.asarray(xs, dtype=np.float64)
    xt = np.asarray(xt, dtype=np.float64)
    if xs.ndim != 2 or xt.ndim != 2 or len(xs) == 0 or len(xt) == 0:
        raise ValueError("mmd needs two non-empty 2-D samples")
    if xs.shape[1] != xt.shape[1]:
        raise ShapeError("samples must have equal width")
    return xs, xt


def mmd2_and_grad(xs, xt, kernel: str = "rbf", bandwidth: Optional[float] = None):
    """Squared MMD and its gradients w.r.t. every row of ``xs`` and ``xt``.

    RBF uses k(a, b) = exp(-|a - b|^2 / h) and the biased estimator; ``h`` is
    held constant (the median heuristic is not differentiated through).
    """
    xs, xt = _check_pair(xs, xt)
    ns, nt = len(xs), len(xt)
    if kernel == "linear":
        diff = xs.mean(0) - xt.mean(0)
        value = float(diff @ diff)
        gs = np.broadcast_to(2.0 * diff / ns, xs.shape).copy()
        gt = np.broadcast_to(-2.0 * diff / nt, xt.shape).copy()
        return value, gs, gt
    if kernel != "rbf":
        raise ValueError(f"unknown kernel {kernel!r}")
    h = median_bandwidth(xs, xt) if bandwidth is None else float(bandwidth)
    kss = np.exp(-_sq_dists(xs, xs) / h)
    ktt = np.exp(-_sq_dists(xt, xt) / h)
    kst = np.exp(-_sq_dists(xs, xt) / h)
    value = kss.mean() + ktt.mean() - 2.0 * kst.mean()
    c = 4.0 / h
    gs = -c / ns**2 * (kss.sum(1)[:, None] * xs - kss @ xs) + c / (ns * nt) * (kst.sum(1)[:, None] * xs - kst @ xt)
    gt = -c / nt**2 * (ktt.sum(1)[:, None] * xt - ktt @ xt) + c / (ns * nt) * (kst.sum(0)[:, None] * xt - kst.T @ xs)
    return float(value), gs, gt


def mmd(xs, xt, kernel: str = "rbf", bandwidth: Optional[float] = None) -> float:
    """Linear: |mean(xs) - mean(xt)|. RBF: sqrt of the clamped biased MMD^2."""
    xs, xt = _check_pair(xs, xt)
    if kernel == "linear":
        return float(np.linalg.norm(xs.mean(0) - xt.mean(0)))
    value, _, _ = mmd2_and_grad(xs, xt, kernel, bandwidth)
    return float(np.sqrt(max(0.0, value)))


# -- shared helpers ---------------------------------------------------------


def _add(a: Gradients, b: Gradients) -> Gradients:
    return Gradients(
        [x + y for x, y in zip(a.weights, b.weights)],
        [x + y for x, y in zip(a.biases, b.biases)],
        a.input,
    )


def _batches(n: int, batch_size: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


class _Cycler:
    """Endless reshuffled minibatches over ``n`` rows."""

    def __init__(self, n: int, batch_size: int, rng: np.random.Generator):
        self.n, self.batch_size, self.rng = n, batch_size, rng
        self._it: Iterator[np.ndarray] = iter(())

    def next(self) -> np.ndarray:
        for idx in self._it:
            return idx
        self._it = _batches(self.n, self.batch_size, self.rng)
        return next(self._it)


def _streams(config: TrainConfig):
    init_rng, shuffle_rng, target_rng, aux_rng = spawn_rngs(config.seed, 4)
    return init_rng, shuffle_rng, target_rng, aux_rng


def _new_model(width: int, n_categories: int, config: TrainConfig, rng) -> MlpModel:
    return init_mlp([width, *config.hidden, n_categories], rng, config.feature_layer)


def _require_unlabeled(target) -> None:
    if not isinstance(target, UnlabeledSplit) or hasattr(target.train, "labels"):
        raise TypeError("domain-adaptation trainers accept only an UnlabeledSplit as target")


def _supervised(x: np.ndarray, y: np.ndarray, n_categories: int, config: TrainConfig, method: str,
                step_extra: Optional[Callable] = None) -> TrainedArtifact:
    """Minibatch SGD on cross-entropy; ``step_extra(model, batch_idx)`` may return
    (extra_gradients, {history_key: value}) to add to each step."""
    init_rng, shuffle_rng, _, _ = _streams(config)
    model = _new_model(x.shape[1], n_categories, config, init_rng)
    history = []
    for epoch in range(config.epochs):
        ce_sum, extras, steps = 0.0, {}, 0
        for idx in _batches(len(x), config.batch_size, shuffle_rng):
            fwd = forward(model, x[idx])
            ce_sum += cross_entropy(fwd.probs, y[idx])
            if step_extra is None:
                grads = backward(model, fwd, y[idx])
            else:
                grads, logged = step_extra(model, fwd, idx)
                for k, v in logged.items():
                    extras[k] = extras.get(k, 0.0) + v
            model = sgd_step(model, grads, config.learning_rate)
            steps += 1
        row = {"epoch": epoch + 1, "classification": ce_sum / steps}
        row.update({k: v / steps for k, v in extras.items()})
        history.append(row)
    return TrainedArtifact(model, method, history)


# -- trainers ---------------------------------------------------------------


def train_baseline(target: Split, config: TrainConfig) -> TrainedArtifact:
    """Plain cross-entropy on the sensitive training set, labels included."""
    tr = target.train
    return _supervised(tr.features, tr.labels, tr.n_categories, config, "baseline")


def train_source_only(source: Split, config: TrainConfig) -> TrainedArtifact:
    tr = source.train
    return _supervised(tr.features, tr.labels, tr.n_categories, config, "source_only")


def train_ddc(source: Split, target: UnlabeledSplit, config: TrainConfig) -> TrainedArtifact:
    """Cross-entropy on source plus lambda * MMD^2 between source and target features."""
    _require_unlabeled(target)
    xs, ys = source.train.features, source.train.labels
    xt = target.train.features
    _, _, target_rng, _ = _streams(config)
    full = len(xs) <= FULL_BATCH_LIMIT and len(xt) <= FULL_BATCH_LIMIT
    cycler = None if full else _Cycler(len(xt), config.batch_size, target_rng)
    lam = config.lambda_mmd

    def step(model: MlpModel, fwd, idx):
        grads = backward(model, fwd, ys[idx])
        if full:
            f_src = forward(model, xs)
            f_tgt = forward(model, xt)
        else:
            f_src = fwd
            f_tgt = forward(model, xt[cycler.next()])
        fl = model.feature_layer
        value, gs, gt = mmd2_and_grad(f_src.feature(fl), f_tgt.feature(fl), config.kernel, config.rbf_bandwidth)
        if full:
            grads = _add(grads, backward(model, f_src, None, lam * gs))
        else:
            grads = backward(model, fwd, ys[idx], lam * gs)
        grads = _add(grads, backward(model, f_tgt, None, lam * gt))
        return grads, {"mmd": float(np.sqrt(max(value, 0.0)))}

    art = _supervised(xs, ys, source.n_categories, config, "ddc", step)
    return art


@dataclass
class Decoder:
    """Single dense layer mapping features back to input space."""

    weight: np.ndarray
    bias: np.ndarray

    def reconstruct(self, feats: np.ndarray) -> np.ndarray:
        return feats @ self.weight + self.bias


def init_decoder(feat_dim: int, out_dim: int, rng: np.random.Generator) -> Decoder:
    return Decoder(rng.normal(0.0, np.sqrt(1.0 / feat_dim), size=(feat_dim, out_dim)), np.full(out_dim, 0.5))


def reconstruction_loss_and_grad(dec: Decoder, feats: np.ndarray, target: np.ndarray):
    """Mean squared error over all entries, and gradients for decoder weight, bias and features."""
    resid = dec.reconstruct(feats) - target
    value = float((resid**2).mean())
    g_out = 2.0 * resid / resid.size
    return value, feats.T @ g_out, g_out.sum(0), g_out @ dec.weight.T


def train_drcn(source: Split, target: UnlabeledSplit, config: TrainConfig) -> TrainedArtifact:
    """Source classification plus recon_weight * reconstruction of target samples
    from the shared features through a dense decoder."""
    _require_unlabeled(target)
    xs, ys = source.train.features, source.train.labels
    xt = target.train.features
    _, _, target_rng, aux_rng = _streams(config)
    feat_dim = config.hidden[config.feature_layer]
    state = {"decoder": init_decoder(feat_dim, xt.shape[1], aux_rng)}
    cycler = _Cycler(len(xt), config.batch_size, target_rng)
    w = config.recon_weight

    def step(model: MlpModel, fwd, idx):
        grads = backward(model, fwd, ys[idx])
        batch = xt[cycler.next()]
        f_tgt = forward(model, batch)
        dec = state["decoder"]
        value, g_w, g_b, g_feat = reconstruction_loss_and_grad(dec, f_tgt.feature(model.feature_layer), batch)
        grads = _add(grads, backward(model, f_tgt, None, w * g_feat))
        state["decoder"] = Decoder(dec.weight - config.learning_rate * w * g_w, dec.bias - config.learning_rate * w * g_b)
        return grads, {"reconstruction": value}

    art = _supervised(xs, ys, source.n_categories, config, "drcn", step)
    art.aux["decoder"] = state["decoder"]
    return art


def train_adda(source: Split, target: UnlabeledSplit, config: TrainConfig) -> TrainedArtifact:
    """Source pre-training, then adversarial alignment of a target encoder
    against a domain discriminator; the source classifier stays frozen."""
    _require_unlabeled(target)
    pre = train_source_only(source, config)
    src_model = pre.model
    fl = src_model.feature_layer
    encoder_layers = list(range(fl + 1))
    _, _, target_rng, aux_rng = _streams(config)
    disc = init_mlp([src_model.layer_dims[fl + 1], DISC_HIDDEN, 2], aux_rng, 0)
    tgt_model = src_model.copy()
    lr = ADV_LR_SCALE * config.learning_rate
    xs, xt = source.train.features, target.train.features
    src_cycler = _Cycler(len(xs), config.batch_size, target_rng)
    held_src = src_model.features(source.non_train.features)

    history = []
    for epoch in range(config.epochs):
        d_sum = a_sum = 0.0
        steps = 0
        for idx in _batches(len(xt), config.batch_size, target_rng):
            f_s = src_model.features(xs[src_cycler.next()])
            fwd_t = forward(tgt_model, xt[idx])
            f_t = fwd_t.feature(fl)
            # discriminator: source = 1, target = 0
            d_in = np.vstack([f_s, f_t])
            d_lab = np.concatenate([np.ones(len(f_s), dtype=np.int64), np.zeros(len(f_t), dtype=np.int64)])
            d_fwd = forward(disc, d_in)
            d_sum += cross_entropy(d_fwd.probs, d_lab)
            disc = sgd_step(disc, backward(disc, d_fwd, d_lab), lr)
            # target encoder: inverted labels, make target look like source
            inv = np.ones(len(f_t), dtype=np.int64)
            g_fwd = forward(disc, f_t)
            a_sum += cross_entropy(g_fwd.probs, inv)
            g_feat = backward(disc, g_fwd, inv).input
            tgt_model = sgd_step(tgt_model, backward(tgt_model, fwd_t, None, g_feat), lr, encoder_layers)
            steps += 1
        held_tgt = tgt_model.features(target.non_train.features) if len(target.non_train) else tgt_model.features(xt)
        d_acc = _disc_accuracy(disc, held_src, held_tgt) if len(held_src) else float("nan")
        row = dict(pre.history[epoch])
        row.update({"epoch": epoch + 1, "discriminator": d_sum / steps, "adversarial": a_sum / steps, "disc_accuracy": d_acc})
        history.append(row)
    log.debug("adda disc accuracy: first %.3f last %.3f", history[0]["disc_accuracy"], history[-1]["disc_accuracy"])
    return TrainedArtifact(tgt_model, "adda", history, {"discriminator": disc, "source_model": src_model})


def _disc_accuracy(disc: MlpModel, f_src: np.ndarray, f_tgt: np.ndarray) -> float:
    x = np.vstack([f_src, f_tgt])
    y = np.concatenate([np.ones(len(f_src), dtype=np.int64), np.zeros(len(f_tgt), dtype=np.int64)])
    return accuracy(disc, x, y)


def train(job: DaJob) -> TrainedArtifact:
    """Run one job. Sensitive labels are stripped here before any DA trainer sees them."""
    cfg = job.config
    if job.method == "baseline":
        return train_baseline(job.target, cfg)
    if job.method == "source_only":
        return train_source_only(job.source, cfg)
    hidden_target = job.target.without_labels()
    trainer = {"ddc": train_ddc, "drcn": train_drcn, "adda": train_adda}[job.method]
    return trainer(job.source, hidden_target, cfg)
