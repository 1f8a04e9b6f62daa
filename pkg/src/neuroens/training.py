"""Training and evaluation protocol.

Splits are subject-level: the held-out count is round-half-up of the
fraction, the assignment is a seeded permutation, and no subject appears
on both sides. Each repetition draws a fresh train/test split and a fresh
model; within a repetition the validation subjects are re-drawn from the
training pool every epoch, so over 25 epochs most training subjects serve
in validation at least once.

The optimizer is a functional Adam (bias-corrected first/second moments,
update = lr * m_hat / (sqrt(v_hat) + eps)) written against plain tensor
arithmetic so the same code runs on torch tensors and numpy arrays.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import torch

from .ensemble import (EnsembleModel1, EnsembleModel2, build_model1, build_model2,
                       default_model1_specs, default_model2_specs)
from .pipeline import CohortData
from .results import ResultRow, ResultTable
from .seeding import derive_seed
from .weights import load_pretrained

__all__ = [
    "ExperimentConfig", "holdout_count", "split_train_test", "split_validation",
    "cross_entropy_loss", "AdamState", "adam_init", "adam_step",
    "TrainHistory", "train_once", "evaluate",
    "RepetitionResult", "ExperimentResult", "run_experiment", "build_configured_model",
]


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: a model variant and the full protocol knobs.

    The protocol defaults (25 epochs, 5 repetitions, learning rates 1e-3
    and 1e-4, batches of 8, 20% test and 20% validation) reproduce the
    reference runs; width_scale/stage_depths shrink the backbones for
    desk-scale cohorts without touching the protocol.
    """

    model: int = 1
    use_smoothed: bool = False
    use_pretrained: bool = False
    learning_rates: tuple[float, ...] = (1e-3, 1e-4)
    epochs: int = 25
    repetitions: int = 5
    batch_size: int = 8
    test_fraction: float = 0.2
    val_fraction: float = 0.2
    master_seed: int = 0
    width_scale: float = 1.0
    stage_depths: tuple[int, ...] | None = None
    pretrained_dir: str | None = None
    select_best_val: bool = False

    def __post_init__(self):
        object.__setattr__(self, "learning_rates", tuple(float(lr) for lr in self.learning_rates))
        if self.stage_depths is not None:
            object.__setattr__(self, "stage_depths", tuple(int(d) for d in self.stage_depths))
        if self.model not in (1, 2):
            raise ValueError(f"model must be 1 or 2, got {self.model}")
        if self.model == 1 and self.use_smoothed:
            raise ValueError("model 1 always reads the unsmoothed whole-brain volume; "
                             "use_smoothed applies to model 2 only")
        if not self.learning_rates or any(lr <= 0 for lr in self.learning_rates):
            raise ValueError(f"learning_rates must be positive, got {self.learning_rates}")
        if self.epochs < 0 or self.repetitions < 1 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0, repetitions and batch_size >= 1")
        for name, value in (("test_fraction", self.test_fraction), ("val_fraction", self.val_fraction)):
            if not 0.0 <= value < 1.0:
                raise ValueError(f"{name} must be in [0, 1), got {value}")
        if self.use_pretrained and self.pretrained_dir is None:
            raise ValueError("use_pretrained requires pretrained_dir")

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "learning_rates" in kwargs:
            kwargs["learning_rates"] = tuple(kwargs["learning_rates"])
        if kwargs.get("stage_depths") is not None:
            kwargs["stage_depths"] = tuple(kwargs["stage_depths"])
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------

def holdout_count(n: int, fraction: float) -> int:
    """Round-half-up share of n (0.2 of 598 is 120, not 119)."""
    return int(math.floor(fraction * n + 0.5))


def _split_holdout(items, fraction: float, seed: int):
    items = list(items)
    if not 0.0 <= fraction < 1.0:
        raise ValueError(f"fraction must be in [0, 1), got {fraction}")
    n = len(items)
    k = holdout_count(n, fraction)
    if n > 0 and k >= n:
        raise ValueError(f"holdout of {k} would consume all {n} items")
    perm = np.random.default_rng(seed).permutation(n)
    held = [items[i] for i in perm[:k]]
    rest = [items[i] for i in perm[k:]]
    return rest, held


def split_train_test(subject_ids, test_fraction: float, seed: int,
                     labels=None) -> tuple[list, list]:
    """(train, test) subject ids; disjoint, union = input, |test| round-half-up.

    The default split is unstratified. Passing ``labels`` (one per subject
    id) draws the holdout per class instead, so class proportions carry
    over; per-class sizes are round-half-up, so the stratified test size
    can differ from the unstratified one by a subject.
    """
    if labels is None:
        return _split_holdout(subject_ids, test_fraction, seed)
    subject_ids = list(subject_ids)
    labels = list(labels)
    if len(labels) != len(subject_ids):
        raise ValueError(f"{len(labels)} labels for {len(subject_ids)} subject ids")
    train, test = [], []
    for value in sorted({str(l) for l in labels}):
        group = [sid for sid, l in zip(subject_ids, labels) if str(l) == value]
        rest, held = _split_holdout(group, test_fraction, derive_seed(seed, "stratum", value))
        train += rest
        test += held
    return train, test


def split_validation(train_items, val_fraction: float, seed: int) -> tuple[list, list]:
    """(fit, validation) drawn from the training pool; re-seeded per epoch."""
    return _split_holdout(train_items, val_fraction, seed)


# ---------------------------------------------------------------------------
# Loss and optimizer
# ---------------------------------------------------------------------------

def cross_entropy_loss(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Mean cross-entropy from raw logits, stable via log-sum-exp."""
    if logits.ndim != 2 or logits.shape[0] != targets.shape[0]:
        raise ValueError(f"logits {tuple(logits.shape)} do not match targets {tuple(targets.shape)}")
    lse = torch.logsumexp(logits, dim=1)
    picked = logits.gather(1, targets.long().view(-1, 1)).squeeze(1)
    return (lse - picked).mean()


@dataclass
class AdamState:
    step: int
    m: list
    v: list


def adam_init(params) -> AdamState:
    return AdamState(step=0, m=[p * 0 for p in params], v=[p * 0 for p in params])


def adam_step(params, grads, state: AdamState, lr: float,
              betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
    """One functional Adam update; returns (new_params, new_state).

    Written with operator arithmetic only, so it accepts torch tensors and
    numpy arrays (and plain floats) alike.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and state must have matching lengths")
    b1, b2 = betas
    step = state.step + 1
    bias1 = 1.0 - b1 ** step
    bias2 = 1.0 - b2 ** step
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        m_hat = m / bias1
        v_hat = v / bias2
        new_params.append(p - lr * m_hat / (v_hat ** 0.5 + eps))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(step=step, m=new_m, v=new_v)


# ---------------------------------------------------------------------------
# Fit / evaluate
# ---------------------------------------------------------------------------

@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)


def _batch_tensors(arrays, labels, indices):
    xs = [torch.from_numpy(np.ascontiguousarray(a[indices], dtype=np.float32)) for a in arrays]
    ys = torch.from_numpy(labels[indices])
    return xs, ys


def evaluate(model, arrays, labels: np.ndarray, indices, batch_size: int = 16) -> float:
    """Argmax accuracy over the indexed subjects; leaves the model in eval mode."""
    indices = np.asarray(list(indices), dtype=np.int64)
    if indices.size == 0:
        raise ValueError("empty evaluation set")
    model.eval()
    correct = 0
    with torch.no_grad():
        for start in range(0, indices.size, batch_size):
            sel = indices[start:start + batch_size]
            xs, ys = _batch_tensors(arrays, labels, sel)
            pred = model(*xs).argmax(dim=1)
            correct += int((pred == ys).sum())
    return correct / indices.size


def train_once(model, arrays, labels: np.ndarray, train_indices, *, lr: float,
               epochs: int, batch_size: int, val_fraction: float, rep_seed: int,
               select_best_val: bool = False) -> TrainHistory:
    """Fit one model on the given training subjects.

    Validation subjects are re-drawn from the training pool at every epoch.
    By default the final-epoch weights are kept; with ``select_best_val``
    the epoch with the highest validation accuracy wins (earliest on ties).
    """
    train_indices = [int(i) for i in train_indices]
    if epochs > 0 and not train_indices:
        raise ValueError("no training subjects")
    if select_best_val and holdout_count(len(train_indices), val_fraction) == 0:
        raise ValueError("select_best_val requires a nonempty validation split")
    params = [p for p in model.parameters() if p.requires_grad]
    state = adam_init(params)
    history = TrainHistory()
    best_acc, best_state = -1.0, None
    for epoch in range(epochs):
        fit_idx, val_idx = split_validation(train_indices, val_fraction,
                                            derive_seed(rep_seed, "val", epoch))
        order = np.random.default_rng(derive_seed(rep_seed, "batch", epoch)).permutation(len(fit_idx))
        model.train()
        loss_sum, seen = 0.0, 0
        for start in range(0, len(order), batch_size):
            sel = np.array([fit_idx[i] for i in order[start:start + batch_size]], dtype=np.int64)
            xs, ys = _batch_tensors(arrays, labels, sel)
            logits = model(*xs)
            loss = cross_entropy_loss(logits, ys)
            if not torch.isfinite(loss):
                raise RuntimeError(f"training diverged: non-finite loss at epoch {epoch}")
            model.zero_grad(set_to_none=True)
            loss.backward()
            grads = [p.grad if p.grad is not None else torch.zeros_like(p) for p in params]
            with torch.no_grad():
                new_params, state = adam_step(params, grads, state, lr)
                for p, q in zip(params, new_params):
                    p.copy_(q)
            loss_sum += float(loss.detach()) * len(sel)
            seen += len(sel)
        history.train_loss.append(loss_sum / seen if seen else math.nan)
        if val_idx:
            val_acc = evaluate(model, arrays, labels, val_idx)
        else:
            val_acc = math.nan
        history.val_accuracy.append(val_acc)
        if select_best_val and val_acc > best_acc:
            best_acc = val_acc
            best_state = copy.deepcopy(model.state_dict())
    if select_best_val and best_state is not None:
        model.load_state_dict(best_state)
    return history


# ---------------------------------------------------------------------------
# Experiment driver
# ---------------------------------------------------------------------------

def build_configured_model(cfg: ExperimentConfig, dims: tuple[int, int, int], rep_seed: int):
    """Fresh seeded ensemble for one repetition, pretrained weights applied."""
    init_seed = derive_seed(rep_seed, "init")
    fusion_seed = derive_seed(rep_seed, "fusion")
    if cfg.model == 1:
        specs = default_model1_specs(dims, cfg.width_scale, cfg.stage_depths, init_seed)
        model: EnsembleModel1 | EnsembleModel2 = build_model1(specs, dims, fusion_seed)
        members = list(model.backbones)
    else:
        gm_specs, wm_specs = default_model2_specs(dims, cfg.width_scale, cfg.stage_depths, init_seed)
        model = build_model2(gm_specs, wm_specs, dims, fusion_seed)
        members = list(model.gm_backbones) + list(model.wm_backbones)
    if cfg.use_pretrained:
        for member in members:
            source = Path(cfg.pretrained_dir) / f"{member.spec.family.value.lower()}.ntc"
            if not source.exists():
                raise FileNotFoundError(
                    f"no pretrained weights for {member.spec.family.value}: {source}")
            load_pretrained(member, source)
            member.spec = replace(member.spec, pretrained_source=str(source))
    return model


@dataclass
class RepetitionResult:
    learning_rate: float
    repetition: int
    rep_seed: int
    test_accuracy: float
    test_subjects: tuple[str, ...]
    history: TrainHistory


@dataclass
class ExperimentResult:
    table: ResultTable
    repetitions: list[RepetitionResult]
    best_model: object = None
    best_repetition: RepetitionResult | None = None


def run_experiment(data: CohortData, cfg: ExperimentConfig,
                   keep_best_model: bool = False) -> ExperimentResult:
    """The full protocol: repetitions x learning rates, one result row per rate.

    Every repetition gets its own seed-derived train/test split and its own
    freshly initialized ensemble; accuracies aggregate as mean and sample
    standard deviation over repetitions. With ``keep_best_model`` the model
    of the highest-test-accuracy repetition (earliest on ties) is retained.
    """
    if len(data.arrays) != (1 if cfg.model == 1 else 2):
        raise ValueError(f"cohort was loaded for a different model variant "
                         f"({len(data.arrays)} input arrays for model {cfg.model})")
    id_to_index = {sid: i for i, sid in enumerate(data.subject_ids)}
    rows = []
    repetition_results = []
    best_model, best_rep = None, None
    for lr_idx, lr in enumerate(cfg.learning_rates):
        accuracies = []
        for rep in range(cfg.repetitions):
            rep_seed = derive_seed(cfg.master_seed, lr_idx, rep)
            train_ids, test_ids = split_train_test(data.subject_ids, cfg.test_fraction,
                                                   derive_seed(rep_seed, "split"))
            model = build_configured_model(cfg, data.dims, rep_seed)
            history = train_once(model, data.arrays, data.labels,
                                 [id_to_index[s] for s in train_ids],
                                 lr=lr, epochs=cfg.epochs, batch_size=cfg.batch_size,
                                 val_fraction=cfg.val_fraction, rep_seed=rep_seed,
                                 select_best_val=cfg.select_best_val)
            accuracy = evaluate(model, data.arrays, data.labels,
                                [id_to_index[s] for s in test_ids])
            accuracies.append(accuracy)
            rep_result = RepetitionResult(
                learning_rate=lr, repetition=rep, rep_seed=rep_seed,
                test_accuracy=accuracy, test_subjects=tuple(test_ids), history=history)
            repetition_results.append(rep_result)
            if keep_best_model and (best_rep is None or accuracy > best_rep.test_accuracy):
                best_model, best_rep = model, rep_result
        rows.append(ResultRow.from_accuracies(
            model=cfg.model,
            smoothed=int(cfg.use_smoothed) if cfg.model == 2 else 0,
            pretrained=int(cfg.use_pretrained),
            learning_rate=lr,
            accuracies=accuracies,
        ))
    return ExperimentResult(table=ResultTable(rows=tuple(rows)),
                            repetitions=repetition_results,
                            best_model=best_model, best_repetition=best_rep)
