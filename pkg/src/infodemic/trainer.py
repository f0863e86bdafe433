"""Task losses and training strategies: single-task, basic joint, GradNorm, meta."""
from __future__ import annotations

import copy
import logging
import math
import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch
from torch import Tensor

from .errors import NonFiniteLoss
from .evaluate import MetricsReport, evaluate_samples
from .model import TASKS, Predictions, rumor_loss, virality_loss, vulnerability_loss

log = logging.getLogger(__name__)

STRATEGIES = ("single_rumor", "single_virality", "single_vuln", "basic", "gradnorm", "meta")
_SINGLE = {"single_rumor": (True, False, False),
           "single_virality": (False, True, False),
           "single_vuln": (False, False, True)}


class DegenerateInitialLoss(UserWarning):
    """A task's initial loss was 0, so GradNorm fell back to equal weights."""


@dataclass
class TrainConfig:
    strategy: str = "meta"
    epochs: int = 20
    batch_size: int = 8
    lr: float = 5e-3
    inner_lr: float = 5e-3
    gradnorm_alpha: float = 1.5
    gradnorm_weight_lr: float = 2.5e-2
    obs_fraction: float = 0.8
    seed: int = 0
    loss_mask: tuple = (True, True, True)
    optimizer: str = "adam"  # "sgd": plain gradient descent outer step

    def __post_init__(self):
        self.loss_mask = tuple(bool(x) for x in self.loss_mask)
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if len(self.loss_mask) != 3:
            raise ValueError("loss_mask needs three flags")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    @property
    def mask(self) -> tuple[bool, bool, bool]:
        return _SINGLE.get(self.strategy, self.loss_mask)

    @property
    def tasks(self) -> tuple[str, ...]:
        return tuple(t for t, on in zip(TASKS, self.mask) if on)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["loss_mask"] = list(self.loss_mask)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["loss_mask"] = tuple(d.get("loss_mask", (True, True, True)))
        return cls(**d)


@dataclass
class LossBundle:
    rumor: float
    virality: float
    vulnerability: float
    labeled_user_count: int

    def as_dict(self) -> dict:
        return asdict(self)


def compute_task_losses(preds: Predictions, sample) -> LossBundle:
    """Per-event losses; unlabeled users never enter the vulnerability term."""
    l3, n = vulnerability_loss(preds.vulnerability, sample)
    return LossBundle(
        rumor=float(rumor_loss(preds.rumor_logits, sample).detach()),
        virality=float(virality_loss(preds.virality, sample).detach()),
        vulnerability=float(l3.detach()),
        labeled_user_count=n,
    )


def batch_task_loss(model, task: str, inters, batch, params: Optional[dict] = None) -> tuple[Tensor, int]:
    """Mean task loss over the batch.

    Vulnerability is averaged over the events that have labeled users; it is
    a constant 0 when there are none.
    """
    total, n_events, labeled = None, 0, 0
    for inter, sample in zip(inters, batch):
        loss, count = model.task_loss(task, inter, sample, params)
        if task == "vulnerability":
            labeled += count
            if count == 0:
                continue
        total = loss if total is None else total + loss
        n_events += 1
    if total is None:
        return torch.zeros((), dtype=torch.float64), labeled
    return total / n_events, labeled


def _scalar(x) -> float:
    return x.detach().item() if isinstance(x, Tensor) else float(x)


def _check_finite(losses: dict[str, Tensor]) -> None:
    values = {k: v.detach().item() for k, v in losses.items()}
    bad = {k: v for k, v in values.items() if not math.isfinite(v)}
    if bad:
        raise NonFiniteLoss(f"non-finite task losses: {bad}")


def _aux_loss(inters) -> Optional[Tensor]:
    aux = [i.aux_loss for i in inters if getattr(i, "aux_loss", None) is not None]
    return torch.stack(aux).mean() if aux else None


def gradnorm_weight_step(grad_norms: Sequence[float], losses: Sequence[float],
                         initial_losses: Sequence[Optional[float]], weights: Sequence[float],
                         alpha: float, lr: float) -> np.ndarray:
    """One GradNorm weight update from unweighted per-task gradient norms.

    ``G_k = w_k * grad_norms[k]``; the target ``mean(G) * r_k**alpha`` is held
    constant; the weights take one descent step on ``sum |G_k - target_k|`` and
    are rescaled to sum to the number of tasks.
    """
    g = np.asarray(grad_norms, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    n = len(w)
    if any(l0 is None or l0 == 0.0 for l0 in initial_losses):
        warnings.warn("initial task loss is zero; using equal GradNorm weights", DegenerateInitialLoss)
        return np.ones(n)
    ratio = np.asarray(losses, dtype=np.float64) / np.asarray(initial_losses, dtype=np.float64)
    mean_ratio = ratio.mean()
    r = ratio / mean_ratio if mean_ratio > 0 else np.ones(n)
    G = w * g
    target = G.mean() * r ** alpha
    w_new = w - lr * np.sign(G - target) * g
    w_new = np.maximum(w_new, 1e-8)
    return w_new * (n / w_new.sum())


def gradnorm_update(task_losses: Sequence[Tensor], initial_losses, weights, shared_params,
                    alpha: float = 1.5, lr: float = 2.5e-2) -> np.ndarray:
    """GradNorm update with gradient norms taken at ``shared_params`` by autograd."""
    norms = _grad_norms(task_losses, shared_params)
    return gradnorm_weight_step(norms, [_scalar(l) for l in task_losses], initial_losses, weights, alpha, lr)


def _grad_norms(task_losses: Sequence[Tensor], shared_params) -> list[float]:
    if isinstance(shared_params, Tensor):
        shared_params = [shared_params]
    norms = []
    for loss in task_losses:
        if not loss.requires_grad:
            norms.append(0.0)
            continue
        grads = torch.autograd.grad(loss, shared_params, retain_graph=True, allow_unused=True)
        sq = sum(float((g ** 2).sum()) for g in grads if g is not None)
        norms.append(math.sqrt(sq))
    return norms


class GradNormBalancer:
    def __init__(self, n_tasks: int, alpha: float = 1.5, lr: float = 2.5e-2):
        self.alpha, self.lr = alpha, lr
        self.weights = np.ones(n_tasks)
        self.initial: list[Optional[float]] = [None] * n_tasks

    def update(self, task_losses: Sequence[Tensor], shared_params, norms: Optional[Sequence[float]] = None) -> np.ndarray:
        values = [_scalar(l) for l in task_losses]
        for k, v in enumerate(values):
            if self.initial[k] is None and v > 0:
                self.initial[k] = v
        if norms is None:
            norms = _grad_norms(task_losses, shared_params)
        self.weights = gradnorm_weight_step(norms, values, self.initial, self.weights, self.alpha, self.lr)
        return self.weights

    def state_dict(self) -> dict:
        return {"weights": [float(w) for w in self.weights], "initial": list(self.initial)}

    def load_state_dict(self, state: dict) -> None:
        self.weights = np.array(state["weights"], dtype=np.float64)
        self.initial = list(state["initial"])


class Trainer:
    """Holds the optimizer, batch order and RNG state for one training run."""

    def __init__(self, model, config: TrainConfig, samples: Sequence):
        self.model = model
        self.config = config
        self.samples = list(samples)
        params = list(model.parameters())
        if config.optimizer == "adam":
            self.optimizer = torch.optim.Adam(params, lr=config.lr)
        else:
            self.optimizer = torch.optim.SGD(params, lr=config.lr)
        self.rng = np.random.default_rng(config.seed)
        torch.manual_seed(config.seed)
        self.order: Optional[np.ndarray] = None
        self.cursor = 0
        self.epochs_started = 0
        self.steps = 0
        self.balancer = GradNormBalancer(len(config.tasks), config.gradnorm_alpha, config.gradnorm_weight_lr)

    # -- batching ---------------------------------------------------------
    def batches_per_epoch(self) -> int:
        return math.ceil(len(self.samples) / self.config.batch_size)

    def next_batch(self) -> list:
        if not self.samples:
            raise ValueError("no training samples")
        if self.order is None or self.cursor >= len(self.order):
            self.order = self.rng.permutation(len(self.samples))
            self.cursor = 0
            self.epochs_started += 1
        idx = self.order[self.cursor:self.cursor + self.config.batch_size]
        self.cursor += len(idx)
        return [self.samples[i] for i in idx]

    # -- steps -------------------------------------------------------------
    def step(self, batch) -> LossBundle:
        self.model.train()
        strategy = self.config.strategy
        if strategy == "meta":
            bundle = self._step_meta(batch)
        elif strategy == "gradnorm":
            bundle = self._step_gradnorm(batch)
        else:
            bundle = self._step_basic(batch)
        self.steps += 1
        return bundle

    def _losses(self, inters, batch) -> tuple[dict[str, Tensor], int]:
        losses, labeled = {}, 0
        for task in TASKS:
            if task in self.config.tasks:
                losses[task], n = batch_task_loss(self.model, task, inters, batch)
                if task == "vulnerability":
                    labeled = n
        _check_finite(losses)
        return losses, labeled

    def _bundle(self, losses: dict[str, Tensor], labeled: int) -> LossBundle:
        get = lambda t: losses[t].detach().item() if t in losses else float("nan")
        return LossBundle(get("rumor"), get("virality"), get("vulnerability"), labeled)

    def _apply(self, total: Tensor) -> None:
        self.optimizer.zero_grad()
        if total.requires_grad:
            total.backward()
        self.optimizer.step()

    def _step_basic(self, batch) -> LossBundle:
        inters = [self.model.encode(s) for s in batch]
        losses, labeled = self._losses(inters, batch)
        total = sum(losses.values())
        aux = _aux_loss(inters)
        if aux is not None:
            total = total + aux
        self._apply(total)
        return self._bundle(losses, labeled)

    def _step_gradnorm(self, batch) -> LossBundle:
        inters = [self.model.encode(s) for s in batch]
        losses, labeled = self._losses(inters, batch)
        ordered = [losses[t] for t in self.config.tasks]
        norms = _grad_norms(ordered, [self.model.shared_layer_weight()])
        w = self.balancer.weights
        total = sum(float(wk) * lk for wk, lk in zip(w, ordered))
        aux = _aux_loss(inters)
        if aux is not None:
            total = total + aux
        self._apply(total)
        self.balancer.update(ordered, None, norms=norms)
        return self._bundle(losses, labeled)

    def _step_meta(self, batch) -> LossBundle:
        """First-order version of the inner/outer loop.

        The adapted head ``theta' = theta - inner_lr * grad`` is written as
        ``theta - stopgrad(inner_lr * grad)``, so the outer gradient w.r.t. the
        head equals the gradient at ``theta'`` and the backbone gradient is
        taken with ``theta'`` fixed.
        """
        inters = [self.model.encode(s) for s in batch]
        inner_losses, labeled = {}, 0
        outer = None
        for task in self.config.tasks:
            head = dict(self.model.heads[task].named_parameters())
            inner, n = batch_task_loss(self.model, task, inters, batch)
            if task == "vulnerability":
                labeled = n
            inner_losses[task] = inner
            if inner.requires_grad:
                grads = torch.autograd.grad(inner, list(head.values()), retain_graph=True, allow_unused=True)
            else:
                grads = [None] * len(head)
            adapted = {
                name: p if g is None else p - (self.config.inner_lr * g).detach()
                for (name, p), g in zip(head.items(), grads)
            }
            out_k, _ = batch_task_loss(self.model, task, inters, batch, adapted)
            outer = out_k if outer is None else outer + out_k
        _check_finite(inner_losses)
        if outer is None:
            raise ValueError("no task enabled")
        outer_value = outer.detach().item()
        if not math.isfinite(outer_value):
            raise NonFiniteLoss(f"non-finite outer loss {outer_value}")
        aux = _aux_loss(inters)
        if aux is not None:
            outer = outer + aux
        self._apply(outer)
        self.last_outer_loss = outer.detach().item()
        return self._bundle(inner_losses, labeled)

    def run_epoch(self) -> list[LossBundle]:
        if self.order is not None and self.cursor < len(self.order):
            n = math.ceil((len(self.order) - self.cursor) / self.config.batch_size)
        else:
            n = self.batches_per_epoch()
        return [self.step(self.next_batch()) for _ in range(n)]

    # -- persistence -------------------------------------------------------
    def state_dict(self) -> dict:
        return {
            "model": {k: v.detach().clone() for k, v in self.model.state_dict().items()},
            "optimizer": copy.deepcopy(self.optimizer.state_dict()),
            "rng": copy.deepcopy(self.rng.bit_generator.state),
            "torch_rng": torch.get_rng_state(),
            "order": None if self.order is None else [int(i) for i in self.order],
            "cursor": self.cursor,
            "epochs_started": self.epochs_started,
            "steps": self.steps,
            "gradnorm": self.balancer.state_dict(),
        }

    def load_state_dict(self, state: dict) -> None:
        self.model.load_state_dict(state["model"])
        self.optimizer.load_state_dict(state["optimizer"])
        self.rng.bit_generator.state = state["rng"]
        torch.set_rng_state(state["torch_rng"])
        self.order = None if state["order"] is None else np.array(state["order"], dtype=np.int64)
        self.cursor = state["cursor"]
        self.epochs_started = state["epochs_started"]
        self.steps = state["steps"]
        self.balancer.load_state_dict(state["gradnorm"])


# ---------------------------------------------------------------------------
# epoch loop
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    model: object
    final_state: dict
    best_state: dict
    best_epoch: Optional[int]
    log: list = field(default_factory=list)


def _nanmean(xs) -> float:
    xs = [x for x in xs if not math.isnan(x)]
    return float(np.mean(xs)) if xs else float("nan")


def selection_scores(log_records: Sequence[dict], strategy: str) -> list[float]:
    """Validation score per epoch (higher is better)."""
    def metric(rec, task, key):
        val = rec.get("validation")
        if not val or val[task].get(key) is None:
            return float("nan")
        return float(val[task][key])

    if strategy == "single_rumor":
        return [metric(r, "rumor", "macF1") for r in log_records]
    if strategy == "single_virality":
        return [-metric(r, "virality", "mse") for r in log_records]
    if strategy == "single_vuln":
        return [-metric(r, "vulnerability", "mse") for r in log_records]
    columns = [
        [metric(r, "rumor", "macF1") for r in log_records],
        [-metric(r, "virality", "mse") for r in log_records],
        [-metric(r, "vulnerability", "mse") for r in log_records],
    ]
    zs = []
    for col in columns:
        arr = np.array(col, dtype=np.float64)
        if np.all(np.isnan(arr)):
            continue
        sd = np.nanstd(arr)
        zs.append(np.zeros_like(arr) if sd == 0 else (arr - np.nanmean(arr)) / sd)
    if not zs:
        return [float("nan")] * len(log_records)
    return [_nanmean([z[i] for z in zs]) for i in range(len(log_records))]


def _snapshot(model) -> dict:
    return {k: v.detach().clone() for k, v in model.state_dict().items()}


def init_virality_bias(model, samples: Sequence) -> None:
    """Start the virality output at the mean training target."""
    targets = [s.virality_target for s in samples if s.virality_target is not None]
    head = getattr(model, "heads", {})
    if targets and "virality" in head and hasattr(head["virality"], "mlp"):
        with torch.no_grad():
            head["virality"].mlp.fc2.bias.fill_(float(np.mean(targets)))


def train(model, train_samples: Sequence, val_samples: Optional[Sequence], config: TrainConfig,
          trainer: Optional[Trainer] = None) -> TrainResult:
    """Epoch loop with per-epoch validation and best-checkpoint retention."""
    trainer = trainer or Trainer(model, config, train_samples)
    records, snapshots = [], []
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        bundles = trainer.run_epoch()
        rec = {
            "epoch": epoch,
            "train_losses": {
                t: _nanmean([getattr(b, t) for b in bundles]) for t in TASKS
            },
            "gradnorm_weights": (dict(zip(config.tasks, map(float, trainer.balancer.weights)))
                                 if config.strategy == "gradnorm" else None),
            "validation": None,
        }
        if val_samples:
            report = evaluate_samples(model, val_samples,
                                      {"split": "validation", "obs_fraction": config.obs_fraction,
                                       "seed": config.seed})
            rec["validation"] = report.to_dict()
        rec["wall_time"] = time.perf_counter() - t0
        log.info("epoch %d losses %s", epoch, rec["train_losses"])
        records.append(rec)
        snapshots.append(_snapshot(model))

    final_state = _snapshot(model)
    best_epoch = None
    best_state = final_state
    if records:
        scores = selection_scores(records, config.strategy)
        if not all(math.isnan(s) for s in scores):
            best_epoch = int(np.nanargmax(scores))
            best_state = snapshots[best_epoch]
    return TrainResult(model, final_state, best_state, best_epoch, records)
