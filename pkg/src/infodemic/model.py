"""Task heads and the full multi-task model."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import torch
import torch.nn.functional as F
from torch import Tensor, nn
from torch.func import functional_call

from .encoder import DTYPE, Backbone, BackboneOutput, SAGELayer

TASKS = ("rumor", "virality", "vulnerability")


@dataclass
class ModelConfig:
    dim: int = 64
    n_communities: int = 50
    layers: int = 1
    dropout: float = 0.2
    max_post_tokens: int = 50
    direction: str = "undirected"
    pool_regularizers: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


class MLP(nn.Module):
    """``in -> hidden (ReLU, dropout) -> out``."""

    def __init__(self, in_dim: int, hidden: int, out_dim: int, dropout: float = 0.0):
        super().__init__()
        self.fc1 = nn.Linear(in_dim, hidden, dtype=DTYPE)
        self.fc2 = nn.Linear(hidden, out_dim, dtype=DTYPE)
        self.dropout = dropout

    def forward(self, x: Tensor) -> Tensor:
        h = F.dropout(F.relu(self.fc1(x)), self.dropout, self.training)
        return self.fc2(h)


def readout_sum(x_c: Tensor) -> Tensor:
    return x_c.sum(dim=0)


def cvp_refine(x_u2: Tensor, assignment: Tensor, x_c: Tensor, adj: Tensor, layer: SAGELayer,
               flow: Optional[Tensor] = None) -> Tensor:
    """Append each user's soft community mixture ``C X_c`` and re-aggregate."""
    x_uc = assignment @ x_c
    return layer(torch.cat([x_u2, x_uc], dim=1), adj, flow)


class GraphHead(nn.Module):
    def __init__(self, dim: int, out_dim: int, dropout: float):
        super().__init__()
        self.mlp = MLP(dim, dim, out_dim, dropout)

    def forward(self, inter: BackboneOutput, sample) -> Tensor:
        return self.mlp(readout_sum(inter.pooled.embeddings))


class VulnerabilityHead(nn.Module):
    def __init__(self, dim: int, dropout: float, mode: str = "undirected"):
        super().__init__()
        self.cvp = SAGELayer(2 * dim, dim, mode=mode)
        self.mlp = MLP(dim, dim, 1, dropout)
        self.dropout = dropout

    def refine(self, inter: BackboneOutput, sample) -> Tensor:
        return cvp_refine(inter.x_user2, inter.pooled.assignment, inter.pooled.embeddings,
                          sample.adj, self.cvp, sample.flow)

    def forward(self, inter: BackboneOutput, sample) -> Tensor:
        x4 = F.dropout(self.refine(inter, sample), self.dropout, self.training)
        return torch.sigmoid(self.mlp(x4)).squeeze(-1)


def predict_graph_heads(g: Tensor, rumor: MLP, virality: MLP) -> tuple[Tensor, Tensor]:
    return rumor(g), virality(g).squeeze(-1)


def predict_vulnerability(x_u4: Tensor, mlp: MLP) -> Tensor:
    return torch.sigmoid(mlp(x_u4)).squeeze(-1)


@dataclass
class Predictions:
    rumor_logits: Tensor  # [non_rumor, rumor]
    virality: Tensor  # scalar, log2 unique users
    vulnerability: Tensor  # |U|

    def rumor_probability(self) -> float:
        return torch.softmax(self.rumor_logits.detach(), dim=-1)[1].item()


def rumor_loss(logits: Tensor, sample) -> Tensor:
    target = torch.tensor([sample.rumor_target])
    return F.cross_entropy(logits.unsqueeze(0), target)


def virality_loss(pred: Tensor, sample) -> Tensor:
    return (pred - sample.virality_target) ** 2


def vulnerability_loss(scores: Tensor, sample) -> tuple[Tensor, int]:
    """Mean squared error over labeled users only; 0 (no gradient) if none."""
    mask = sample.vuln_mask
    n = int(mask.sum()) if mask is not None else 0
    if n == 0:
        return scores.new_zeros(()), 0
    return ((scores[mask] - sample.vuln_target[mask]) ** 2).mean(), n


class MultiTaskModel(nn.Module):
    """Backbone plus the rumor, virality and vulnerability heads.

    The trainer only relies on ``encode``, ``task_loss``, ``heads`` and
    ``shared_layer_weight``, so toy models with the same surface can be
    trained with the same strategies.
    """

    def __init__(self, config: Optional[ModelConfig] = None):
        super().__init__()
        self.config = config or ModelConfig()
        c = self.config
        if c.layers != 1:
            raise ValueError("only single-layer aggregation is implemented")
        self.backbone = Backbone(c.dim, c.n_communities, c.dropout, c.direction, c.pool_regularizers)
        self.heads = nn.ModuleDict({
            "rumor": GraphHead(c.dim, 2, c.dropout),
            "virality": GraphHead(c.dim, 1, c.dropout),
            "vulnerability": VulnerabilityHead(c.dim, c.dropout, c.direction),
        })

    def encode(self, sample) -> BackboneOutput:
        return self.backbone(sample)

    def head_output(self, task: str, inter: BackboneOutput, sample, params: Optional[dict] = None) -> Tensor:
        head = self.heads[task]
        out = head(inter, sample) if params is None else functional_call(head, params, (inter, sample))
        return out.squeeze(-1) if task == "virality" else out

    def task_loss(self, task: str, inter: BackboneOutput, sample, params: Optional[dict] = None) -> tuple[Tensor, int]:
        out = self.head_output(task, inter, sample, params)
        if task == "rumor":
            return rumor_loss(out, sample), 1
        if task == "virality":
            return virality_loss(out, sample), 1
        return vulnerability_loss(out, sample)

    def shared_layer_weight(self) -> Tensor:
        return self.backbone.shared_layer_weight()

    def forward(self, sample) -> tuple[Predictions, BackboneOutput]:
        inter = self.encode(sample)
        preds = Predictions(
            rumor_logits=self.head_output("rumor", inter, sample),
            virality=self.head_output("virality", inter, sample),
            vulnerability=self.head_output("vulnerability", inter, sample),
        )
        return preds, inter

    def user_representations(self, sample) -> Tensor:
        """Final (CVP-refined) user representations, dropout disabled."""
        with torch.no_grad():
            was = self.training
            self.eval()
            try:
                return self.heads["vulnerability"].refine(self.encode(sample), sample)
            finally:
                self.train(was)


def init_model(config: Optional[ModelConfig] = None, seed: int = 0) -> MultiTaskModel:
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return MultiTaskModel(config)


def forward(sample, model: MultiTaskModel) -> tuple[Predictions, BackboneOutput]:
    return model(sample)
