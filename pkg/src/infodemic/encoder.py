"""Shared backbone: time-aware post embedding, user-post cross attention,
neighbourhood aggregation and soft community pooling."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn.functional as F
from torch import Tensor, nn

DTYPE = torch.float64
DIRECTION_MODES = ("undirected", "top_down", "bottom_up", "bidirectional")


def neighbor_matrix(adj: Tensor, flow: Optional[Tensor], mode: str) -> Tensor:
    """Row i of the result marks the nodes node i averages over."""
    if mode == "undirected":
        return adj
    if flow is None:
        raise ValueError(f"direction mode {mode!r} needs the directed flow matrix")
    if mode == "top_down":
        return flow.T  # receive from the user replied to
    if mode == "bottom_up":
        return flow
    raise ValueError(f"unknown direction mode {mode!r}")


def neighbor_mean(x: Tensor, m: Tensor) -> Tensor:
    deg = m.sum(dim=1, keepdim=True).clamp(min=1.0)
    return (m @ x) / deg


class SAGELayer(nn.Module):
    """One mean-aggregator GraphSAGE layer: ``act(W [x_i, mean_{j in N(i)} x_j] + b)``.

    Isolated nodes get a zero neighbour mean.  ``bidirectional`` runs a
    top-down and a bottom-up parameter set, concatenates, and projects back.
    """

    def __init__(self, in_dim: int, out_dim: int, mode: str = "undirected", activation: bool = True):
        super().__init__()
        if mode not in DIRECTION_MODES:
            raise ValueError(f"unknown direction mode {mode!r}")
        self.mode = mode
        self.activation = activation
        if mode == "bidirectional":
            self.lin_td = nn.Linear(2 * in_dim, out_dim, dtype=DTYPE)
            self.lin_bu = nn.Linear(2 * in_dim, out_dim, dtype=DTYPE)
            self.proj = nn.Linear(2 * out_dim, out_dim, dtype=DTYPE)
        else:
            self.lin = nn.Linear(2 * in_dim, out_dim, dtype=DTYPE)

    def _act(self, h: Tensor) -> Tensor:
        return F.relu(h) if self.activation else h

    def forward(self, x: Tensor, adj: Tensor, flow: Optional[Tensor] = None) -> Tensor:
        if self.mode != "bidirectional":
            m = neighbor_matrix(adj, flow, self.mode)
            return self._act(self.lin(torch.cat([x, neighbor_mean(x, m)], dim=1)))
        td = self._act(self.lin_td(torch.cat([x, neighbor_mean(x, neighbor_matrix(adj, flow, "top_down"))], 1)))
        bu = self._act(self.lin_bu(torch.cat([x, neighbor_mean(x, neighbor_matrix(adj, flow, "bottom_up"))], 1)))
        return self._act(self.proj(torch.cat([td, bu], dim=1)))

    def output_weight(self) -> Tensor:
        return self.proj.weight if self.mode == "bidirectional" else self.lin.weight


class CrossAttention(nn.Module):
    """Users query posts: ``softmax(X_u W_q (X_p W_k)^T / sqrt(d)) X_p W_v``."""

    def __init__(self, dim: int):
        super().__init__()
        self.dim = dim
        self.w_q = nn.Parameter(torch.empty(dim, dim, dtype=DTYPE))
        self.w_k = nn.Parameter(torch.empty(2 * dim, dim, dtype=DTYPE))
        self.w_v = nn.Parameter(torch.empty(2 * dim, dim, dtype=DTYPE))
        for w in (self.w_q, self.w_k, self.w_v):
            nn.init.xavier_uniform_(w)

    def forward(self, x_user: Tensor, x_post: Tensor) -> tuple[Tensor, Tensor]:
        q = x_user @ self.w_q
        k = x_post @ self.w_k
        v = x_post @ self.w_v
        attn = torch.softmax(q @ k.T / math.sqrt(self.dim), dim=1)
        return attn @ v, attn


def cross_attention(x_user: Tensor, x_post: Tensor, w_q: Tensor, w_k: Tensor, w_v: Tensor) -> Tensor:
    d = w_q.shape[1]
    scores = (x_user @ w_q) @ (x_post @ w_k).T / math.sqrt(d)
    return torch.softmax(scores, dim=1) @ (x_post @ w_v)


def embed_posts(content: Tensor, times: Tensor, time_proj: nn.Linear) -> Tensor:
    """Rows ``[content_i, time_proj(tau_i)]``; ``times`` are already window-normalised."""
    return torch.cat([content, time_proj(times.reshape(-1, 1))], dim=1)


@dataclass
class PooledGraph:
    assignment: Tensor  # |U| x n_communities, row-stochastic
    embeddings: Tensor  # n_communities x d
    adjacency: Tensor  # n_communities x n_communities
    logits: Tensor


def diffpool(x: Tensor, adj: Tensor, assign_layer: SAGELayer, flow: Optional[Tensor] = None) -> PooledGraph:
    logits = assign_layer(x, adj, flow)
    c = torch.softmax(logits, dim=1)
    return PooledGraph(c, c.T @ x, c.T @ adj @ c, logits)


def pooling_regularizers(pooled: PooledGraph, adj: Tensor) -> tuple[Tensor, Tensor]:
    """Link-prediction and assignment-entropy auxiliaries of soft pooling."""
    c = pooled.assignment
    link = torch.linalg.norm(adj - c @ c.T) / max(adj.numel(), 1)
    ent = (-(c * torch.log(c.clamp(min=1e-15))).sum(dim=1)).mean()
    return link, ent


@dataclass
class BackboneOutput:
    x_post: Tensor
    x_user1: Tensor
    x_user2: Tensor
    attention: Tensor
    pooled: PooledGraph
    aux_loss: Optional[Tensor] = None


class Backbone(nn.Module):
    def __init__(self, dim: int = 64, n_communities: int = 50, dropout: float = 0.2,
                 mode: str = "undirected", pool_regularizers: bool = False):
        super().__init__()
        self.dim = dim
        self.dropout = dropout
        self.pool_regularizers = pool_regularizers
        self.time_proj = nn.Linear(1, dim, dtype=DTYPE)
        self.attention = CrossAttention(dim)
        self.sage = SAGELayer(dim, dim, mode=mode)
        self.assign = SAGELayer(dim, n_communities, mode=mode, activation=False)

    def forward(self, sample) -> BackboneOutput:
        x_post = embed_posts(sample.post_content, sample.post_time, self.time_proj)
        x1, attn = self.attention(sample.user_x0, x_post)
        x1 = F.dropout(x1, self.dropout, self.training)
        x2 = self.sage(x1, sample.adj, sample.flow)
        x2 = F.dropout(x2, self.dropout, self.training)
        pooled = diffpool(x2, sample.adj, self.assign, sample.flow)
        aux = None
        if self.pool_regularizers:
            link, ent = pooling_regularizers(pooled, sample.adj)
            aux = link + ent
        return BackboneOutput(x_post, x1, x2, attn, pooled, aux)

    def shared_layer_weight(self) -> Tensor:
        """Last aggregation weight on every task's path (used for gradient balancing)."""
        return self.sage.output_weight()
