"""
Graph transformer denoiser.

Node, edge and graph-level streams are updated jointly. Attention scores are
per-dimension products Q_i ⊙ K_j / √d modulated by the edge stream
(score · (E1 + 1) + E2); the edge stream is rebuilt from those scores and the
node stream from softmax-weighted values, both FiLM-modulated by the graph
stream. The graph stream pools node and edge states by their mean. Each
update is wrapped in a residual connection and layer normalization.

Batches are padded to the largest graph with a node mask.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch import nn

from aigdiff.exceptions import DisconnectedLossError, NonFiniteActivationError, ShapeMismatchError
from aigdiff.models.configs import ModelConfig
from aigdiff.models.dag import Dag
from aigdiff.services.noise_model import NoiseModel, local_timesteps

logger = logging.getLogger(__name__)

EMBED_SCALE = 100.0


def sinusoidal_embedding(x: np.ndarray, dim: int) -> np.ndarray:
    """[sin(x·s·f_i), cos(x·s·f_i)] for x in [0, 1]; x = 0 gives (0.., 1..)."""
    x = np.asarray(x, dtype=np.float64)
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half, dtype=np.float64) / max(half, 1))
    args = x[..., None] * EMBED_SCALE * freqs
    return np.concatenate([np.sin(args), np.cos(args)], axis=-1)


@dataclass(frozen=True)
class GraphFeatures:
    """Fx: n x d_x, Fe: n x n x d_e, y: d_y."""

    x: np.ndarray
    e: np.ndarray
    y: np.ndarray

    @property
    def n(self) -> int:
        return int(self.x.shape[0])


def extract_features(
    noisy: Dag,
    t: int,
    noise: NoiseModel,
    cond: Optional[np.ndarray],
    config: ModelConfig,
) -> GraphFeatures:
    """
    Fx = [node one-hot | l | emb(τ/T) | in/out degree / n | condition rows],
    Fe = edge one-hot, y = [emb(t/T) | edge-type proportions].

    Raises:
        ShapeMismatchError: If cond or the type alphabets disagree with the config
    """
    n = noisy.n
    if noisy.k_x != config.k_x or noisy.k_e != config.k_e:
        raise ShapeMismatchError(
            f"Graph alphabets ({noisy.k_x}, {noisy.k_e}) != config ({config.k_x}, {config.k_e})"
        )
    if cond is None:
        cond = np.zeros((n, config.cond_dim), dtype=np.float64)
    cond = np.asarray(cond, dtype=np.float64)
    if cond.shape != (n, config.cond_dim):
        raise ShapeMismatchError(f"cond must be ({n}, {config.cond_dim}), got {cond.shape}")

    levels = noisy.normalized_levels()
    tau = local_timesteps(t, levels, noise)
    adjacency = noisy.adjacency.astype(np.float64)
    scale = float(max(n, 1))
    in_degree = adjacency.sum(axis=0) / scale
    out_degree = adjacency.sum(axis=1) / scale

    x = np.concatenate(
        [
            noisy.node_types.astype(np.float64),
            levels[:, None],
            sinusoidal_embedding(tau / noise.T, config.time_dim),
            in_degree[:, None],
            out_degree[:, None],
            cond,
        ],
        axis=-1,
    )
    e = noisy.edge_types.astype(np.float64)

    pairs = max(n * (n - 1), 1)
    off_diag = ~np.eye(n, dtype=bool)
    proportions = np.bincount(noisy.edge_index[off_diag], minlength=config.k_e)[: config.k_e]
    y = np.concatenate(
        [sinusoidal_embedding(np.asarray(t / noise.T), config.time_dim), proportions / pairs]
    )
    return GraphFeatures(x=x, e=e, y=y)


def collate(
    features: Sequence[GraphFeatures], dtype: torch.dtype = torch.float32
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
    """Pad to (B, N, d_x), (B, N, N, d_e), (B, d_y) plus a (B, N) bool node mask."""
    batch = len(features)
    n_max = max(f.n for f in features)
    d_x = features[0].x.shape[1]
    d_e = features[0].e.shape[2]
    x = np.zeros((batch, n_max, d_x))
    e = np.zeros((batch, n_max, n_max, d_e))
    mask = np.zeros((batch, n_max), dtype=bool)
    for b, f in enumerate(features):
        x[b, : f.n] = f.x
        e[b, : f.n, : f.n] = f.e
        mask[b, : f.n] = True
    y = np.stack([f.y for f in features])
    return (
        torch.as_tensor(x, dtype=dtype),
        torch.as_tensor(e, dtype=dtype),
        torch.as_tensor(y, dtype=dtype),
        torch.as_tensor(mask),
    )


def _check_finite(name: str, *tensors: torch.Tensor) -> None:
    for tensor in tensors:
        if not torch.isfinite(tensor).all():
            logger.error(f"[Denoiser] Non-finite activation in {name}")
            raise NonFiniteActivationError(name)


class GraphTransformerLayer(nn.Module):
    """One joint node / edge / graph update."""

    def __init__(self, dx: int, de: int, dy: int, heads: int):
        super().__init__()
        self.heads = heads
        self.df = dx // heads

        self.q = nn.Linear(dx, dx)
        self.k = nn.Linear(dx, dx)
        self.v = nn.Linear(dx, dx)

        # Edge modulation of the attention scores
        self.e_mul = nn.Linear(de, dx)
        self.e_add = nn.Linear(de, dx)

        # Graph-level FiLM
        self.y_e_mul = nn.Linear(dy, dx)
        self.y_e_add = nn.Linear(dy, dx)
        self.y_x_mul = nn.Linear(dy, dx)
        self.y_x_add = nn.Linear(dy, dx)

        self.x_out = nn.Linear(dx, dx)
        self.e_out = nn.Linear(dx, de)

        self.y_y = nn.Linear(dy, dy)
        self.x_y = nn.Linear(dx, dy)
        self.e_y = nn.Linear(de, dy)
        self.y_out = nn.Linear(dy, dy)

        self.norm_x = nn.LayerNorm(dx)
        self.norm_e = nn.LayerNorm(de)
        self.norm_y = nn.LayerNorm(dy)

    def forward(
        self,
        x: torch.Tensor,
        e: torch.Tensor,
        y: torch.Tensor,
        mask: torch.Tensor,
        name: str = "layer",
    ) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        x_mask = mask.unsqueeze(-1).to(x.dtype)  # (B, N, 1)
        e_mask = x_mask.unsqueeze(2) * x_mask.unsqueeze(1)  # (B, N, N, 1)

        q = self.q(x) * x_mask
        k = self.k(x) * x_mask
        v = self.v(x) * x_mask

        # (B, N, N, dx): query i against key j, per dimension
        scores = q.unsqueeze(2) * k.unsqueeze(1) / math.sqrt(self.df)
        e1 = self.e_mul(e) * e_mask
        e2 = self.e_add(e) * e_mask
        scores = scores * (e1 + 1) + e2

        film_mul = self.y_e_mul(y)[:, None, None, :]
        film_add = self.y_e_add(y)[:, None, None, :]
        new_e = film_add + (film_mul + 1) * scores
        new_e = self.e_out(new_e) * e_mask

        logits = scores.masked_fill(~mask[:, None, :, None], float("-inf"))
        attention = torch.softmax(logits, dim=2)
        weighted = (attention * v.unsqueeze(1)).sum(dim=2)
        new_x = self.y_x_add(y)[:, None, :] + (self.y_x_mul(y)[:, None, :] + 1) * weighted
        new_x = self.x_out(new_x) * x_mask

        counts = mask.sum(dim=1, keepdim=True).clamp(min=1).to(x.dtype)  # (B, 1)
        pooled_x = (x * x_mask).sum(dim=1) / counts
        pooled_e = (e * e_mask).sum(dim=(1, 2)) / (counts * counts)
        new_y = self.y_out(self.y_y(y) + self.x_y(pooled_x) + self.e_y(pooled_e))

        x = self.norm_x(x + new_x) * x_mask
        e = self.norm_e(e + new_e) * e_mask
        y = self.norm_y(y + new_y)

        _check_finite(name, x, e, y)
        return x, e, y


class GraphTransformer(nn.Module):
    """Denoiser network producing node- and edge-type distributions."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.embed_x = nn.Sequential(nn.Linear(config.d_x, config.hidden_x), nn.ReLU())
        self.embed_e = nn.Sequential(nn.Linear(config.d_e, config.hidden_e), nn.ReLU())
        self.embed_y = nn.Sequential(nn.Linear(config.d_y, config.hidden_y), nn.ReLU())
        self.layers = nn.ModuleList(
            GraphTransformerLayer(config.hidden_x, config.hidden_e, config.hidden_y, config.heads)
            for _ in range(config.layers)
        )
        self.head_x = nn.Linear(config.hidden_x, config.k_x)
        self.head_e = nn.Linear(config.hidden_e, config.k_e)

    @property
    def dtype(self) -> torch.dtype:
        return self.head_x.weight.dtype

    def forward(
        self,
        x: torch.Tensor,
        e: torch.Tensor,
        y: torch.Tensor,
        mask: torch.Tensor,
    ) -> Tuple[torch.Tensor, torch.Tensor]:
        """Return (pX: B x N x k_x, pE: B x N x N x k_e), softmax over the last axis."""
        x = self.embed_x(x)
        e = self.embed_e(e)
        y = self.embed_y(y)
        _check_finite("embedding", x, e, y)
        for index, layer in enumerate(self.layers):
            x, e, y = layer(x, e, y, mask, name=f"layer{index}")
        p_x = torch.softmax(self.head_x(x), dim=-1)
        p_e = torch.softmax(self.head_e(e), dim=-1)
        _check_finite("heads", p_x, p_e)
        return p_x, p_e

    def forward_graphs(
        self,
        graphs: Sequence[Dag],
        conds: Sequence[Optional[np.ndarray]],
        ts: Sequence[int],
        noise: NoiseModel,
    ) -> List[Tuple[torch.Tensor, torch.Tensor]]:
        """Batched forward over unpadded graphs; returns per-graph (pX, pE)."""
        features = [
            extract_features(g, t, noise, c, self.config) for g, c, t in zip(graphs, conds, ts)
        ]
        x, e, y, mask = collate(features, dtype=self.dtype)
        p_x, p_e = self(x, e, y, mask)
        return [(p_x[b, : f.n], p_e[b, : f.n, : f.n]) for b, f in enumerate(features)]

    def predict(
        self,
        noisy: Dag,
        cond: Optional[np.ndarray],
        t: int,
        noise: NoiseModel,
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Sampler interface: float64 numpy distributions, no autograd."""
        with torch.no_grad():
            ((p_x, p_e),) = self.forward_graphs([noisy], [cond], [t], noise)
        return p_x.double().numpy(), p_e.double().numpy()


def gradients(loss: torch.Tensor, params: Sequence[torch.Tensor]) -> List[torch.Tensor]:
    """
    Reverse-mode gradients of a scalar loss.

    Parameters the loss does not depend on get zero gradients, so a loss that
    was recorded but is constant in the parameters (e.g. `0 * p.sum()`) yields
    all-zero gradients. A bare tensor with no autograd history is refused.

    Raises:
        DisconnectedLossError: If the loss carries no autograd history
    """
    if loss.dim() != 0:
        raise ShapeMismatchError(f"loss must be a scalar, got shape {tuple(loss.shape)}")
    if not loss.requires_grad:
        raise DisconnectedLossError("loss was not produced by a recorded forward pass")
    params = list(params)
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    return [torch.zeros_like(p) if g is None else g for p, g in zip(params, grads)]
