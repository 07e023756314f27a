"""Attribute-relationship graph and one round of normalized message passing.

Nodes are dataset attributes (numeric and text). Per tuple, each node gets a
feature vector: a text attribute contributes its embedding, a numeric
attribute the vector (value, 0, ..., 0). One symmetric-normalized
convolution H' = ReLU(D^-1/2 A D^-1/2 H W + b) mixes them; only the text
rows are emitted, since the utility keeps numeric attributes in raw form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from udisc.embed import EmbedderConfig
from udisc.errors import DimensionMismatch
from udisc.ranknorm import NormalizedDataset
from udisc.types import ColumnKind

EDGE_THRESHOLD = 0.1


@dataclass
class AttributeGraph:
    nodes: list[str]
    adjacency: np.ndarray  # symmetric, unit self-loops, weights in [0,1]
    degree: np.ndarray
    degenerate: tuple[str, ...] = ()  # zero-variance columns, given no off-diagonal weight

    def __post_init__(self):
        m = len(self.nodes)
        if self.adjacency.shape != (m, m):
            raise DimensionMismatch(f"adjacency must be {m}x{m}")
        if not np.allclose(self.adjacency, self.adjacency.T):
            raise ValueError("adjacency must be symmetric")
        if not np.allclose(np.diag(self.adjacency), 1.0):
            raise ValueError("adjacency must have unit self-loops")
        self.degree = np.asarray(self.degree, dtype=np.float64)
        if np.any(self.degree <= 0):
            raise ValueError("degrees must be positive")


@dataclass
class GnnParams:
    weight: np.ndarray  # (dim, dim)
    bias: np.ndarray  # (dim,)
    seed: int

    def __post_init__(self):
        if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
            raise ValueError("GnnParams must be finite")


@dataclass
class EmbeddingMatrix:
    """Per text attribute, a (row_count, dim) block of embeddings."""

    by_attr: dict[str, np.ndarray]
    dim: int

    def __post_init__(self):
        for name, mat in self.by_attr.items():
            if mat.ndim != 2 or mat.shape[1] != self.dim:
                raise DimensionMismatch(f"embeddings for {name!r} must be (rows, {self.dim})")
            if not np.all(np.isfinite(mat)):
                raise ValueError(f"embeddings for {name!r} must be finite")

    @property
    def attr_order(self) -> list[str]:
        return list(self.by_attr.keys())

    def concat(self) -> np.ndarray:
        """(row_count, n_text * dim) attribute-major concatenation."""
        if not self.by_attr:
            return np.zeros((0, 0))
        return np.hstack(list(self.by_attr.values()))


@dataclass
class NodeFeatures:
    """Per-tuple node feature tensor: (row_count, n_nodes, dim)."""

    tensor: np.ndarray
    nodes: list[str]
    text_attrs: list[str]

    @property
    def text_rows(self) -> list[int]:
        return [self.nodes.index(a) for a in self.text_attrs]


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    sx, sy = x.std(), y.std()
    if sx == 0.0 or sy == 0.0:
        return 0.0
    return float(((x - x.mean()) * (y - y.mean())).mean() / (sx * sy))


def build_graph(nds: NormalizedDataset, embeddings: dict[str, np.ndarray]) -> AttributeGraph:
    """Edge weights from inter-attribute relationship strength.

    numeric-numeric: |Pearson correlation| of the normalized columns;
    text-text: cosine similarity of column-mean embeddings, clipped at 0;
    numeric-text: |Pearson correlation| of the numeric column against the
    text column's per-row embedding norm, clipped at 0.
    Weights below 0.1 are dropped; self-loops are 1. Zero-variance columns
    are flagged degenerate and get no off-diagonal weight (never NaN).
    """
    ds = nds.dataset
    nodes = list(ds.column_names)
    m = len(nodes)
    kinds = {c.name: c.kind for c in ds.columns}

    col_vec: dict[str, np.ndarray] = {}  # numeric values or per-row embedding norms
    mean_emb: dict[str, np.ndarray] = {}
    degenerate = []
    for c in ds.columns:
        if c.kind is ColumnKind.NUMERIC:
            col_vec[c.name] = c.numeric_values
            if c.numeric_values.std() == 0.0:
                degenerate.append(c.name)
        else:
            emb = embeddings[c.name]
            col_vec[c.name] = np.linalg.norm(emb, axis=1)
            mean_emb[c.name] = emb.mean(axis=0)
            if np.linalg.norm(mean_emb[c.name]) == 0.0:
                degenerate.append(c.name)

    adj = np.eye(m)
    for i in range(m):
        for j in range(i + 1, m):
            a, b = nodes[i], nodes[j]
            if a in degenerate or b in degenerate:
                w = 0.0
            elif kinds[a] is ColumnKind.TEXT and kinds[b] is ColumnKind.TEXT:
                na = np.linalg.norm(mean_emb[a])
                nb = np.linalg.norm(mean_emb[b])
                w = max(0.0, float(mean_emb[a] @ mean_emb[b] / (na * nb)))
            else:
                # numeric-numeric, or numeric against a text column's norm profile
                w = abs(_pearson(col_vec[a], col_vec[b]))
            if w < EDGE_THRESHOLD:
                w = 0.0
            adj[i, j] = adj[j, i] = w

    return AttributeGraph(nodes=nodes, adjacency=adj, degree=adj.sum(axis=1),
                          degenerate=tuple(degenerate))


def normalized_adjacency(graph: AttributeGraph) -> np.ndarray:
    d_inv_sqrt = 1.0 / np.sqrt(graph.degree)
    return d_inv_sqrt[:, None] * graph.adjacency * d_inv_sqrt[None, :]


def build_node_features(nds: NormalizedDataset, embeddings: dict[str, np.ndarray], dim: int) -> NodeFeatures:
    """Assemble the (row_count, n_nodes, dim) feature tensor for message passing."""
    ds = nds.dataset
    n = ds.row_count
    tensor = np.zeros((n, len(ds.columns), dim))
    text_attrs = []
    for j, col in enumerate(ds.columns):
        if col.kind is ColumnKind.NUMERIC:
            tensor[:, j, 0] = col.numeric_values
        else:
            emb = embeddings[col.name]
            if emb.shape != (n, dim):
                raise DimensionMismatch(f"embeddings for {col.name!r} have shape {emb.shape}")
            tensor[:, j, :] = emb
            text_attrs.append(col.name)
    return NodeFeatures(tensor=tensor, nodes=list(ds.column_names), text_attrs=text_attrs)


def message_pass(graph: AttributeGraph, features: NodeFeatures, params: GnnParams) -> EmbeddingMatrix:
    """One tuple-wise convolution; returns post-pass embeddings for text attributes."""
    if features.nodes != graph.nodes:
        raise DimensionMismatch("feature nodes do not match graph nodes")
    dim = features.tensor.shape[2]
    if params.weight.shape != (dim, dim) or params.bias.shape != (dim,):
        raise DimensionMismatch(f"params must be ({dim},{dim}) and ({dim},)")
    s = normalized_adjacency(graph)
    mixed = np.einsum("ab,nbd->nad", s, features.tensor)
    out = np.maximum(mixed @ params.weight + params.bias, 0.0)
    by_attr = {a: np.ascontiguousarray(out[:, r, :])
               for a, r in zip(features.text_attrs, features.text_rows)}
    return EmbeddingMatrix(by_attr=by_attr, dim=dim)


def init_params(config: EmbedderConfig, seed: int) -> GnnParams:
    """Glorot-uniform weight in (-sqrt(6/(dim+dim)), +), zero bias; seeded."""
    rng = np.random.default_rng(seed)
    bound = math.sqrt(6.0 / (config.dim + config.dim))
    weight = rng.uniform(-bound, bound, size=(config.dim, config.dim))
    return GnnParams(weight=weight, bias=np.zeros(config.dim), seed=seed)
