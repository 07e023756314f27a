"""Coefficient estimation and the two-stage (synthetic -> real) utility fit.

Numeric coefficients come from least squares on the normalized columns.
Text coefficients are trained jointly with the message-passing parameters by
full-batch gradient descent with backtracking, which keeps the whole run
deterministic for a given seed. The synthetic model concatenates both fits;
the real model is a ridge refit of either the user labels or the synthetic
scores (self-distillation) on the combined feature vector.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from udisc.embed import EmbedderConfig, embed_column, embedding_rows
from udisc.errors import (
    DivergedLoss,
    KindMismatch,
    NoTextAttributes,
    SchemaMismatch,
    SingularSystem,
)
from udisc.graph import (
    AttributeGraph,
    EmbeddingMatrix,
    GnnParams,
    build_graph,
    build_node_features,
    init_params,
    message_pass,
    normalized_adjacency,
)
from udisc.ingest import LabeledDataset
from udisc.ranknorm import NormalizedDataset, build_ranking, normalize
from udisc.types import (
    AttributeColumn,
    AttributeRanking,
    ColumnKind,
    Dataset,
    DiscoveryResult,
    ScoredTuple,
    Stage,
    UtilityModel,
    select_top_k,
)

MODEL_VERSION = "ud-model/1"
MAX_HALVINGS = 10


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 500
    ridge_lambda: float = 1e-3
    seed: int = 42
    k: int = 10

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.ridge_lambda < 0:
            raise ValueError("ridge_lambda must be non-negative")
        if self.epochs < 1 or self.k < 1:
            raise ValueError("epochs and k must be positive")


@dataclass
class TextFit:
    text_coeffs: dict[tuple[str, int], float]
    gnn_params: GnnParams
    sse: float
    loss_history: list[float]


@dataclass
class TrainedPipeline:
    synthetic: UtilityModel
    real: UtilityModel
    gnn_params: GnnParams
    scale_params: dict[str, tuple[float, float]]
    ranking: AttributeRanking
    sse_num: float
    sse_text: float
    graph: AttributeGraph
    embed_config: EmbedderConfig
    train_config: TrainConfig
    label_column: str | None = None

    def __post_init__(self):
        if self.sse_num < 0 or self.sse_text < 0:
            raise ValueError("SSE values must be non-negative")
        if self.real.provenance is not self.synthetic:
            raise ValueError("real model must be refined from this pipeline's synthetic model")


def synthesize_labels(nds: NormalizedDataset, embeddings: dict[str, np.ndarray]) -> np.ndarray:
    """Rank-weighted labels: sum of w_a * value for numeric attributes plus
    w_a * mean(pre-pass embedding) for text attributes.

    Used only when the user supplied no label column.
    """
    ds = nds.dataset
    labels = np.zeros(ds.row_count)
    for col in ds.columns:
        w = nds.ranking.weights[col.name]
        if col.kind is ColumnKind.NUMERIC:
            labels += w * col.numeric_values
        else:
            labels += w * embeddings[col.name].mean(axis=1)
    return labels


def _ridge_solve(design: np.ndarray, targets: np.ndarray, ridge_lambda: float) -> np.ndarray:
    """Normal equations with the ridge term on the non-intercept block.

    The intercept column is assumed to be the last column of the design.
    """
    p = design.shape[1]
    if ridge_lambda == 0.0 and np.linalg.matrix_rank(design) < p:
        raise SingularSystem("design matrix is rank-deficient and ridge_lambda is 0")
    gram = design.T @ design
    gram[np.arange(p - 1), np.arange(p - 1)] += ridge_lambda
    try:
        return np.linalg.solve(gram, design.T @ targets)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc


def fit_numeric(
    nds: NormalizedDataset, labels: np.ndarray, ridge_lambda: float = 0.0
) -> tuple[dict[str, float], float, float]:
    """Least squares with intercept over the numeric columns.

    Returns (coefficients by attribute, intercept, residual SSE).
    """
    labels = np.asarray(labels, dtype=np.float64)
    names = [c.name for c in nds.dataset.numeric_columns()]
    x = nds.dataset.numeric_matrix()
    design = np.hstack([x, np.ones((len(labels), 1))])
    beta = _ridge_solve(design, labels, ridge_lambda)
    resid = labels - design @ beta
    return dict(zip(names, beta[:-1].tolist())), float(beta[-1]), float(resid @ resid)


def _text_loss_grads(
    p: np.ndarray,  # (n, m, dim) pre-mixed features S @ H
    text_rows: list[int],
    y: np.ndarray,
    w: np.ndarray,
    b: np.ndarray,
    beta: np.ndarray,  # (n_text, dim)
):
    z = p @ w + b
    g_all = np.maximum(z, 0.0)
    gt = g_all[:, text_rows, :]
    yhat = np.einsum("nkd,kd->n", gt, beta)
    resid = y - yhat
    loss = float(resid @ resid)
    gy = -2.0 * resid
    # only text rows carry beta, so only they feed back into W and b
    mt = gy[:, None, None] * beta[None, :, :] * (z[:, text_rows, :] > 0.0)
    grad_w = np.einsum("nkd,nke->de", p[:, text_rows, :], mt)
    grad_b = mt.sum(axis=(0, 1))
    grad_beta = np.einsum("n,nkd->kd", gy, gt)
    return loss, grad_w, grad_b, grad_beta


def fit_text(
    nds: NormalizedDataset,
    graph: AttributeGraph,
    embeddings: dict[str, np.ndarray],
    labels: np.ndarray,
    config: TrainConfig,
    embed_config: EmbedderConfig = EmbedderConfig(),
) -> TextFit:
    """Jointly fit per-dimension text coefficients and the message-passing
    parameters by full-batch gradient descent on the text-side squared error.

    Each epoch takes a step at the configured rate, halving it (at most 10
    times) until the loss does not increase; if no halving helps, the epoch
    is a no-op, so the recorded loss sequence is non-increasing.
    """
    text_attrs = [c.name for c in nds.dataset.text_columns()]
    if not text_attrs:
        raise NoTextAttributes("dataset has no text attributes")
    y = np.asarray(labels, dtype=np.float64)

    feats = build_node_features(nds, embeddings, embed_config.dim)
    s = normalized_adjacency(graph)
    p = np.einsum("ab,nbd->nad", s, feats.tensor)
    text_rows = feats.text_rows

    params = init_params(embed_config, config.seed)
    w = params.weight.copy()
    b = params.bias.copy()
    beta = np.zeros((len(text_attrs), embed_config.dim))

    loss, gw, gb, gbeta = _text_loss_grads(p, text_rows, y, w, b, beta)
    history = [loss]
    for _ in range(config.epochs):
        if not np.isfinite(loss) or not (
            np.all(np.isfinite(gw)) and np.all(np.isfinite(gb)) and np.all(np.isfinite(gbeta))
        ):
            raise DivergedLoss("loss or gradient became non-finite")
        step = config.learning_rate
        for _ in range(MAX_HALVINGS + 1):
            w2, b2, beta2 = w - step * gw, b - step * gb, beta - step * gbeta
            trial = _text_loss_grads(p, text_rows, y, w2, b2, beta2)
            if np.isfinite(trial[0]) and trial[0] <= loss:
                w, b, beta = w2, b2, beta2
                loss, gw, gb, gbeta = trial
                break
            step *= 0.5
        # if every halving still increased the loss, the epoch is a no-op
        history.append(loss)

    text_coeffs = {
        (attr, d): float(beta[k, d]) for k, attr in enumerate(text_attrs) for d in range(embed_config.dim)
    }
    return TextFit(
        text_coeffs=text_coeffs,
        gnn_params=GnnParams(weight=w, bias=b, seed=config.seed),
        sse=loss,
        loss_history=history,
    )


def build_synthetic(
    numeric_fit: tuple[dict[str, float], float, float],
    text_fit: TextFit | None,
) -> UtilityModel:
    """Concatenate the numeric and text fits into the first-stage model."""
    coeffs, intercept, sse_num = numeric_fit
    text_coeffs = text_fit.text_coeffs if text_fit is not None else {}
    sse_text = text_fit.sse if text_fit is not None else 0.0
    return UtilityModel(
        stage=Stage.SYNTHETIC,
        numeric_coeffs=dict(coeffs),
        text_coeffs=dict(text_coeffs),
        intercept=intercept,
        training_sse=sse_num + sse_text,
    )


def _feature_matrix(nds: NormalizedDataset, post: EmbeddingMatrix, model: UtilityModel) -> np.ndarray:
    """Stack [x_num || concatenated post-pass text embeddings] in model order."""
    ds = nds.dataset
    blocks = []
    if model.numeric_coeffs:
        cols = {c.name: c.numeric_values for c in ds.numeric_columns()}
        blocks.append(np.column_stack([cols[a] for a in model.numeric_attr_order]))
    for a in dict.fromkeys(a for a, _ in model.text_coeffs):
        blocks.append(post.by_attr[a])
    if not blocks:
        return np.zeros((ds.row_count, 0))
    return np.hstack(blocks)


def model_scores(model: UtilityModel, nds: NormalizedDataset, post: EmbeddingMatrix) -> np.ndarray:
    """Vectorized utility of every tuple under the given model."""
    phi = _feature_matrix(nds, post, model)
    beta = np.array(
        [model.numeric_coeffs[a] for a in model.numeric_attr_order]
        + [model.text_coeffs[key] for key in model.text_key_order]
    )
    if phi.shape[1] != len(beta):
        raise KindMismatch("feature matrix does not match model coefficients")
    return phi @ beta + model.intercept


def refine_real(
    nds: NormalizedDataset,
    post: EmbeddingMatrix,
    synthetic: UtilityModel,
    labels: np.ndarray | None,
    config: TrainConfig,
) -> UtilityModel:
    """Second-stage ridge refit producing the real utility coefficients.

    Targets are the user labels when available, otherwise the synthetic
    model's own scores.
    """
    targets = np.asarray(labels, dtype=np.float64) if labels is not None else model_scores(synthetic, nds, post)
    phi = _feature_matrix(nds, post, synthetic)
    design = np.hstack([phi, np.ones((len(targets), 1))])
    gamma = _ridge_solve(design, targets, config.ridge_lambda)
    resid = targets - design @ gamma
    n_num = len(synthetic.numeric_coeffs)
    return UtilityModel(
        stage=Stage.REAL,
        numeric_coeffs=dict(zip(synthetic.numeric_attr_order, gamma[:n_num].tolist())),
        text_coeffs=dict(zip(synthetic.text_key_order, gamma[n_num:-1].tolist())),
        intercept=float(gamma[-1]),
        training_sse=float(resid @ resid),
        provenance=synthetic,
    )


@dataclass
class TrainingRun:
    """A trained pipeline plus the in-memory artifacts needed to score it."""

    pipeline: TrainedPipeline
    nds: NormalizedDataset
    post_embeddings: EmbeddingMatrix
    labels_used: np.ndarray
    pre_embeddings: dict[str, np.ndarray] = field(default_factory=dict)
    loss_history: list[float] = field(default_factory=list)


def run_training(
    lds: LabeledDataset,
    order: list[str],
    config: TrainConfig = TrainConfig(),
    embed_config: EmbedderConfig = EmbedderConfig(),
    label_column: str | None = None,
) -> TrainingRun:
    """End-to-end training: ranking, scaling, embedding, graph, both fits."""
    ds = lds.dataset
    ranking = build_ranking(order, ds)
    nds = normalize(ds, ranking)

    pre = {
        c.name: embedding_rows(embed_column(c, embed_config, tuple_ids=ds.tuple_ids))
        for c in ds.text_columns()
    }
    labels = lds.labels if lds.labels is not None else synthesize_labels(nds, pre)
    graph = build_graph(nds, pre)

    numeric_fit = fit_numeric(nds, labels, ridge_lambda=config.ridge_lambda)
    if ds.text_columns():
        text_fit = fit_text(nds, graph, pre, labels, config, embed_config)
        gnn_params = text_fit.gnn_params
        loss_history = text_fit.loss_history
    else:
        text_fit = None
        gnn_params = init_params(embed_config, config.seed)
        loss_history = []

    synthetic = build_synthetic(numeric_fit, text_fit)
    feats = build_node_features(nds, pre, embed_config.dim)
    post = message_pass(graph, feats, gnn_params)
    real = refine_real(nds, post, synthetic, lds.labels, config)

    pipeline = TrainedPipeline(
        synthetic=synthetic,
        real=real,
        gnn_params=gnn_params,
        scale_params=nds.scale_params,
        ranking=ranking,
        sse_num=numeric_fit[2],
        sse_text=text_fit.sse if text_fit is not None else 0.0,
        graph=graph,
        embed_config=embed_config,
        train_config=config,
        label_column=label_column,
    )
    return TrainingRun(pipeline=pipeline, nds=nds, post_embeddings=post,
                       labels_used=labels, pre_embeddings=pre, loss_history=loss_history)


def discover(
    pipeline: TrainedPipeline,
    nds: NormalizedDataset,
    post: EmbeddingMatrix,
    k: int | None = None,
) -> DiscoveryResult:
    """Score every tuple with the real utility and return the top k."""
    k = pipeline.train_config.k if k is None else k
    scores = model_scores(pipeline.real, nds, post)
    ids = nds.dataset.tuple_ids
    return select_top_k(
        [ScoredTuple(int(i), float(s)) for i, s in zip(ids, scores)], k, stage=Stage.REAL
    )


def score_new_data(pipeline: TrainedPipeline, lds: LabeledDataset, k: int) -> DiscoveryResult:
    """Score an unseen (already cleaned) dataset with a trained pipeline.

    The dataset schema must match the training attributes exactly; numeric
    values are rescaled with the stored training (min, max) and clamped,
    text embedded and message-passed with the stored graph and parameters.
    """
    ds = lds.dataset
    model_numeric = list(pipeline.scale_params.keys())
    model_text = list(dict.fromkeys(a for a, _ in pipeline.synthetic.text_coeffs))
    model_attrs = set(model_numeric) | set(model_text)
    data_attrs = set(ds.column_names)
    if model_attrs != data_attrs:
        raise SchemaMismatch(sorted(model_attrs - data_attrs), sorted(data_attrs - model_attrs))
    for name in model_numeric:
        if ds.column(name).kind is not ColumnKind.NUMERIC:
            raise KindMismatch(f"attribute {name!r} must be numeric")
    for name in model_text:
        if ds.column(name).kind is not ColumnKind.TEXT:
            raise KindMismatch(f"attribute {name!r} must be text")

    columns = []
    for col in ds.columns:
        if col.kind is ColumnKind.NUMERIC:
            lo, hi = pipeline.scale_params[col.name]
            if hi > lo:
                vals = np.clip((col.numeric_values - lo) / (hi - lo), 0.0, 1.0)
            else:
                vals = np.full(len(col), 0.5)
            columns.append(AttributeColumn(col.name, col.kind, numeric_values=vals))
        else:
            columns.append(AttributeColumn(col.name, col.kind, text_values=list(col.text_values)))
    scaled = Dataset(name=ds.name, columns=columns, row_count=ds.row_count, tuple_ids=ds.tuple_ids)
    nds = NormalizedDataset(dataset=scaled, scale_params=pipeline.scale_params, ranking=pipeline.ranking)

    pre = {
        c.name: embedding_rows(embed_column(c, pipeline.embed_config, tuple_ids=ds.tuple_ids))
        for c in scaled.text_columns()
    }
    feats = build_node_features(nds, pre, pipeline.embed_config.dim)
    post = message_pass(pipeline.graph, feats, pipeline.gnn_params)
    return discover(pipeline, nds, post, k)


def _model_to_dict(model: UtilityModel) -> dict:
    return {
        "stage": model.stage.value,
        "numeric_coeffs": model.numeric_coeffs,
        "text_coeffs": [[a, d, v] for (a, d), v in model.text_coeffs.items()],
        "intercept": model.intercept,
        "training_sse": model.training_sse,
    }


def _model_from_dict(obj: dict, provenance: UtilityModel | None = None) -> UtilityModel:
    return UtilityModel(
        stage=Stage(obj["stage"]),
        numeric_coeffs={k: float(v) for k, v in obj["numeric_coeffs"].items()},
        text_coeffs={(a, int(d)): float(v) for a, d, v in obj["text_coeffs"]},
        intercept=float(obj["intercept"]),
        training_sse=float(obj["training_sse"]),
        provenance=provenance,
    )


def save_pipeline(pipeline: TrainedPipeline, path: str | Path) -> None:
    """Write the versioned model JSON; reloadable without retraining."""
    doc = {
        "model_version": MODEL_VERSION,
        "label_column": pipeline.label_column,
        "embed_config": {
            "dim": pipeline.embed_config.dim,
            "ngram_min": pipeline.embed_config.ngram_min,
            "ngram_max": pipeline.embed_config.ngram_max,
            "lowercase": pipeline.embed_config.lowercase,
        },
        "train_config": {
            "learning_rate": pipeline.train_config.learning_rate,
            "epochs": pipeline.train_config.epochs,
            "ridge_lambda": pipeline.train_config.ridge_lambda,
            "seed": pipeline.train_config.seed,
            "k": pipeline.train_config.k,
        },
        "ranking": {"order": list(pipeline.ranking.order), "weights": pipeline.ranking.weights},
        "scale_params": {k: list(v) for k, v in pipeline.scale_params.items()},
        "graph": {
            "nodes": pipeline.graph.nodes,
            "adjacency": pipeline.graph.adjacency.tolist(),
            "degenerate": list(pipeline.graph.degenerate),
        },
        "gnn": {
            "weight": pipeline.gnn_params.weight.tolist(),
            "bias": pipeline.gnn_params.bias.tolist(),
            "seed": pipeline.gnn_params.seed,
        },
        "synthetic": _model_to_dict(pipeline.synthetic),
        "real": _model_to_dict(pipeline.real),
        "sse_num": pipeline.sse_num,
        "sse_text": pipeline.sse_text,
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_pipeline(path: str | Path) -> TrainedPipeline:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("model_version") != MODEL_VERSION:
        raise SchemaMismatch([MODEL_VERSION], [str(doc.get("model_version"))])
    adjacency = np.asarray(doc["graph"]["adjacency"], dtype=np.float64)
    graph = AttributeGraph(
        nodes=list(doc["graph"]["nodes"]),
        adjacency=adjacency,
        degree=adjacency.sum(axis=1),
        degenerate=tuple(doc["graph"].get("degenerate", ())),
    )
    synthetic = _model_from_dict(doc["synthetic"])
    real = _model_from_dict(doc["real"], provenance=synthetic)
    return TrainedPipeline(
        synthetic=synthetic,
        real=real,
        gnn_params=GnnParams(
            weight=np.asarray(doc["gnn"]["weight"]),
            bias=np.asarray(doc["gnn"]["bias"]),
            seed=int(doc["gnn"]["seed"]),
        ),
        scale_params={k: (float(v[0]), float(v[1])) for k, v in doc["scale_params"].items()},
        ranking=AttributeRanking(
            order=tuple(doc["ranking"]["order"]),
            weights={k: float(v) for k, v in doc["ranking"]["weights"].items()},
        ),
        sse_num=float(doc["sse_num"]),
        sse_text=float(doc["sse_text"]),
        graph=graph,
        embed_config=EmbedderConfig(**doc["embed_config"]),
        train_config=TrainConfig(**doc["train_config"]),
        label_column=doc.get("label_column"),
    )
