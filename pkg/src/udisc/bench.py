"""Evaluation harness: precision, stability over subsampled re-runs, runtime.

Ground truth for precision is the top-k under the observed labels (the
held-out label column for real CSVs, the generating utility for synthetic
data). Stability re-runs an algorithm on seeded row subsamples and reports
the mean and population standard deviation of per-run precision. The
published table values from the reference comparison are shipped as
fixtures for side-by-side display and are never asserted.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import string
import time
from dataclasses import dataclass, field, replace

import numpy as np

from udisc import baselines
from udisc.embed import EmbedderConfig, embed, embed_column, embedding_rows
from udisc.errors import KMismatch, UdiscError
from udisc.ingest import LabeledDataset
from udisc.ranknorm import NormalizedDataset, build_ranking, normalize
from udisc.train import TrainConfig, discover, run_training, synthesize_labels
from udisc.types import (
    AttributeColumn,
    ColumnKind,
    Dataset,
    DiscoveryResult,
    ScoredTuple,
    Stage,
)

REPORT_VERSION = "ud-report/1"

_FILLER_WORDS = (
    "north", "south", "east", "west", "brick", "stone", "glass", "steel",
    "quiet", "busy", "green", "sunny", "shaded", "corner", "garden", "riverside",
)


@dataclass(frozen=True)
class SyntheticSpec:
    """Ground-truth generator spec; weights are normalized to sum 1."""

    n_rows: int
    n_numeric: int
    n_text: int = 0
    true_weights: tuple[float, ...] = ()
    noise_sigma: float = 0.0
    text_signal: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.n_rows < 1 or self.n_numeric < 1 or self.n_text < 0:
            raise ValueError("n_rows and n_numeric must be positive, n_text non-negative")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        expected = self.n_numeric + (self.n_text if self.text_signal else 0)
        weights = self.true_weights or tuple([1.0] * expected)
        if len(weights) != expected:
            raise ValueError(f"true_weights must have length {expected}")
        total = sum(weights)
        if total <= 0:
            raise ValueError("true_weights must have positive sum")
        object.__setattr__(self, "true_weights", tuple(w / total for w in weights))

    @property
    def numeric_names(self) -> list[str]:
        return [f"num{j}" for j in range(self.n_numeric)]

    @property
    def text_names(self) -> list[str]:
        return [f"txt{c}" for c in range(self.n_text)]


def find_signal_tokens(config: EmbedderConfig) -> tuple[str, str]:
    """Two short tokens: one whose embedding is exactly +e0, one orthogonal to e0.

    Single-bigram tokens embed to a signed one-hot, so the search only has to
    scan two-character strings.
    """
    on = off = None
    alphabet = string.ascii_lowercase + string.digits
    for a, b in itertools.product(alphabet, repeat=2):
        vec = embed(a + b, config).vector
        if on is None and vec[0] == 1.0:
            on = a + b
        elif off is None and vec[0] == 0.0:
            off = a + b
        if on is not None and off is not None:
            return on, off
    raise RuntimeError(f"no signal tokens found for dim={config.dim}")


def generate(spec: SyntheticSpec, embed_config: EmbedderConfig = EmbedderConfig()) -> LabeledDataset:
    """Seeded dataset with known utility: uniform numerics, optional text signal.

    With text_signal, each text column holds one of two tokens; the "on"
    token's embedding has dim-0 value exactly 1, and that value enters the
    label with the column's true weight.
    """
    rng = np.random.default_rng(spec.seed)
    x = rng.uniform(0.0, 1.0, size=(spec.n_rows, spec.n_numeric))
    w = np.asarray(spec.true_weights)
    labels = x @ w[: spec.n_numeric]

    columns = [
        AttributeColumn(name, ColumnKind.NUMERIC, numeric_values=x[:, j])
        for j, name in enumerate(spec.numeric_names)
    ]
    if spec.n_text and spec.text_signal:
        on, off = find_signal_tokens(embed_config)
        for c, name in enumerate(spec.text_names):
            latent = rng.integers(0, 2, size=spec.n_rows)
            labels = labels + w[spec.n_numeric + c] * latent
            columns.append(AttributeColumn(
                name, ColumnKind.TEXT, text_values=[on if s else off for s in latent]))
    else:
        for name in spec.text_names:
            words = rng.integers(0, len(_FILLER_WORDS), size=spec.n_rows)
            columns.append(AttributeColumn(
                name, ColumnKind.TEXT, text_values=[_FILLER_WORDS[i] for i in words]))

    if spec.noise_sigma > 0:
        labels = labels + rng.normal(0.0, spec.noise_sigma, size=spec.n_rows)

    ds = Dataset(name=f"synthetic-{spec.seed}", columns=columns,
                 row_count=spec.n_rows, tuple_ids=np.arange(spec.n_rows))
    return LabeledDataset(dataset=ds, labels=labels)


def ranking_order_for(spec: SyntheticSpec) -> list[str]:
    """The ranking a user who knows the ground truth would give: weight-descending."""
    names = spec.numeric_names + spec.text_names
    weights = list(spec.true_weights) + [0.0] * (len(names) - len(spec.true_weights))
    return [name for _, name in sorted(zip(weights, names), key=lambda t: (-t[0], t[1]))]


def precision_at_k(predicted: DiscoveryResult, truth_scores: np.ndarray, k: int) -> float:
    """|predicted top-k intersect true top-k| / k, ties broken by ascending id."""
    if predicted.k != k:
        raise KMismatch(f"predicted.k={predicted.k} but precision requested at k={k}")
    truth = np.asarray(truth_scores, dtype=np.float64)
    n = len(truth)
    true_ids = sorted(range(n), key=lambda i: (-truth[i], i))[: min(k, n)]
    return len(set(predicted.tuple_ids()) & set(true_ids)) / k


def subset_rows(lds: LabeledDataset, rows: np.ndarray) -> LabeledDataset:
    """Row-slice a labeled dataset, reassigning dense tuple ids."""
    ds = lds.dataset
    columns = []
    for col in ds.columns:
        if col.kind is ColumnKind.NUMERIC:
            columns.append(AttributeColumn(col.name, col.kind,
                                           numeric_values=col.numeric_values[rows],
                                           missing_mask=col.missing_mask[rows]))
        else:
            columns.append(AttributeColumn(col.name, col.kind,
                                           text_values=[col.text_values[r] for r in rows],
                                           missing_mask=col.missing_mask[rows]))
    out = Dataset(name=ds.name, columns=columns, row_count=len(rows), tuple_ids=np.arange(len(rows)))
    return LabeledDataset(dataset=out,
                          labels=None if lds.labels is None else lds.labels[rows])


def _prepared(lds: LabeledDataset, order: list[str], embed_config: EmbedderConfig):
    ranking = build_ranking(order, lds.dataset)
    nds = normalize(lds.dataset, ranking)
    if lds.labels is not None:
        labels = lds.labels
    else:
        pre = {c.name: embedding_rows(embed_column(c, embed_config)) for c in lds.dataset.text_columns()}
        labels = synthesize_labels(nds, pre)
    return nds, labels


def _skyline_as_result(nds: NormalizedDataset, k: int) -> DiscoveryResult:
    """Fixed-size adapter: skyline members first (score 1), lowest-id fill after.

    The skyline's cardinality is data-driven, so a fill policy is needed to
    honor the |selected| = min(k, n) contract.
    """
    sky = baselines.run_skyline(nds)
    n = nds.dataset.row_count
    want = min(k, n)
    selected = [ScoredTuple(i, 1.0) for i in sky[:want]]
    if len(selected) < want:
        members = set(sky)
        fill = [i for i in range(n) if i not in members]
        selected += [ScoredTuple(i, 0.0) for i in fill[: want - len(selected)]]
    return DiscoveryResult(selected=selected, k=k, model_stage=Stage.REAL)


def _run_gnn(lds, order, config, embed_config, k):
    run = run_training(lds, order, config, embed_config)
    return discover(run.pipeline, run.nds, run.post_embeddings, k)


def _run_plod(lds, order, config, embed_config, k):
    nds, labels = _prepared(lds, order, embed_config)
    return baselines.run_plod(nds, labels, config, k)


def _run_topk(lds, order, config, embed_config, k):
    nds, _ = _prepared(lds, order, embed_config)
    return baselines.run_topk(nds, k)


def _run_skyline(lds, order, config, embed_config, k):
    nds, _ = _prepared(lds, order, embed_config)
    return _skyline_as_result(nds, k)


def _run_moo(lds, order, config, embed_config, k):
    nds, _ = _prepared(lds, order, embed_config)
    return baselines.run_multiobjective(nds, k)


def _run_bod(lds, order, config, embed_config, k):
    nds, _ = _prepared(lds, order, embed_config)
    return baselines.run_bod_proxy(nds, k)


ALGORITHMS = {
    "gnn": _run_gnn,
    "plod": _run_plod,
    "bod": _run_bod,
    "topk": _run_topk,
    "skyline": _run_skyline,
    "moo": _run_moo,
}


def stability(
    algorithm: str,
    lds: LabeledDataset,
    order: list[str],
    config: TrainConfig = TrainConfig(),
    embed_config: EmbedderConfig = EmbedderConfig(),
    runs: int = 10,
    subsample: float = 0.8,
    base_seed: int = 0,
) -> tuple[float, float]:
    """Mean and population std of precision over seeded subsampled re-runs."""
    if runs < 2:
        raise ValueError("stability needs at least 2 runs")
    if lds.labels is None:
        raise ValueError("stability needs ground-truth labels")
    fn = ALGORITHMS[algorithm]
    n = lds.dataset.row_count
    take = max(1, int(subsample * n))
    precisions = []
    for r in range(runs):
        rng = np.random.default_rng(base_seed + r)
        rows = np.sort(rng.choice(n, size=take, replace=False))
        sub = subset_rows(lds, rows)
        k = min(config.k, take)
        result = fn(sub, order, config, embed_config, k)
        precisions.append(precision_at_k(result, sub.labels, k))
    arr = np.asarray(precisions)
    # no variation must be exactly zero, not a rounding residue of the mean
    std = 0.0 if np.ptp(arr) == 0.0 else float(arr.std())
    return float(arr.mean()), std


@dataclass
class AlgorithmRow:
    algorithm: str
    precision: float | None = None
    stability_mean: float | None = None
    stability_std: float | None = None
    runtime_seconds: float | None = None
    error: str | None = None


@dataclass
class EvaluationReport:
    schema_version: str
    dataset: str
    rows: list[AlgorithmRow]
    n_rows: int
    k: int
    config: dict
    seeds: list[int]
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        doc = {
            "schema_version": self.schema_version,
            "dataset": self.dataset,
            "n_rows": self.n_rows,
            "k": self.k,
            "config": self.config,
            "seeds": self.seeds,
            "results": [
                {
                    "algorithm": r.algorithm,
                    "precision": r.precision,
                    "stability_mean": r.stability_mean,
                    "stability_std": r.stability_std,
                    "runtime_seconds": r.runtime_seconds,
                    "error": r.error,
                }
                for r in self.rows
            ],
            "warnings": self.warnings,
        }
        doc["determinism_hash"] = _determinism_hash(doc)
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_csv(self) -> str:
        lines = ["algorithm,precision,stability_mean,stability_std,runtime_seconds,error"]
        for r in self.rows:
            cells = [r.algorithm] + [
                "" if v is None else (repr(v) if isinstance(v, float) else str(v))
                for v in (r.precision, r.stability_mean, r.stability_std, r.runtime_seconds, r.error)
            ]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def _determinism_hash(doc: dict) -> str:
    """Hash of the report content with runtime measurements masked out."""
    stripped = json.loads(json.dumps(doc))
    stripped.pop("determinism_hash", None)
    for row in stripped["results"]:
        row["runtime_seconds"] = None
    return hashlib.sha256(json.dumps(stripped, sort_keys=True).encode()).hexdigest()


REPORT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["schema_version", "dataset", "n_rows", "k", "config", "seeds",
                 "results", "warnings", "determinism_hash"],
    "properties": {
        "schema_version": {"const": REPORT_VERSION},
        "dataset": {"type": "string"},
        "n_rows": {"type": "integer", "minimum": 0},
        "k": {"type": "integer", "minimum": 1},
        "config": {"type": "object"},
        "seeds": {"type": "array", "items": {"type": "integer"}},
        "warnings": {"type": "array", "items": {"type": "string"}},
        "determinism_hash": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
        "results": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["algorithm", "precision", "stability_mean",
                             "stability_std", "runtime_seconds", "error"],
                "properties": {
                    "algorithm": {"type": "string"},
                    "precision": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
                    "stability_mean": {"type": ["number", "null"]},
                    "stability_std": {"type": ["number", "null"], "minimum": 0},
                    "runtime_seconds": {"type": ["number", "null"], "minimum": 0},
                    "error": {"type": ["string", "null"]},
                },
            },
        },
    },
}


def validate_report(doc: dict) -> None:
    import jsonschema

    jsonschema.validate(doc, REPORT_SCHEMA)


def run_benchmark(
    lds: LabeledDataset,
    order: list[str],
    algorithms: list[str],
    config: TrainConfig = TrainConfig(),
    embed_config: EmbedderConfig = EmbedderConfig(),
    runs: int = 10,
    subsample: float = 0.8,
    base_seed: int = 0,
    warmup: bool = True,
) -> EvaluationReport:
    """Time, score, and stability-test each algorithm on one dataset.

    Runtime covers one full train+discover execution on a monotonic clock,
    after one untimed warm-up run. Per-algorithm failures become error rows
    rather than aborting the whole report.
    """
    if lds.labels is None:
        raise ValueError("run_benchmark needs ground-truth labels for precision")
    rows = []
    for name in algorithms:
        if name not in ALGORITHMS:
            rows.append(AlgorithmRow(algorithm=name, error=f"unknown algorithm {name!r}"))
            continue
        fn = ALGORITHMS[name]
        k = min(config.k, lds.dataset.row_count)
        try:
            if warmup:
                fn(lds, order, config, embed_config, k)
            t0 = time.perf_counter()
            result = fn(lds, order, config, embed_config, k)
            runtime = time.perf_counter() - t0
            prec = precision_at_k(result, lds.labels, k)
            mean, std = stability(name, lds, order, config, embed_config,
                                  runs=runs, subsample=subsample, base_seed=base_seed)
            rows.append(AlgorithmRow(algorithm=name, precision=prec, stability_mean=mean,
                                     stability_std=std, runtime_seconds=runtime))
        except UdiscError as exc:
            rows.append(AlgorithmRow(algorithm=name, error=f"{type(exc).__name__}: {exc}"))

    warnings = []
    by_name = {r.algorithm: r for r in rows}
    gnn, plod = by_name.get("gnn"), by_name.get("plod")
    if gnn and plod and gnn.precision is not None and plod.precision is not None:
        if gnn.precision < plod.precision:
            warnings.append(
                "WARN: measured gnn precision {:.4f} below plod {:.4f} (deviation {:.4f}); "
                "reference tables expect gnn >= plod".format(
                    gnn.precision, plod.precision, plod.precision - gnn.precision)
            )

    return EvaluationReport(
        schema_version=REPORT_VERSION,
        dataset=lds.dataset.name,
        rows=rows,
        n_rows=lds.dataset.row_count,
        k=min(config.k, lds.dataset.row_count),
        config={
            "learning_rate": config.learning_rate,
            "epochs": config.epochs,
            "ridge_lambda": config.ridge_lambda,
            "seed": config.seed,
            "k": config.k,
            "embed_dim": embed_config.dim,
            "runs": runs,
            "subsample": subsample,
        },
        seeds=list(range(base_seed, base_seed + runs)),
        warnings=warnings,
    )


def sweep_tuples(
    spec: SyntheticSpec,
    sizes: list[int],
    algorithms: list[str],
    config: TrainConfig = TrainConfig(),
    embed_config: EmbedderConfig = EmbedderConfig(),
    runs: int = 10,
    subsample: float = 0.8,
    base_seed: int = 0,
) -> list[EvaluationReport]:
    """One report per dataset size, ascending; pairs with plot_data_csv."""
    if sizes != sorted(sizes):
        raise ValueError("sizes must be ascending")
    reports = []
    for n in sizes:
        lds = generate(replace(spec, n_rows=n), embed_config)
        order = ranking_order_for(replace(spec, n_rows=n))
        reports.append(run_benchmark(lds, order, algorithms, config, embed_config,
                                     runs=runs, subsample=subsample, base_seed=base_seed))
    return reports


def plot_data_csv(reports: list[EvaluationReport]) -> str:
    """Long-format CSV for plotting precision and runtime against n."""
    lines = ["n,algorithm,precision,runtime_s"]
    for rep in reports:
        for row in rep.rows:
            prec = "" if row.precision is None else repr(row.precision)
            rt = "" if row.runtime_seconds is None else repr(row.runtime_seconds)
            lines.append(f"{rep.n_rows},{row.algorithm},{prec},{rt}")
    return "\n".join(lines) + "\n"


# Reference comparison tables, for side-by-side display only (never asserted).
PAPER_REFERENCE = {
    "boston": {
        "precision": {"plod": 0.5, "gnn": 0.6, "bod": 0.0, "topk": 0.1, "skyline": 0.0, "moo": 0.4},
        "stability": {
            "plod": (0.570, 0.110), "gnn": (0.610, 0.104), "bod": (0.000, 0.000),
            "topk": (0.030, 0.046), "skyline": (0.040, 0.066), "moo": (0.490, 0.054),
        },
        "runtime_seconds": {"plod": 4.7114, "gnn": 5.0887, "bod": 3.1400,
                            "topk": 2.4870, "skyline": 2.8929, "moo": 3.1718},
    },
    "kaggle": {
        "precision": {"plod": 0.6, "gnn": 0.7, "bod": 0.0, "topk": 0.0, "skyline": 0.1, "moo": 0.5},
        "stability": {
            "plod": (0.580, 0.098), "gnn": (0.700, 0.063), "bod": (0.010, 0.030),
            "topk": (0.030, 0.046), "skyline": (0.010, 0.030), "moo": (0.240, 0.066),
        },
        "runtime_seconds": {"plod": 3.3617, "gnn": 3.2283, "bod": 3.6452,
                            "topk": 3.3517, "skyline": 3.0820, "moo": 3.0897},
    },
}


def paper_reference_tables() -> dict:
    """Deep copy of the shipped reference tables."""
    return json.loads(json.dumps({
        name: {
            "precision": tbl["precision"],
            "stability": {k: list(v) for k, v in tbl["stability"].items()},
            "runtime_seconds": tbl["runtime_seconds"],
        }
        for name, tbl in PAPER_REFERENCE.items()
    }))
