"""Utility-driven data discovery over mixed numeric/text tables.

From a one-shot user ranking of attributes, estimate a linear utility in two
stages (synthetic, then refined) over min-max-scaled numerics and
message-passed text embeddings, and return the utility-maximizing top-k
tuples. Ships with five baseline selectors and an evaluation harness.
"""

from udisc.bench import (
    EvaluationReport,
    SyntheticSpec,
    generate,
    precision_at_k,
    run_benchmark,
    stability,
    sweep_tuples,
)
from udisc.embed import EmbedderConfig, TextEmbedding, embed, embed_column
from udisc.graph import AttributeGraph, EmbeddingMatrix, GnnParams, build_graph, message_pass
from udisc.ingest import IngestConfig, LabeledDataset, clean, load_csv
from udisc.ranknorm import NormalizedDataset, apply_scale, build_ranking, normalize
from udisc.train import (
    TrainConfig,
    TrainedPipeline,
    discover,
    fit_numeric,
    fit_text,
    load_pipeline,
    refine_real,
    run_training,
    save_pipeline,
    score_new_data,
    synthesize_labels,
)
from udisc.types import (
    AttributeColumn,
    AttributeRanking,
    ColumnKind,
    Dataset,
    DiscoveryResult,
    ScoredTuple,
    Stage,
    UtilityModel,
    score_tuple,
    select_top_k,
)

__version__ = "0.1.0"
