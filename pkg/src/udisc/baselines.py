"""Comparison algorithms: PLOD path, BOD proxy, Top-K, Skyline, Multi-objective.

All of them work on the normalized numeric attributes and assume
maximization orientation (minimization attributes must be negated at
ingest). Dominance: t dominates s iff t >= s on every numeric attribute and
t > s on at least one. The BOD baseline is a documented dominance-count
proxy, not a reimplementation of the original algorithm.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from udisc.errors import NeedTwoObjectives, NoNumericAttributes
from udisc.ranknorm import NormalizedDataset
from udisc.train import TrainConfig, fit_numeric
from udisc.types import DiscoveryResult, ScoredTuple, Stage, select_top_k


class BaselineKind(enum.Enum):
    PLOD = "plod"
    BOD_PROXY = "bod"
    TOP_K = "topk"
    SKYLINE = "skyline"
    MULTI_OBJECTIVE = "moo"


@dataclass(frozen=True)
class BaselineSpec:
    kind: BaselineKind
    params: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if "k" in self.params and self.params["k"] < 1:
            raise ValueError("k must be positive")


def _numeric_matrix(nds: NormalizedDataset, min_cols: int = 1) -> np.ndarray:
    x = nds.dataset.numeric_matrix()
    if x.shape[1] == 0:
        raise NoNumericAttributes("baseline needs at least one numeric attribute")
    if x.shape[1] < min_cols:
        raise NeedTwoObjectives("multi-objective selection needs at least two numeric attributes")
    return x


def _as_result(nds: NormalizedDataset, scores: np.ndarray, k: int) -> DiscoveryResult:
    ids = nds.dataset.tuple_ids
    return select_top_k([ScoredTuple(int(i), float(s)) for i, s in zip(ids, scores)], k,
                        stage=Stage.REAL)


def run_plod(nds: NormalizedDataset, labels: np.ndarray, config: TrainConfig, k: int) -> DiscoveryResult:
    """Numeric-only regression path: least squares on labels, score, top-k."""
    coeffs, intercept, _sse = fit_numeric(nds, labels, ridge_lambda=config.ridge_lambda)
    x = _numeric_matrix(nds)
    beta = np.array([coeffs[c.name] for c in nds.dataset.numeric_columns()])
    return _as_result(nds, x @ beta + intercept, k)


def run_topk(nds: NormalizedDataset, k: int) -> DiscoveryResult:
    """Fixed utility the user never tuned: equal weights over numeric attributes."""
    x = _numeric_matrix(nds)
    return _as_result(nds, x.mean(axis=1), k)


def dominance_matrix(x: np.ndarray, block: int = 256) -> np.ndarray:
    """Boolean matrix D with D[i, j] = row i dominates row j."""
    n = x.shape[0]
    dom = np.zeros((n, n), dtype=bool)
    for start in range(0, n, block):
        stop = min(start + block, n)
        ge = (x[start:stop, None, :] >= x[None, :, :]).all(axis=2)
        gt = (x[start:stop, None, :] > x[None, :, :]).any(axis=2)
        dom[start:stop] = ge & gt
    return dom


def dominance_counts(x: np.ndarray) -> np.ndarray:
    """Per row, the number of rows it dominates."""
    return dominance_matrix(x).sum(axis=1)


def skyline_ids(nds: NormalizedDataset) -> tuple[list[int], int]:
    """Block-nested-loop skyline over the numeric attributes.

    Returns (sorted tuple ids of non-dominated rows, dominance comparisons
    performed). The comparison count is bounded by n(n-1).
    """
    x = _numeric_matrix(nds)
    ids = nds.dataset.tuple_ids
    window: list[int] = []  # row indices of current skyline candidates
    comparisons = 0
    for r in range(x.shape[0]):
        p = x[r]
        if window:
            w = x[window]
            comparisons += len(window)
            dominated = ((w >= p).all(axis=1) & (w > p).any(axis=1)).any()
            if dominated:
                continue
            keep = ~((p >= w).all(axis=1) & (p > w).any(axis=1))
            window = [window[i] for i in np.nonzero(keep)[0]]
        window.append(r)
    return sorted(int(ids[r]) for r in window), comparisons


def run_skyline(nds: NormalizedDataset) -> list[int]:
    """Tuple ids of the non-dominated set, sorted ascending."""
    return skyline_ids(nds)[0]


def fast_non_dominated_sort(x: np.ndarray) -> list[list[int]]:
    """Deb-style front assignment: peel successive non-dominated layers.

    Returns fronts as lists of row indices, best front first.
    """
    dom = dominance_matrix(x)
    n_dominators = dom.sum(axis=0).astype(np.int64)
    fronts: list[list[int]] = []
    current = np.nonzero(n_dominators == 0)[0]
    assigned = np.zeros(x.shape[0], dtype=bool)
    while current.size:
        fronts.append([int(i) for i in current])
        assigned[current] = True
        n_dominators -= dom[current].sum(axis=0)
        nxt = np.nonzero((n_dominators == 0) & ~assigned)[0]
        current = nxt
    return fronts


def crowding_distances(x: np.ndarray, front: list[int]) -> np.ndarray:
    """Crowding distance within one front; boundary points are infinite."""
    size = len(front)
    dist = np.zeros(size)
    if size <= 2:
        return np.full(size, np.inf)
    for m in range(x.shape[1]):
        vals = x[front, m]
        order = np.lexsort((front, vals))  # stable under ties, id-deterministic
        dist[order[0]] = dist[order[-1]] = np.inf
        span = vals[order[-1]] - vals[order[0]]
        if span == 0.0:
            continue
        interior = order[1:-1]
        dist[interior] += (vals[order[2:]] - vals[order[:-2]]) / span
    return dist


def run_multiobjective(nds: NormalizedDataset, k: int) -> DiscoveryResult:
    """NSGA-II-style selector: (front rank asc, crowding desc, id asc).

    The ordering is folded into a scalar score, score = -front + bonus with
    bonus in [0, 0.5] strictly increasing in crowding distance (0.5 exactly
    for infinite crowding), so front rank always outweighs crowding.
    """
    x = _numeric_matrix(nds, min_cols=2)
    scores = np.empty(x.shape[0])
    for f, front in enumerate(fast_non_dominated_sort(x)):
        crowd = crowding_distances(x, front)
        bonus = 0.5 * (1.0 - 1.0 / (1.0 + crowd))  # 0.5 exactly at infinite crowding
        scores[front] = -float(f) + bonus
    return _as_result(nds, scores, k)


def run_bod_proxy(nds: NormalizedDataset, k: int) -> DiscoveryResult:
    """Utility-free proxy: score each tuple by how many tuples it dominates."""
    x = _numeric_matrix(nds)
    return _as_result(nds, dominance_counts(x).astype(np.float64), k)
