"""Delay-pattern discovery: DTW distances, agglomerative clustering, elbow.

Profiles are per-epic max-normalized DSP series over the 10 milestones.
Distances use classic dynamic time warping with absolute local cost and no
warping window; clustering is agglomerative with average linkage on the
precomputed DTW matrix and fully deterministic tie-breaking.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .dataset import Dataset, N_MILESTONES, PREDICTOR_NAMES
from .errors import InsufficientDataError, InvalidInputError

DEFAULT_K_RANGE = tuple(range(1, 9))
LINKAGES = ("average", "single", "complete")


@dataclass(frozen=True)
class DelayProfile:
    """Max-normalized DSP series of one epic; all zeros if nothing was delayed."""

    epic_id: str
    values: tuple[float, ...]


@dataclass(frozen=True)
class PatternLabel:
    """Cluster label of a partial series, or unavailable before milestone 3."""

    label: int | None

    @property
    def available(self) -> bool:
        return self.label is not None


UNAVAILABLE = PatternLabel(None)


@dataclass(frozen=True)
class ClusterModel:
    k: int
    assignments: Mapping[str, int]          # epic_id -> label in 1..k
    centroids: tuple[tuple[float, ...], ...]
    linkage: str = "average"
    wss_curve: Mapping[int, float] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "k": self.k,
            "linkage": self.linkage,
            "centroids": [list(c) for c in self.centroids],
            "assignments": dict(sorted(self.assignments.items())),
            "wss_curve": {str(k): v for k, v in sorted(self.wss_curve.items())},
        }

    @classmethod
    def from_json_dict(cls, raw: dict) -> "ClusterModel":
        return cls(
            k=int(raw["k"]),
            assignments={k: int(v) for k, v in raw["assignments"].items()},
            centroids=tuple(tuple(float(x) for x in c) for c in raw["centroids"]),
            linkage=raw.get("linkage", "average"),
            wss_curve={int(k): float(v) for k, v in raw.get("wss_curve", {}).items()},
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_json_dict(), handle, indent=2, sort_keys=True)
            handle.write("\n")

    @classmethod
    def load(cls, path) -> "ClusterModel":
        with open(path, encoding="utf-8") as handle:
            return cls.from_json_dict(json.load(handle))


def normalize_profile(raw: Sequence[float], epic_id: str = "") -> DelayProfile:
    """Divide a DSP series by its maximum; an all-zero series stays all zero."""
    values = np.asarray(raw, dtype=float)
    if values.ndim != 1 or values.size != N_MILESTONES:
        raise InvalidInputError(f"profile must have length {N_MILESTONES}")
    if np.any(values < 0):
        raise InvalidInputError("DSP values must be nonnegative")
    peak = values.max()
    if peak > 0:
        values = values / peak
    return DelayProfile(epic_id, tuple(values.tolist()))


def dataset_profiles(dataset: Dataset) -> list[DelayProfile]:
    return [
        normalize_profile(outcome.dsp_series, epic_id)
        for epic_id, outcome in dataset.outcomes().items()
    ]


def dtw_distance(a: Sequence[float], b: Sequence[float]) -> float:
    """Dynamic time warping distance with |x - y| local cost, no window.

    Step pattern {(i-1,j), (i,j-1), (i-1,j-1)}; symmetric, d(x, x) = 0.
    """
    x = np.asarray(a, dtype=float)
    y = np.asarray(b, dtype=float)
    if x.size == 0 or y.size == 0:
        raise InvalidInputError("DTW inputs must be nonempty")
    prev = np.empty(y.size)
    prev[0] = abs(x[0] - y[0])
    for j in range(1, y.size):
        prev[j] = prev[j - 1] + abs(x[0] - y[j])
    for i in range(1, x.size):
        cur = np.empty(y.size)
        cur[0] = prev[0] + abs(x[i] - y[0])
        for j in range(1, y.size):
            cur[j] = abs(x[i] - y[j]) + min(cur[j - 1], prev[j], prev[j - 1])
        prev = cur
    return float(prev[-1])


def dtw_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """All-pairs DTW between the rows of two equal-width series stacks.

    Vectorizes the DP over the pair axes; used for pairwise matrices where
    the scalar version would be too slow.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    la, lb = a.shape[1], b.shape[1]
    if la == 0 or lb == 0:
        raise InvalidInputError("DTW inputs must be nonempty")
    cost0 = np.abs(a[:, None, 0, None] - b[None, :, :])  # (na, nb, lb)
    prev = np.cumsum(cost0, axis=2)
    for i in range(1, la):
        ci = np.abs(a[:, None, i, None] - b[None, :, :])
        cur = np.empty_like(prev)
        cur[:, :, 0] = prev[:, :, 0] + ci[:, :, 0]
        for j in range(1, lb):
            best = np.minimum(cur[:, :, j - 1], prev[:, :, j])
            np.minimum(best, prev[:, :, j - 1], out=best)
            cur[:, :, j] = ci[:, :, j] + best
        prev = cur
    return prev[:, :, -1]


def _profile_array(profiles: Sequence[DelayProfile]) -> np.ndarray:
    return np.array([p.values for p in profiles], dtype=float)


def _merge_history(dist: np.ndarray, linkage: str) -> list[tuple[int, int]]:
    """Full agglomerative merge sequence on a precomputed distance matrix.

    On ties the pair with lexicographically smallest indices merges first;
    cluster j is absorbed into i < j, so replaying a prefix of the history
    reproduces the clustering at any k.
    """
    n = dist.shape[0]
    d = dist.astype(float).copy()
    sizes = np.ones(n)
    active = np.ones(n, dtype=bool)
    merges = []
    masked = np.where(np.triu(np.ones((n, n), dtype=bool), k=1), d, np.inf)
    for _ in range(n - 1):
        flat = np.argmin(masked)
        i, j = divmod(int(flat), n)
        merges.append((i, j))
        si, sj = sizes[i], sizes[j]
        if linkage == "average":
            merged = (si * d[i] + sj * d[j]) / (si + sj)
        elif linkage == "single":
            merged = np.minimum(d[i], d[j])
        else:
            merged = np.maximum(d[i], d[j])
        d[i] = merged
        d[:, i] = merged
        d[i, i] = 0.0
        sizes[i] = si + sj
        active[j] = False
        masked[j, :] = np.inf
        masked[:, j] = np.inf
        row = np.where(active, merged, np.inf)
        masked[i, :] = np.where(np.arange(n) > i, row, np.inf)
        masked[:, i] = np.where(np.arange(n) < i, row, np.inf)
        masked[i, i] = np.inf
    return merges


def _cut(merges: list[tuple[int, int]], n: int, k: int) -> list[list[int]]:
    members = {i: [i] for i in range(n)}
    for i, j in merges[: n - k]:
        members[i].extend(members.pop(j))
    clusters = [sorted(v) for v in members.values()]
    clusters.sort(key=lambda c: c[0])  # label order: smallest member index
    return clusters


def _model_from_cut(
    profiles: Sequence[DelayProfile],
    clusters: list[list[int]],
    linkage: str,
    wss_curve: Mapping[int, float],
) -> ClusterModel:
    arr = _profile_array(profiles)
    assignments = {}
    centroids = []
    for label, members in enumerate(clusters, start=1):
        for idx in members:
            assignments[profiles[idx].epic_id] = label
        centroids.append(tuple(arr[members].mean(axis=0).tolist()))
    return ClusterModel(
        k=len(clusters),
        assignments=assignments,
        centroids=tuple(centroids),
        linkage=linkage,
        wss_curve=dict(wss_curve),
    )


def hierarchical_cluster(
    profiles: Sequence[DelayProfile], k: int, linkage: str = "average"
) -> ClusterModel:
    """Agglomerative clustering of delay profiles on the pairwise DTW matrix."""
    n = len(profiles)
    if not 1 <= k <= n:
        raise InvalidInputError(f"k must lie in [1, {n}], got {k}")
    if linkage not in LINKAGES:
        raise InvalidInputError(f"linkage must be one of {LINKAGES}")
    arr = _profile_array(profiles)
    dist = dtw_matrix(arr, arr)
    merges = _merge_history(dist, linkage)
    clusters = _cut(merges, n, k)
    model = _model_from_cut(profiles, clusters, linkage, {})
    return ClusterModel(
        k=model.k,
        assignments=model.assignments,
        centroids=model.centroids,
        linkage=linkage,
        wss_curve={k: wss(model, profiles)},
    )


def wss(model: ClusterModel, profiles: Sequence[DelayProfile]) -> float:
    """Total within-cluster sum of squared DTW distances to the centroids."""
    arr = _profile_array(profiles)
    labels = np.array([model.assignments[p.epic_id] for p in profiles])
    total = 0.0
    for label in range(1, model.k + 1):
        members = labels == label
        if not members.any():
            continue
        d = dtw_matrix(arr[members], np.asarray([model.centroids[label - 1]]))
        total += float(np.sum(d[:, 0] ** 2))
    return total


def _wss_curve(
    profiles: Sequence[DelayProfile],
    merges: list[tuple[int, int]],
    k_range: Sequence[int],
    linkage: str,
) -> dict[int, float]:
    curve = {}
    for k in k_range:
        clusters = _cut(merges, len(profiles), k)
        model = _model_from_cut(profiles, clusters, linkage, {})
        curve[k] = wss(model, profiles)
    return curve


def elbow_select_k(
    profiles: Sequence[DelayProfile],
    k_range: Sequence[int] = DEFAULT_K_RANGE,
    linkage: str = "average",
) -> int:
    """Pick k at the WSS curve's sharpest bend (max second difference)."""
    ks = sorted(k_range)
    if len(ks) < 3:
        raise InsufficientDataError("k_range must contain at least 3 values")
    if ks[0] < 1 or ks[-1] > len(profiles):
        raise InvalidInputError("k_range must lie within [1, n profiles]")
    arr = _profile_array(profiles)
    merges = _merge_history(dtw_matrix(arr, arr), linkage)
    curve = _wss_curve(profiles, merges, ks, linkage)
    return _elbow_from_curve(curve)


def _elbow_from_curve(curve: Mapping[int, float]) -> int:
    ks = sorted(curve)
    best_k, best_curvature = None, -np.inf
    for prev_k, k, next_k in zip(ks, ks[1:], ks[2:]):
        curvature = curve[prev_k] - 2.0 * curve[k] + curve[next_k]
        if curvature > best_curvature:
            best_k, best_curvature = k, curvature
    return best_k


def fit_cluster_model(
    profiles: Sequence[DelayProfile],
    k: int | None = None,
    k_range: Sequence[int] = DEFAULT_K_RANGE,
    linkage: str = "average",
) -> ClusterModel:
    """Cluster profiles; when k is None it is selected by the elbow method."""
    n = len(profiles)
    if linkage not in LINKAGES:
        raise InvalidInputError(f"linkage must be one of {LINKAGES}")
    arr = _profile_array(profiles)
    merges = _merge_history(dtw_matrix(arr, arr), linkage)
    ks = sorted(set(k_range) | ({k} if k is not None else set()))
    ks = [x for x in ks if 1 <= x <= n]
    if k is None:
        if len(ks) < 3:
            raise InsufficientDataError("k_range must contain at least 3 values")
        curve = _wss_curve(profiles, merges, ks, linkage)
        k = _elbow_from_curve(curve)
    else:
        if not 1 <= k <= n:
            raise InvalidInputError(f"k must lie in [1, {n}], got {k}")
        curve = _wss_curve(profiles, merges, ks, linkage)
    clusters = _cut(merges, n, k)
    return _model_from_cut(profiles, clusters, linkage, curve)


def classify_partial(
    observed: Sequence[float], model: ClusterModel
) -> PatternLabel:
    """Label an ongoing epic from its DSP values over milestones 1..m-1.

    With fewer than two observed milestones the label is unavailable; the
    prefix is otherwise max-normalized, zero-padded (future milestones are
    unknown) and matched to the DTW-nearest centroid, smallest label on ties.
    """
    observed = np.asarray(observed, dtype=float)
    if observed.size < 2:
        return UNAVAILABLE
    if observed.size > N_MILESTONES:
        raise InvalidInputError("observed prefix longer than the milestone timeline")
    peak = observed.max()
    series = np.zeros(N_MILESTONES)
    series[: observed.size] = observed / peak if peak > 0 else observed
    dists = dtw_matrix(series[None, :], np.asarray(model.centroids))[0]
    return PatternLabel(int(np.argmin(dists)) + 1)


# --- Cluster characterization -------------------------------------------------

CHARACTERIZED_VARIABLES = PREDICTOR_NAMES + ("bre",)
MIN_CLUSTER_SIZE_FOR_TESTS = 3


@dataclass(frozen=True)
class ClusterReport:
    """Per-cluster medians and all-pairs significance flags, Table-2 style."""

    labels: tuple[int, ...]
    sizes: Mapping[int, int]
    medians: Mapping[str, Mapping[int, float]]
    significant: Mapping[str, Mapping[int, bool]]
    tested_labels: tuple[int, ...]
    alpha: float

    def write_csv(self, path) -> None:
        from .dataset import _write_csv

        header = ["variable"]
        header += [f"median_c{label}" for label in self.labels]
        header += [f"significant_c{label}" for label in self.labels]
        rows = []
        for name in CHARACTERIZED_VARIABLES:
            row = [name]
            row += [repr(float(self.medians[name][label])) for label in self.labels]
            row += [int(self.significant[name][label]) for label in self.labels]
            rows.append(row)
        _write_csv(path, header, rows)


def characterize_clusters(
    model: ClusterModel,
    predictor_values: Mapping[str, Mapping[str, float]],
    bre: Mapping[str, float],
    alpha: float = 0.05,
) -> ClusterReport:
    """Medians per cluster plus pairwise rank tests with Bonferroni correction.

    ``predictor_values`` maps epic_id to its 13 per-epic predictor values.
    A cluster is flagged for a variable when it differs significantly from
    every other tested cluster; clusters with fewer than 3 members are
    excluded from testing with a warning.
    """
    labels = tuple(range(1, model.k + 1))
    by_label: dict[int, list[str]] = {label: [] for label in labels}
    for epic_id, label in model.assignments.items():
        if epic_id in bre:
            by_label[label].append(epic_id)
    sizes = {label: len(v) for label, v in by_label.items()}
    tested = tuple(l for l in labels if sizes[l] >= MIN_CLUSTER_SIZE_FOR_TESTS)
    for label in labels:
        if label not in tested:
            warnings.warn(
                f"cluster {label} has {sizes[label]} member(s); excluded from tests",
                stacklevel=2,
            )

    def variable_values(name: str, label: int) -> np.ndarray:
        ids = by_label[label]
        if name == "bre":
            return np.array([bre[e] for e in ids])
        return np.array([predictor_values[e][name] for e in ids])

    n_pairs = max(len(tested) * (len(tested) - 1) // 2, 1)
    corrected = alpha / n_pairs
    medians: dict[str, dict[int, float]] = {}
    significant: dict[str, dict[int, bool]] = {}
    for name in CHARACTERIZED_VARIABLES:
        medians[name] = {
            label: float(np.median(variable_values(name, label))) if sizes[label] else float("nan")
            for label in labels
        }
        pair_significant = {}
        for i, a in enumerate(tested):
            for b in tested[i + 1 :]:
                x, y = variable_values(name, a), variable_values(name, b)
                if np.all(x[0] == x) and np.all(x[0] == y):
                    p = 1.0  # identical constant samples: no evidence of difference
                else:
                    p = float(stats.mannwhitneyu(x, y, alternative="two-sided").pvalue)
                pair_significant[(a, b)] = p < corrected
        significant[name] = {
            label: label in tested
            and all(
                pair_significant[(min(label, other), max(label, other))]
                for other in tested
                if other != label
            )
            and len(tested) > 1
            for label in labels
        }
    return ClusterReport(
        labels=labels,
        sizes=sizes,
        medians=medians,
        significant=significant,
        tested_labels=tested,
        alpha=alpha,
    )


def epic_predictor_medians(dataset: Dataset) -> dict[str, dict[str, float]]:
    """Per-epic medians of each predictor across its milestone snapshots."""
    result: dict[str, dict[str, float]] = {}
    for epic_id in dataset.epic_ids:
        rows = [
            dataset.predictors[(epic_id, m)].as_array()
            for m in range(1, N_MILESTONES + 1)
            if (epic_id, m) in dataset.predictors
        ]
        if not rows:
            continue
        med = np.median(np.array(rows), axis=0)
        result[epic_id] = dict(zip(PREDICTOR_NAMES, med.tolist()))
    return result
