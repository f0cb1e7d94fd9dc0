"""Seeded generator of synthetic backlog datasets with planted delay patterns.

Stands in for the proprietary production data: four hand-authored delay-shape
templates drive the iteration ledgers, per-cluster BRE targets are hit by
stratified Beta quantiles, and predictors are drawn around per-cluster medians
(lognormal for count-like variables, logit-normal for ratios). Everything is a
pure function of the config, including its seed.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy import optimize, stats

from .dataset import (
    Dataset,
    EpicRecord,
    IterationRecord,
    N_MILESTONES,
    PREDICTOR_NAMES,
    PredictorVector,
    RATIO_PREDICTORS,
    STATUS_COMPLETED,
    _write_csv,
    milestone_boundary,
    save_dataset,
)
from .errors import InvalidInputError

N_CLUSTERS = 4

# Shape curves for the four recurrent delay patterns, one value per milestone,
# max forced to 1: (1) an early delay peak with stepped recovery and delay
# remaining at the end, (2) punctual until a late surge, (3) an early buildup
# that is fully recovered, (4) alternating spikes and recoveries. The mutual
# DTW separations are tuned so that, at the default cluster weights, the WSS
# curve's sharpest bend sits at k=4 and the merge order joins the two large
# clusters first.
DELAY_TEMPLATES = (
    (1.00, 0.95, 0.55, 0.42, 0.20, 0.28, 0.20, 0.31, 0.48, 0.65),
    (0.08, 0.12, 0.10, 0.15, 0.12, 0.18, 0.15, 0.20, 0.55, 1.00),
    (0.10, 0.25, 0.85, 1.00, 0.45, 0.15, 0.05, 0.03, 0.02, 0.00),
    (1.00, 0.03, 0.97, 0.03, 1.00, 0.03, 1.00, 0.03, 1.00, 0.03),
)

# Per-cluster predictor medians; overridable through GeneratorConfig.
CLUSTER_PREDICTOR_MEDIANS: Mapping[str, tuple[float, float, float, float]] = {
    "out_degree": (7.0, 3.0, 4.0, 4.0),
    "changed_leads": (3.0, 2.0, 3.0, 2.0),
    "stability_ratio": (0.73, 0.81, 0.64, 0.72),
    "dev_age_ing": (2.49, 2.61, 2.92, 2.84),
    "team_existence": (1.30, 1.53, 1.29, 1.42),
    "hist_performance": (0.69, 0.67, 0.74, 0.61),
    "dev_workload": (15.0, 12.0, 10.0, 8.0),
    "nr_incidents": (8.0, 12.0, 8.0, 6.0),
    "unplanned_stories": (0.11, 0.16, 0.10, 0.08),
    "nr_stories": (52.0, 43.0, 39.0, 45.0),
    "nr_sprints": (13.0, 15.0, 14.0, 11.0),
    "team_size": (8.0, 7.0, 6.0, 7.0),
    "security_level": (0.56, 0.77, 0.53, 0.36),
}

# Free generator parameters (documented, not claimed to match any real data).
LOGNORMAL_SD = 0.35        # spread of count-like predictors around the median
LOGIT_SD = 0.5             # spread of ratio predictors on the logit scale
DRIFT_SD = 0.05            # per-milestone multiplicative drift
RATIO_DRIFT_SD = 0.1       # per-milestone drift on the logit scale
TROUBLE_GAIN = 1.0         # coupling of incidents/unplanned work to observed delay
BETA_PRECISION = 20.0      # precision of the positive BRE component
EARLY_BRE_MAX = 0.15       # early deliveries drawn uniformly from (-0.15, 0]
BASE_DATE = dt.date(2017, 1, 1)
START_SPREAD_DAYS = 1460

# Per-cluster range of the max-DSP magnitude (delayed story points at the
# profile peak). Scales descend with the cluster BRE medians so that raw DSP
# never ranks a low-delay cluster above a high-delay one at any milestone,
# keeping the delayed-workload covariate informative throughout the timeline.
DSP_SCALE_RANGES = ((40, 60), (15, 35), (12, 24), (8, 16))

# Which epics finish on time is decided by delay observed late in the
# delivery (milestones 6-10): the early milestones reveal little about
# zero-ness, later snapshots reveal a lot.
LATE_WINDOW = slice(5, 10)

# Incidents and unplanned work track the epic's eventual delay with fidelity
# that ramps up over the timeline: at milestone m the coupled predictors mix
# the true severity with noise at weight m/10. Early snapshots are nearly
# uninformative, late ones nearly deterministic, while the direction of the
# relationship never changes; this is what lets models that refresh their
# covariates improve on a one-shot model.
TROUBLE_FIDELITY = np.linspace(0.1, 1.0, N_MILESTONES)

# Incidents and unplanned work accompany delay: their level scales with the
# mean normalized DSP observed so far, giving milestone-fresh snapshots real
# information beyond the milestone-1 values.
TROUBLE_COUPLED = ("nr_incidents", "unplanned_stories")


@dataclass(frozen=True)
class GeneratorConfig:
    n_epics: int = 400
    cluster_weights: tuple[float, float, float, float] = (0.36, 0.44, 0.14, 0.06)
    noise_sd: float = 0.1
    bre_medians: tuple[float, float, float, float] = (0.23, 0.17, 0.11, 0.09)
    zero_bre_fraction: float = 0.42
    iteration_range: tuple[int, int] = (10, 24)
    predictor_effects: Mapping[str, tuple[float, float, float, float]] = field(
        default_factory=dict
    )
    seed: int = 0

    def cluster_medians(self, name: str) -> tuple[float, ...]:
        return tuple(self.predictor_effects.get(name, CLUSTER_PREDICTOR_MEDIANS[name]))

    @classmethod
    def from_json(cls, path) -> "GeneratorConfig":
        with open(path, encoding="utf-8") as handle:
            raw = json.load(handle)
        kwargs = {}
        for f in ("n_epics", "seed"):
            if f in raw:
                kwargs[f] = int(raw[f])
        for f in ("noise_sd", "zero_bre_fraction"):
            if f in raw:
                kwargs[f] = float(raw[f])
        for f in ("cluster_weights", "bre_medians", "iteration_range"):
            if f in raw:
                kwargs[f] = tuple(raw[f])
        if "predictor_effects" in raw:
            kwargs["predictor_effects"] = {
                k: tuple(v) for k, v in raw["predictor_effects"].items()
            }
        return cls(**kwargs)

    def to_json_dict(self) -> dict:
        return {
            "n_epics": self.n_epics,
            "cluster_weights": list(self.cluster_weights),
            "noise_sd": self.noise_sd,
            "bre_medians": list(self.bre_medians),
            "zero_bre_fraction": self.zero_bre_fraction,
            "iteration_range": list(self.iteration_range),
            "predictor_effects": {k: list(v) for k, v in self.predictor_effects.items()},
            "seed": self.seed,
        }


@dataclass(frozen=True)
class GroundTruth:
    """Planted labels and parameters; the oracle for clustering tests."""

    labels: Mapping[str, int]                    # epic_id -> cluster in 1..4
    templates: tuple[tuple[float, ...], ...]
    predictor_medians: Mapping[str, tuple[float, ...]]


def pattern_template(cluster: int) -> tuple[float, ...]:
    """Fixed shape curve of one delay pattern; values in [0, 1] with max 1."""
    if not 1 <= cluster <= N_CLUSTERS:
        raise InvalidInputError(f"cluster must lie in [1, 4], got {cluster}")
    return DELAY_TEMPLATES[cluster - 1]


def _validate(config: GeneratorConfig) -> None:
    if config.n_epics < 1:
        raise InvalidInputError("n_epics must be >= 1")
    if len(config.cluster_weights) != N_CLUSTERS:
        raise InvalidInputError("cluster_weights must have 4 entries")
    if abs(sum(config.cluster_weights) - 1.0) > 1e-9:
        raise InvalidInputError("cluster_weights must sum to 1")
    if any(w < 0 for w in config.cluster_weights):
        raise InvalidInputError("cluster_weights must be nonnegative")
    if config.noise_sd < 0:
        raise InvalidInputError("noise_sd must be >= 0")
    if not 0 <= config.zero_bre_fraction < 1:
        raise InvalidInputError("zero_bre_fraction must lie in [0, 1)")
    lo, hi = config.iteration_range
    if lo < 10 or hi < lo:
        raise InvalidInputError("iteration_range must satisfy 10 <= min <= max")
    if config.zero_bre_fraction >= 0.5 and any(m > 0 for m in config.bre_medians):
        raise InvalidInputError(
            "zero_bre_fraction >= 0.5 makes positive cluster medians unreachable"
        )
    for name, medians in config.predictor_effects.items():
        if name not in CLUSTER_PREDICTOR_MEDIANS:
            raise InvalidInputError(f"unknown predictor {name!r} in predictor_effects")
        if len(medians) != N_CLUSTERS:
            raise InvalidInputError(f"predictor_effects[{name!r}] must have 4 entries")


def _beta_mean_for_median(target_median: float, quantile: float) -> float:
    """Mean of a Beta(mu*phi, (1-mu)*phi) whose ``quantile`` equals the target."""

    def gap(mu):
        a = mu * BETA_PRECISION
        b = (1.0 - mu) * BETA_PRECISION
        return stats.beta.ppf(quantile, a, b) - target_median

    return optimize.brentq(gap, 1e-4, 1.0 - 1e-4, xtol=1e-12)


def _cluster_bre_values(
    config: GeneratorConfig, rng, n_c: int, cluster: int
) -> np.ndarray:
    """Sorted signed-BRE targets for one cluster.

    An on-time/early block (signed values in (-0.15, 0], deterministic count)
    is followed by positives at stratified Beta quantile midpoints, so the
    sample median tracks the configured cluster median even for small clusters.
    """
    zf = config.zero_bre_fraction
    n_zero = int(round(zf * n_c))
    n_pos = n_c - n_zero
    values = np.zeros(n_c)
    values[:n_zero] = -np.sort(rng.uniform(0.0, EARLY_BRE_MAX, n_zero))[::-1]
    if n_pos > 0:
        med = config.bre_medians[cluster - 1]
        if med <= 0:
            pos = np.zeros(n_pos)
        else:
            # Quantile level at which the zero-inflated mixture's median falls.
            q_med = (0.5 - zf) / (1.0 - zf)
            mu = _beta_mean_for_median(med, q_med)
            a, b = mu * BETA_PRECISION, (1.0 - mu) * BETA_PRECISION
            levels = (np.arange(n_pos) + 0.5) / n_pos
            pos = stats.beta.ppf(levels, a, b)
        values[n_zero:] = pos
    return values


def _clip_outliers(targets: np.ndarray) -> np.ndarray:
    """Clip the signed-BRE multiset so cleaning's 2-SD rule removes nothing.

    Iterates cap = mean + 1.9*SD to a fixed point; the 0.1-SD margin absorbs
    the day-rounding wobble when targets are realized as calendar dates.
    Only the far right tail is touched, so cluster medians are unaffected.
    """
    clipped = targets.copy()
    for _ in range(200):
        cap = clipped.mean() + 1.9 * clipped.std(ddof=1)
        if not np.any(clipped > cap):
            break
        clipped = np.minimum(clipped, cap)
    return clipped


def _sample_base_predictor(rng, name: str, median: float) -> float:
    if name in RATIO_PREDICTORS:
        logit = np.log(median / (1.0 - median)) + rng.normal(0.0, LOGIT_SD)
        return float(1.0 / (1.0 + np.exp(-logit)))
    return float(median * np.exp(rng.normal(0.0, LOGNORMAL_SD)))


def _drift_predictor(rng, name: str, base: float) -> float:
    if name in RATIO_PREDICTORS:
        logit = np.log(base / (1.0 - base)) + rng.normal(0.0, RATIO_DRIFT_SD)
        return float(1.0 / (1.0 + np.exp(-logit)))
    return float(base * np.exp(rng.normal(0.0, DRIFT_SD)))


def generate(config: GeneratorConfig) -> tuple[Dataset, GroundTruth]:
    """Sample a full synthetic dataset; deterministic given the config."""
    _validate(config)
    rng = np.random.default_rng(config.seed)
    n = config.n_epics

    labels = rng.choice(N_CLUSTERS, size=n, p=np.asarray(config.cluster_weights)) + 1
    lo, hi = config.iteration_range
    sprint_medians = config.cluster_medians("nr_sprints")

    # Per-epic frame: iteration count, sprint length, scale, dates, DSP curve.
    total_iters = np.empty(n, dtype=int)
    sprint_days = rng.integers(7, 22, size=n)
    start_offsets = rng.integers(0, START_SPREAD_DAYS + 1, size=n)
    dsp_scale = np.empty(n, dtype=int)
    milestone_values = np.empty((n, N_MILESTONES))
    for e in range(n):
        t = int(round(sprint_medians[labels[e] - 1] * np.exp(rng.normal(0.0, 0.2))))
        total_iters[e] = min(max(t, lo), hi)
        scale_lo, scale_hi = DSP_SCALE_RANGES[labels[e] - 1]
        dsp_scale[e] = rng.integers(scale_lo, scale_hi + 1)
        template = np.asarray(DELAY_TEMPLATES[labels[e] - 1])
        noisy = template + rng.normal(0.0, config.noise_sd, N_MILESTONES)
        milestone_values[e] = np.clip(noisy, 0.0, None)

    dsp_points = np.rint(milestone_values * dsp_scale[:, None]).astype(int)

    # Assign BRE targets within each cluster by rank of late delayed points:
    # epics still carrying work late in the delivery end up delayed overall.
    bre_targets = np.empty(n)
    propensity = dsp_points[:, LATE_WINDOW].sum(axis=1).astype(float)
    for cluster in range(1, N_CLUSTERS + 1):
        members = np.flatnonzero(labels == cluster)
        if members.size == 0:
            continue
        values = _cluster_bre_values(config, rng, members.size, cluster)
        order = members[np.argsort(propensity[members], kind="stable")]
        bre_targets[order] = values
    bre_targets = _clip_outliers(bre_targets)
    # Severity in [0, 1]: the signal the trouble-coupled predictors reveal.
    positive_max = max(float(bre_targets.max()), 1e-9)
    bre_norm = np.clip(bre_targets, 0.0, None) / positive_max

    epics = []
    predictors: dict[tuple[str, int], PredictorVector] = {}
    for e in range(n):
        epic_id = f"E{e:05d}"
        cluster = labels[e]
        t = int(total_iters[e])
        length = int(sprint_days[e])
        actual_start = BASE_DATE + dt.timedelta(days=int(start_offsets[e]))
        iteration_rows = []
        boundaries = np.array([milestone_boundary(t, j) for j in range(1, N_MILESTONES + 1)])
        carried = np.rint(
            np.interp(np.arange(1, t + 1), boundaries, dsp_points[e])
        ).astype(int)
        carried[boundaries - 1] = dsp_points[e]  # boundary iterations are exact
        for i in range(1, t + 1):
            it_start = actual_start + dt.timedelta(days=(i - 1) * length)
            it_end = it_start + dt.timedelta(days=length - 1)
            completed = int(rng.integers(round(0.5 * dsp_scale[e]), round(1.5 * dsp_scale[e]) + 1))
            iteration_rows.append(
                IterationRecord(
                    index=i,
                    start=it_start,
                    end=it_end,
                    committed_points=completed + int(carried[i - 1]),
                    completed_points=completed,
                    carried_over_points=int(carried[i - 1]),
                )
            )
        actual_end = iteration_rows[-1].end
        actual_days = (actual_end - actual_start).days
        created = actual_start - dt.timedelta(days=int(rng.integers(10, 61)))
        head_start = int(rng.integers(0, 15))
        planned_start = actual_start - dt.timedelta(days=head_start)
        b = bre_targets[e]
        if b > 0:
            planned_span = (actual_days - b * head_start) / (1.0 + b)
            planned_end = actual_start + dt.timedelta(days=int(round(planned_span)))
        else:
            planned_end = actual_end - dt.timedelta(days=int(round(b * actual_days)))
        epics.append(
            EpicRecord(
                epic_id=epic_id,
                status=STATUS_COMPLETED,
                created=created,
                planned_start=planned_start,
                actual_start=actual_start,
                planned_end=planned_end,
                actual_end=actual_end,
                iterations=tuple(iteration_rows),
            )
        )

        base = {
            name: _sample_base_predictor(rng, name, config.cluster_medians(name)[cluster - 1])
            for name in PREDICTOR_NAMES
        }
        base["nr_sprints"] = float(t)
        severity = bre_norm[e]
        for m in range(1, N_MILESTONES + 1):
            w = TROUBLE_FIDELITY[m - 1]
            trouble = w * severity + (1.0 - w) * rng.uniform()
            values = {}
            for name in PREDICTOR_NAMES:
                if name == "nr_sprints":
                    values[name] = float(t)
                    continue
                v = _drift_predictor(rng, name, base[name])
                if name in TROUBLE_COUPLED:
                    v *= 1.0 + TROUBLE_GAIN * 2.0 * trouble
                values[name] = v
            predictors[(epic_id, m)] = PredictorVector.from_mapping(values)

    dataset = Dataset(tuple(epics), predictors)
    truth = GroundTruth(
        labels={f"E{e:05d}": int(labels[e]) for e in range(n)},
        templates=DELAY_TEMPLATES,
        predictor_medians={
            name: config.cluster_medians(name) for name in PREDICTOR_NAMES
        },
    )
    return dataset, truth


def write_ground_truth(truth: GroundTruth, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(
        out / "ground_truth.csv",
        ("epic_id", "true_cluster"),
        ((epic_id, truth.labels[epic_id]) for epic_id in sorted(truth.labels)),
    )


def generate_to_dir(config: GeneratorConfig, out_dir) -> tuple[Dataset, GroundTruth]:
    """Generate and write epics/iterations/predictors/ground_truth CSVs."""
    dataset, truth = generate(config)
    save_dataset(dataset, out_dir)
    write_ground_truth(truth, out_dir)
    return dataset, truth


def load_ground_truth(path) -> dict[str, int]:
    import csv as _csv

    with open(path, newline="", encoding="utf-8") as handle:
        reader = _csv.reader(handle)
        next(reader)
        return {row[0]: int(row[1]) for row in reader if row}
