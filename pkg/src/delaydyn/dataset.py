"""Backlog dataset schema, ingestion, cleaning, and outcome math.

An epic is an ordered ledger of iterations plus per-milestone predictor
snapshots. Its timeline is divided into 10 completion-rate milestones;
overall delay is summarized as a balanced relative error (BRE) and
intermediate delay as the story points carried over at each milestone
boundary (DSP).

All types are immutable after construction and all operations are pure.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, fields
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import (
    DataGapError,
    DegenerateDurationError,
    EmptyDatasetError,
    InvalidInputError,
    ParseError,
    ReferentialIntegrityError,
)

N_MILESTONES = 10
MIN_ITERATIONS = 10
STATUS_COMPLETED = "Completed"

PREDICTOR_NAMES = (
    "out_degree",
    "changed_leads",
    "stability_ratio",
    "dev_age_ing",
    "team_existence",
    "hist_performance",
    "dev_workload",
    "nr_incidents",
    "unplanned_stories",
    "nr_stories",
    "nr_sprints",
    "team_size",
    "security_level",
)
RATIO_PREDICTORS = frozenset({"stability_ratio", "hist_performance", "security_level"})

EPICS_HEADER = (
    "epic_id",
    "status",
    "created",
    "planned_start",
    "actual_start",
    "planned_end",
    "actual_end",
)
ITERATIONS_HEADER = (
    "epic_id",
    "index",
    "start",
    "end",
    "committed_points",
    "completed_points",
    "carried_over_points",
)
PREDICTORS_HEADER = ("epic_id", "milestone") + PREDICTOR_NAMES


@dataclass(frozen=True)
class IterationRecord:
    """One sprint's story-point ledger. Points not completed are carried over."""

    index: int
    start: dt.date
    end: dt.date
    committed_points: int
    completed_points: int
    carried_over_points: int

    def __post_init__(self):
        if self.index < 1:
            raise InvalidInputError(f"iteration index must be >= 1, got {self.index}")
        if self.end < self.start:
            raise InvalidInputError(f"iteration {self.index}: end before start")
        for name in ("committed_points", "completed_points", "carried_over_points"):
            if getattr(self, name) < 0:
                raise InvalidInputError(f"iteration {self.index}: negative {name}")
        if self.carried_over_points > self.committed_points:
            raise InvalidInputError(
                f"iteration {self.index}: carried over exceeds committed"
            )
        if self.completed_points + self.carried_over_points != self.committed_points:
            raise InvalidInputError(
                f"iteration {self.index}: ledger does not balance "
                f"({self.completed_points} + {self.carried_over_points} "
                f"!= {self.committed_points})"
            )


@dataclass(frozen=True)
class EpicRecord:
    """One epic's dates, status, and iteration ledger."""

    epic_id: str
    status: str
    created: Optional[dt.date]
    planned_start: Optional[dt.date]
    actual_start: Optional[dt.date]
    planned_end: Optional[dt.date]
    actual_end: Optional[dt.date]
    iterations: tuple[IterationRecord, ...] = ()

    def __post_init__(self):
        if self.planned_start and self.planned_end and self.planned_start > self.planned_end:
            raise InvalidInputError(f"{self.epic_id}: planned_start after planned_end")
        if self.actual_start and self.actual_end and self.actual_start > self.actual_end:
            raise InvalidInputError(f"{self.epic_id}: actual_start after actual_end")
        prev = None
        for it in self.iterations:
            if prev is not None:
                if it.index != prev.index + 1:
                    raise InvalidInputError(
                        f"{self.epic_id}: iteration indexes not consecutive "
                        f"({prev.index} -> {it.index})"
                    )
                if it.start <= prev.end:
                    raise InvalidInputError(
                        f"{self.epic_id}: iteration {it.index} overlaps predecessor"
                    )
            elif it.index != 1:
                raise InvalidInputError(f"{self.epic_id}: first iteration index != 1")
            prev = it

    @property
    def n_iterations(self) -> int:
        return len(self.iterations)

    def has_all_dates(self) -> bool:
        return None not in (
            self.created,
            self.planned_start,
            self.actual_start,
            self.planned_end,
            self.actual_end,
        )


@dataclass(frozen=True)
class PredictorVector:
    """The 13 predictor values observed at one (epic, milestone)."""

    out_degree: float
    changed_leads: float
    stability_ratio: float
    dev_age_ing: float
    team_existence: float
    hist_performance: float
    dev_workload: float
    nr_incidents: float
    unplanned_stories: float
    nr_stories: float
    nr_sprints: float
    team_size: float
    security_level: float

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not np.isfinite(v) or v < 0:
                raise InvalidInputError(f"predictor {f.name} must be finite and >= 0")
            if f.name in RATIO_PREDICTORS and v > 1:
                raise InvalidInputError(f"predictor {f.name} must lie in [0, 1]")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PREDICTOR_NAMES], dtype=float)

    @classmethod
    def from_mapping(cls, values: Mapping[str, float]) -> "PredictorVector":
        return cls(**{n: float(values[n]) for n in PREDICTOR_NAMES})


@dataclass(frozen=True)
class MilestoneSnapshot:
    """Predictor values plus raw DSP at one (epic, milestone)."""

    epic_id: str
    milestone: int
    predictors: PredictorVector
    dsp_raw: int


@dataclass(frozen=True)
class EpicOutcome:
    """Per-epic modeling targets: signed/clamped BRE and the DSP series."""

    epic_id: str
    bre_signed: float
    bre: float
    dsp_series: tuple[int, ...]


def milestone_boundary(total_iterations: int, milestone: int) -> int:
    """Last completed iteration of a milestone's time frame.

    Milestone j of an epic with T iterations ends at iteration floor(j*T/10),
    so milestone j covers iterations (boundary(j-1), boundary(j)] and
    boundary(10) == T.
    """
    if total_iterations < MIN_ITERATIONS:
        raise InvalidInputError(
            f"need at least {MIN_ITERATIONS} iterations, got {total_iterations}"
        )
    if not 1 <= milestone <= N_MILESTONES:
        raise InvalidInputError(f"milestone must lie in [1, 10], got {milestone}")
    return milestone * total_iterations // N_MILESTONES


def compute_bre(
    planned_start: dt.date,
    planned_end: dt.date,
    actual_start: dt.date,
    actual_end: dt.date,
) -> tuple[float, float]:
    """Balanced relative error of the schedule, signed and clamped at 0.

    Late deliveries are normalized by the planned duration, early ones by
    the actual duration; the clamped value is the modeling target.
    """
    planned_days = (planned_end - planned_start).days
    actual_days = (actual_end - actual_start).days
    if planned_days <= 0:
        raise DegenerateDurationError("planned duration must be positive")
    if actual_days <= 0:
        raise DegenerateDurationError("actual duration must be positive")
    deviation = (actual_end - planned_end).days
    if deviation >= 0:
        signed = deviation / planned_days
    else:
        signed = deviation / actual_days
    return signed, max(signed, 0.0)


def compute_dsp(epic: EpicRecord, milestone: int) -> int:
    """Story points carried over at a milestone's boundary iteration.

    Reads the carry-over ledger of iteration milestone_boundary(T, j);
    not cumulative across milestones.
    """
    boundary = milestone_boundary(epic.n_iterations, milestone)
    return epic.iterations[boundary - 1].carried_over_points


def dsp_series(epic: EpicRecord) -> tuple[int, ...]:
    return tuple(compute_dsp(epic, j) for j in range(1, N_MILESTONES + 1))


def epic_outcome(epic: EpicRecord) -> EpicOutcome:
    signed, clamped = compute_bre(
        epic.planned_start, epic.planned_end, epic.actual_start, epic.actual_end
    )
    return EpicOutcome(epic.epic_id, signed, clamped, dsp_series(epic))


@dataclass(frozen=True)
class Dataset:
    """Epics plus their per-milestone predictor vectors.

    ``predictors`` is keyed by (epic_id, milestone). A freshly loaded dataset
    may violate cleaning invariants; pass it through :func:`clean_dataset`
    before modeling.
    """

    epics: tuple[EpicRecord, ...]
    predictors: Mapping[tuple[str, int], PredictorVector]

    def __post_init__(self):
        by_id = {e.epic_id: e for e in self.epics}
        if len(by_id) != len(self.epics):
            raise InvalidInputError("duplicate epic_id in dataset")
        object.__setattr__(self, "_by_id", by_id)

    @property
    def epic_ids(self) -> tuple[str, ...]:
        return tuple(e.epic_id for e in self.epics)

    def epic(self, epic_id: str) -> EpicRecord:
        try:
            return self._by_id[epic_id]
        except KeyError:
            raise DataGapError(f"unknown epic {epic_id!r}") from None

    def snapshot(self, epic_id: str, milestone: int) -> MilestoneSnapshot:
        key = (epic_id, milestone)
        if key not in self.predictors:
            raise DataGapError(f"no snapshot for epic {epic_id!r} milestone {milestone}")
        return MilestoneSnapshot(
            epic_id=epic_id,
            milestone=milestone,
            predictors=self.predictors[key],
            dsp_raw=compute_dsp(self.epic(epic_id), milestone),
        )

    def outcomes(self) -> dict[str, EpicOutcome]:
        return {e.epic_id: epic_outcome(e) for e in self.epics}

    def subset(self, epic_ids: Iterable[str]) -> "Dataset":
        wanted = set(epic_ids)
        epics = tuple(e for e in self.epics if e.epic_id in wanted)
        predictors = {k: v for k, v in self.predictors.items() if k[0] in wanted}
        return Dataset(epics, predictors)


def clean_dataset(dataset: Dataset) -> Dataset:
    """Apply the cleaning filters and the one-shot 2-SD outlier pass.

    Drops epics that are not Completed, lack any of the five dates, or have
    fewer than 10 iterations; then removes epics whose signed BRE deviates
    more than two sample standard deviations from the mean of the survivors.
    """
    kept = [
        e
        for e in dataset.epics
        if e.status == STATUS_COMPLETED
        and e.has_all_dates()
        and e.n_iterations >= MIN_ITERATIONS
    ]
    if len(kept) >= 2:
        signed = np.array(
            [
                compute_bre(e.planned_start, e.planned_end, e.actual_start, e.actual_end)[0]
                for e in kept
            ]
        )
        mean = signed.mean()
        sd = signed.std(ddof=1)
        keep_mask = np.abs(signed - mean) <= 2 * sd
        kept = [e for e, ok in zip(kept, keep_mask) if ok]
    if not kept:
        raise EmptyDatasetError("no epics survive cleaning")
    ids = {e.epic_id for e in kept}
    predictors = {k: v for k, v in dataset.predictors.items() if k[0] in ids}
    return Dataset(tuple(kept), predictors)


# --- CSV ingestion -----------------------------------------------------------

def _parse_date(text: str) -> Optional[dt.date]:
    if text == "":
        return None
    return dt.date.fromisoformat(text)


def _check_header(path, header: Sequence[str], expected: Sequence[str]):
    if tuple(header) != tuple(expected):
        raise ParseError(path, 1, f"expected header {','.join(expected)}")


def _read_rows(path, expected_header: Sequence[str]):
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ParseError(path, 0, f"cannot open: {exc}") from exc
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(path, 1, "empty file") from None
        _check_header(path, header, expected_header)
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected_header):
                raise ParseError(path, line_no, f"expected {len(expected_header)} fields")
            yield line_no, row


def load_dataset(epics_path, iterations_path, predictors_path) -> Dataset:
    """Parse and referentially join the three CSV tables.

    Every iteration and predictor row must reference an epic from epics.csv;
    malformed rows raise :class:`ParseError` naming the file and line.
    """
    raw_epics: dict[str, tuple[int, list]] = {}
    for line_no, row in _read_rows(epics_path, EPICS_HEADER):
        epic_id = row[0]
        if epic_id in raw_epics:
            raise ParseError(epics_path, line_no, f"duplicate epic_id {epic_id!r}")
        try:
            dates = [_parse_date(x) for x in row[2:7]]
        except ValueError as exc:
            raise ParseError(epics_path, line_no, str(exc)) from exc
        raw_epics[epic_id] = (line_no, [row[1], *dates])

    iterations: dict[str, list[IterationRecord]] = {e: [] for e in raw_epics}
    for line_no, row in _read_rows(iterations_path, ITERATIONS_HEADER):
        epic_id = row[0]
        if epic_id not in raw_epics:
            raise ReferentialIntegrityError(
                f"{iterations_path}:{line_no}: iteration references unknown epic {epic_id!r}"
            )
        try:
            record = IterationRecord(
                index=int(row[1]),
                start=_parse_date(row[2]),
                end=_parse_date(row[3]),
                committed_points=int(row[4]),
                completed_points=int(row[5]),
                carried_over_points=int(row[6]),
            )
        except (ValueError, TypeError) as exc:
            raise ParseError(iterations_path, line_no, str(exc)) from exc
        iterations[epic_id].append(record)

    predictors: dict[tuple[str, int], PredictorVector] = {}
    for line_no, row in _read_rows(predictors_path, PREDICTORS_HEADER):
        epic_id = row[0]
        if epic_id not in raw_epics:
            raise ReferentialIntegrityError(
                f"{predictors_path}:{line_no}: predictors reference unknown epic {epic_id!r}"
            )
        try:
            milestone = int(row[1])
            if not 1 <= milestone <= N_MILESTONES:
                raise ValueError(f"milestone {milestone} outside [1, 10]")
            vector = PredictorVector(*(float(x) for x in row[2:]))
        except ValueError as exc:
            raise ParseError(predictors_path, line_no, str(exc)) from exc
        key = (epic_id, milestone)
        if key in predictors:
            raise ParseError(
                predictors_path, line_no, f"duplicate snapshot for {epic_id!r} milestone {milestone}"
            )
        predictors[key] = vector

    epics = []
    for epic_id, (line_no, (status, *dates)) in raw_epics.items():
        its = sorted(iterations[epic_id], key=lambda r: r.index)
        try:
            epics.append(EpicRecord(epic_id, status, *dates, iterations=tuple(its)))
        except InvalidInputError as exc:
            raise ParseError(epics_path, line_no, str(exc)) from exc
    return Dataset(tuple(epics), predictors)


# --- CSV emission ------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    if value is None:
        return ""
    if isinstance(value, dt.date):
        return value.isoformat()
    return str(value)


def _write_csv(path, header: Sequence[str], rows: Iterable[Sequence]):
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def save_dataset(dataset: Dataset, out_dir) -> None:
    """Write epics.csv, iterations.csv and predictors.csv under ``out_dir``."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(
        out / "epics.csv",
        EPICS_HEADER,
        (
            (e.epic_id, e.status, e.created, e.planned_start, e.actual_start,
             e.planned_end, e.actual_end)
            for e in dataset.epics
        ),
    )
    _write_csv(
        out / "iterations.csv",
        ITERATIONS_HEADER,
        (
            (e.epic_id, it.index, it.start, it.end, it.committed_points,
             it.completed_points, it.carried_over_points)
            for e in dataset.epics
            for it in e.iterations
        ),
    )
    _write_csv(
        out / "predictors.csv",
        PREDICTORS_HEADER,
        (
            (epic_id, milestone, *dataset.predictors[(epic_id, milestone)].as_array())
            for epic_id in dataset.epic_ids
            for milestone in range(1, N_MILESTONES + 1)
            if (epic_id, milestone) in dataset.predictors
        ),
    )


def load_dataset_dir(data_dir) -> Dataset:
    from pathlib import Path

    d = Path(data_dir)
    return load_dataset(d / "epics.csv", d / "iterations.csv", d / "predictors.csv")
