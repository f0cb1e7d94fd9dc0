import datetime as dt

import numpy as np
import pytest

from delaydyn.dataset import (
    Dataset,
    EpicRecord,
    IterationRecord,
    PREDICTOR_NAMES,
    PredictorVector,
)


def make_iterations(carried, start=dt.date(2020, 1, 1), length=14, completed=30):
    """Ledger with the given carry-over sequence; committed balances it."""
    rows = []
    for i, c in enumerate(carried, start=1):
        it_start = start + dt.timedelta(days=(i - 1) * length)
        rows.append(
            IterationRecord(
                index=i,
                start=it_start,
                end=it_start + dt.timedelta(days=length - 1),
                committed_points=completed + c,
                completed_points=completed,
                carried_over_points=c,
            )
        )
    return tuple(rows)


def make_epic(
    epic_id="E1",
    carried=(5, 3, 8, 0, 2, 7, 1, 0, 4, 6),
    status="Completed",
    start=dt.date(2020, 1, 1),
    planned_end=None,
    actual_end=None,
    length=14,
):
    iterations = make_iterations(carried, start=start, length=length)
    actual_end = actual_end or iterations[-1].end
    planned_end = planned_end or actual_end
    return EpicRecord(
        epic_id=epic_id,
        status=status,
        created=start - dt.timedelta(days=30),
        planned_start=start,
        actual_start=start,
        planned_end=planned_end,
        actual_end=actual_end,
        iterations=iterations,
    )


def default_predictors(**overrides):
    values = {name: 1.0 for name in PREDICTOR_NAMES}
    for name in ("stability_ratio", "hist_performance", "security_level"):
        values[name] = 0.5
    values.update(overrides)
    return PredictorVector.from_mapping(values)


def make_dataset(epics, predictors=None):
    if predictors is None:
        predictors = {
            (e.epic_id, m): default_predictors()
            for e in epics
            for m in range(1, 11)
        }
    return Dataset(tuple(epics), predictors)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
