import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from delaydyn.dataset import (
    Dataset,
    EpicRecord,
    IterationRecord,
    clean_dataset,
    compute_bre,
    compute_dsp,
    dsp_series,
    load_dataset,
    milestone_boundary,
    save_dataset,
)
from delaydyn.errors import (
    DegenerateDurationError,
    EmptyDatasetError,
    InvalidInputError,
    ParseError,
    ReferentialIntegrityError,
)

from conftest import make_dataset, make_epic, make_iterations


class TestMilestoneBoundary:
    def test_twenty_iterations_first_milestone(self):
        assert milestone_boundary(20, 1) == 2

    def test_eighteen_iterations_sixth_milestone(self):
        assert milestone_boundary(18, 6) == 10

    def test_final_milestone_is_last_iteration(self):
        assert milestone_boundary(10, 10) == 10

    def test_rejects_short_epics_and_bad_milestones(self):
        with pytest.raises(InvalidInputError):
            milestone_boundary(9, 1)
        with pytest.raises(InvalidInputError):
            milestone_boundary(20, 0)
        with pytest.raises(InvalidInputError):
            milestone_boundary(20, 11)

    def test_partitions_timeline_for_all_sizes(self):
        # Boundaries are increasing, cover [1, T], and every window is nonempty.
        for t in range(10, 201):
            bounds = [milestone_boundary(t, j) for j in range(1, 11)]
            assert bounds[-1] == t
            assert bounds[0] >= 1
            assert all(b2 > b1 for b1, b2 in zip(bounds, bounds[1:]))


class TestComputeBre:
    def test_thirty_days_late_on_150_day_plan(self):
        signed, clamped = compute_bre(
            dt.date(2021, 1, 1), dt.date(2021, 5, 31),
            dt.date(2021, 1, 1), dt.date(2021, 6, 30),
        )
        assert signed == pytest.approx(30 / 150)
        assert clamped == pytest.approx(0.2)

    def test_on_time_is_zero(self):
        signed, clamped = compute_bre(
            dt.date(2021, 1, 1), dt.date(2021, 5, 31),
            dt.date(2021, 1, 1), dt.date(2021, 5, 31),
        )
        assert signed == 0.0
        assert clamped == 0.0

    def test_early_delivery_clamps_to_zero(self):
        # 20 days early over a 100-day actual duration.
        signed, clamped = compute_bre(
            dt.date(2021, 1, 1), dt.date(2021, 4, 30),
            dt.date(2021, 1, 1), dt.date(2021, 4, 10),
        )
        assert signed == pytest.approx(-20 / 99)
        assert clamped == 0.0

    def test_degenerate_durations_rejected(self):
        day = dt.date(2021, 1, 1)
        with pytest.raises(DegenerateDurationError):
            compute_bre(day, day, day, day + dt.timedelta(days=5))
        with pytest.raises(DegenerateDurationError):
            compute_bre(day, day + dt.timedelta(days=5), day, day)

    @given(
        planned=st.integers(min_value=10, max_value=400),
        late=st.integers(min_value=-9, max_value=400),
        factor=st.integers(min_value=1, max_value=20),
    )
    def test_scale_free_in_day_units(self, planned, late, factor):
        base = dt.date(2020, 1, 1)
        one = compute_bre(
            base, base + dt.timedelta(days=planned),
            base, base + dt.timedelta(days=planned + late),
        )[0]
        scaled = compute_bre(
            base, base + dt.timedelta(days=planned * factor),
            base, base + dt.timedelta(days=(planned + late) * factor),
        )[0]
        assert scaled == pytest.approx(one, rel=1e-12)


class TestComputeDsp:
    def test_zero_carry_at_boundary(self):
        epic = make_epic(carried=(5, 3, 8, 0, 2, 7, 1, 0, 4, 0))
        assert compute_dsp(epic, 10) == 0

    def test_reads_boundary_iteration_of_window(self):
        carried = [0] * 18
        carried[9] = 13  # iteration 10 = boundary of milestone 6 for T=18
        epic = make_epic(carried=tuple(carried))
        assert compute_dsp(epic, 6) == 13

    def test_full_series_matches_hand_replay(self):
        # Replay the ledger by hand: T=14, boundary(j) = floor(14 j / 10).
        carried = (3, 1, 4, 1, 5, 9, 2, 6, 5, 3, 5, 8, 9, 7)
        epic = make_epic(carried=carried)
        expected = tuple(carried[(14 * j // 10) - 1] for j in range(1, 11))
        assert dsp_series(epic) == expected

    def test_depends_only_on_boundary_iteration(self):
        carried = [2] * 20
        epic_a = make_epic(carried=tuple(carried))
        carried[2] = 17  # iteration 3 is not a boundary for T=20
        epic_b = make_epic(carried=tuple(carried))
        for j in range(1, 11):
            if milestone_boundary(20, j) != 3:
                assert compute_dsp(epic_a, j) == compute_dsp(epic_b, j)


class TestLedgerInvariants:
    def test_carry_cannot_exceed_committed(self):
        with pytest.raises(InvalidInputError):
            IterationRecord(
                index=1,
                start=dt.date(2020, 1, 1),
                end=dt.date(2020, 1, 14),
                committed_points=5,
                completed_points=0,
                carried_over_points=6,
            )

    def test_ledger_must_balance(self):
        with pytest.raises(InvalidInputError):
            IterationRecord(
                index=1,
                start=dt.date(2020, 1, 1),
                end=dt.date(2020, 1, 14),
                committed_points=10,
                completed_points=3,
                carried_over_points=5,
            )

    def test_overlapping_iterations_rejected(self):
        iters = list(make_iterations((1, 2)))
        bad = IterationRecord(
            index=2,
            start=iters[0].end,  # starts on the predecessor's last day
            end=iters[0].end + dt.timedelta(days=13),
            committed_points=2,
            completed_points=0,
            carried_over_points=2,
        )
        with pytest.raises(InvalidInputError):
            EpicRecord(
                epic_id="X",
                status="Completed",
                created=dt.date(2019, 12, 1),
                planned_start=dt.date(2020, 1, 1),
                actual_start=dt.date(2020, 1, 1),
                planned_end=dt.date(2020, 12, 1),
                actual_end=dt.date(2020, 12, 1),
                iterations=(iters[0], bad),
            )


class TestCleanDataset:
    def test_removes_short_epics(self):
        short = make_epic(epic_id="SHORT", carried=(1,) * 8)
        keep = make_epic(epic_id="KEEP")
        cleaned = clean_dataset(make_dataset([short, keep]))
        assert cleaned.epic_ids == ("KEEP",)

    def test_removes_non_completed_and_missing_dates(self):
        other = make_epic(epic_id="OTHER", status="Other")
        undated = make_epic(epic_id="UNDATED")
        undated = EpicRecord(
            epic_id="UNDATED",
            status="Completed",
            created=undated.created,
            planned_start=undated.planned_start,
            actual_start=undated.actual_start,
            planned_end=None,
            actual_end=undated.actual_end,
            iterations=undated.iterations,
        )
        keep = make_epic(epic_id="KEEP")
        cleaned = clean_dataset(make_dataset([other, undated, keep]))
        assert cleaned.epic_ids == ("KEEP",)

    def test_identity_on_already_clean_input(self):
        epics = [
            make_epic(epic_id=f"E{i}", start=dt.date(2020, 1, 1) + dt.timedelta(days=30 * i))
            for i in range(6)
        ]
        ds = make_dataset(epics)
        once = clean_dataset(ds)
        assert once.epic_ids == ds.epic_ids
        twice = clean_dataset(once)
        assert twice.epic_ids == once.epic_ids
        assert twice.predictors == once.predictors

    def test_outlier_beyond_two_sd_removed(self):
        # Seven on-time epics and one 3-SD-plus outlier, built by hand:
        # signed BREs (0.0 x7, 1.0): mean 0.125, sd 0.3536, so the outlier
        # deviates 2.47 SD and every on-time epic only 0.35 SD.
        start = dt.date(2020, 1, 1)
        epics = []
        for i in range(7):
            epics.append(make_epic(epic_id=f"OK{i}", start=start + dt.timedelta(days=10 * i)))
        late = make_epic(epic_id="LATE", start=start)
        duration = (late.actual_end - late.actual_start).days
        late = EpicRecord(
            epic_id="LATE",
            status="Completed",
            created=late.created,
            planned_start=late.planned_start,
            actual_start=late.actual_start,
            planned_end=late.actual_start + dt.timedelta(days=duration // 2),
            actual_end=late.actual_end,
            iterations=late.iterations,
        )
        ds = make_dataset(epics + [late])
        cleaned = clean_dataset(ds)
        assert "LATE" not in cleaned.epic_ids
        assert len(cleaned.epic_ids) == 7

    def test_empty_result_is_an_error(self):
        with pytest.raises(EmptyDatasetError):
            clean_dataset(make_dataset([make_epic(status="Other")]))


class TestLoadSaveRoundTrip:
    def test_round_trip_preserves_values(self, tmp_path):
        from delaydyn.synthgen import GeneratorConfig, generate

        dataset, _ = generate(GeneratorConfig(n_epics=12, seed=42))
        save_dataset(dataset, tmp_path)
        loaded = load_dataset(
            tmp_path / "epics.csv", tmp_path / "iterations.csv", tmp_path / "predictors.csv"
        )
        assert loaded.epic_ids == dataset.epic_ids
        for a, b in zip(loaded.epics, dataset.epics):
            assert a == b
        assert loaded.predictors == dataset.predictors

    def test_dangling_iteration_epic_id(self, tmp_path):
        ds = make_dataset([make_epic(epic_id="E1")])
        save_dataset(ds, tmp_path)
        with open(tmp_path / "iterations.csv", "a", encoding="utf-8") as fh:
            fh.write("GHOST,1,2020-01-01,2020-01-14,5,5,0\n")
        with pytest.raises(ReferentialIntegrityError):
            load_dataset(
                tmp_path / "epics.csv", tmp_path / "iterations.csv", tmp_path / "predictors.csv"
            )

    def test_malformed_row_names_file_and_line(self, tmp_path):
        ds = make_dataset([make_epic(epic_id="E1")])
        save_dataset(ds, tmp_path)
        with open(tmp_path / "epics.csv", "a", encoding="utf-8") as fh:
            fh.write("E2,Completed,not-a-date,2020-01-01,2020-01-01,2020-06-01,2020-06-01\n")
        with pytest.raises(ParseError) as exc:
            load_dataset(
                tmp_path / "epics.csv", tmp_path / "iterations.csv", tmp_path / "predictors.csv"
            )
        assert "epics.csv" in str(exc.value)
        assert ":3:" in str(exc.value)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError):
            load_dataset(tmp_path / "nope.csv", tmp_path / "nope2.csv", tmp_path / "nope3.csv")


class TestDatasetContainer:
    def test_snapshot_gap_raises(self):
        ds = Dataset((make_epic(epic_id="E1"),), {})
        from delaydyn.errors import DataGapError

        with pytest.raises(DataGapError):
            ds.snapshot("E1", 3)

    def test_outcome_bre_clamped_nonnegative(self):
        ds = make_dataset([make_epic(epic_id="E1")])
        outcome = ds.outcomes()["E1"]
        assert outcome.bre == max(outcome.bre_signed, 0.0)
        assert 0 <= outcome.bre < 1
