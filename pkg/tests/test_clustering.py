import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from delaydyn.clustering import (
    ClusterModel,
    DelayProfile,
    UNAVAILABLE,
    characterize_clusters,
    classify_partial,
    dtw_distance,
    dtw_matrix,
    elbow_select_k,
    fit_cluster_model,
    hierarchical_cluster,
    normalize_profile,
    wss,
)
from delaydyn.errors import InsufficientDataError, InvalidInputError

series_strategy = st.lists(
    st.floats(min_value=0.0, max_value=5.0, allow_nan=False, width=32),
    min_size=1,
    max_size=6,
)


def brute_force_dtw(a, b):
    """Minimum cost over every monotone alignment path; the independent oracle."""
    n, m = len(a), len(b)
    best = [np.inf]

    def walk(i, j, cost):
        cost += abs(a[i] - b[j])
        if cost >= best[0]:
            return
        if i == n - 1 and j == m - 1:
            best[0] = cost
            return
        if i + 1 < n:
            walk(i + 1, j, cost)
        if j + 1 < m:
            walk(i, j + 1, cost)
        if i + 1 < n and j + 1 < m:
            walk(i + 1, j + 1, cost)

    walk(0, 0, 0.0)
    return best[0]


def template_profiles(rng, templates, counts, noise=0.0):
    profiles, labels = [], []
    for label, (template, count) in enumerate(zip(templates, counts), start=1):
        for i in range(count):
            values = np.clip(np.asarray(template) + rng.normal(0, noise, 10), 0, None)
            profiles.append(normalize_profile(values, f"E{label}_{i}"))
            labels.append(label)
    return profiles, labels


class TestDtw:
    def test_identity_is_zero(self, rng):
        for _ in range(50):
            s = rng.uniform(0, 1, rng.integers(1, 11))
            assert dtw_distance(s, s) == 0.0

    def test_flat_series_pair(self):
        assert dtw_distance([0, 0, 0], [1, 1, 1]) == pytest.approx(3.0)

    def test_warping_absorbs_repeats(self):
        assert dtw_distance([1, 2, 3], [1, 2, 2, 3]) == pytest.approx(0.0)

    def test_empty_rejected(self):
        with pytest.raises(InvalidInputError):
            dtw_distance([], [1.0])

    def test_matches_brute_force_on_random_pairs(self, rng):
        for _ in range(200):
            a = rng.uniform(0, 2, rng.integers(1, 7))
            b = rng.uniform(0, 2, rng.integers(1, 7))
            assert dtw_distance(a, b) == pytest.approx(brute_force_dtw(a, b), abs=1e-12)

    def test_symmetry_and_nonnegativity(self, rng):
        for _ in range(1000):
            a = rng.uniform(0, 3, rng.integers(1, 8))
            b = rng.uniform(0, 3, rng.integers(1, 8))
            d = dtw_distance(a, b)
            assert d >= 0
            assert d == pytest.approx(dtw_distance(b, a), abs=1e-12)

    def test_batch_matches_scalar(self, rng):
        a = rng.uniform(0, 1, (7, 10))
        b = rng.uniform(0, 1, (5, 10))
        mat = dtw_matrix(a, b)
        for i in range(7):
            for j in range(5):
                assert mat[i, j] == pytest.approx(dtw_distance(a[i], b[j]), abs=1e-12)

    @given(
        a=st.lists(st.floats(0, 5, allow_nan=False, width=32), min_size=1, max_size=5),
        b=st.lists(st.floats(0, 5, allow_nan=False, width=32), min_size=1, max_size=5),
    )
    @settings(max_examples=60, deadline=None)
    def test_brute_force_property(self, a, b):
        assert dtw_distance(a, b) == pytest.approx(brute_force_dtw(a, b), abs=1e-9)


class TestNormalizeProfile:
    def test_divides_by_max(self):
        profile = normalize_profile([2, 4, 8, 0, 0, 0, 0, 0, 0, 0])
        assert profile.values == (0.25, 0.5, 1.0, 0, 0, 0, 0, 0, 0, 0)

    def test_all_zero_stays_zero(self):
        assert normalize_profile([0] * 10).values == (0.0,) * 10

    @given(factor=st.integers(min_value=1, max_value=50))
    def test_scale_invariance(self, factor):
        raw = np.array([2, 4, 8, 1, 0, 3, 5, 7, 6, 2])
        assert normalize_profile(raw).values == normalize_profile(raw * factor).values

    def test_wrong_length_rejected(self):
        with pytest.raises(InvalidInputError):
            normalize_profile([1, 2, 3])


class TestHierarchicalCluster:
    def test_singleton_cut(self, rng):
        profiles, _ = template_profiles(rng, [(i / 10.0,) * 10 for i in range(1, 6)], [1] * 5)
        model = hierarchical_cluster(profiles, k=5)
        assert model.k == 5
        for p in profiles:
            label = model.assignments[p.epic_id]
            assert model.centroids[label - 1] == p.values

    def test_two_well_separated_bundles(self, rng):
        from sklearn.metrics import adjusted_rand_score

        t_low = (0.1, 0.15, 0.1, 0.12, 0.1, 0.14, 0.1, 0.12, 0.1, 1.0)
        t_high = (1.0, 0.9, 0.85, 0.8, 0.7, 0.6, 0.55, 0.5, 0.45, 0.4)
        profiles, labels = template_profiles(rng, [t_low, t_high], [20, 20], noise=0.0)
        model = hierarchical_cluster(profiles, k=2)
        predicted = [model.assignments[p.epic_id] for p in profiles]
        assert adjusted_rand_score(labels, predicted) == 1.0

    def test_recovers_planted_templates(self, rng):
        from sklearn.metrics import adjusted_rand_score

        from delaydyn.synthgen import DELAY_TEMPLATES

        profiles, labels = template_profiles(rng, DELAY_TEMPLATES, [40, 40, 20, 10], noise=0.1)
        model = hierarchical_cluster(profiles, k=4)
        predicted = [model.assignments[p.epic_id] for p in profiles]
        assert adjusted_rand_score(labels, predicted) >= 0.8

    def test_bad_k_rejected(self, rng):
        profiles, _ = template_profiles(rng, [(0.5,) * 10], [4])
        with pytest.raises(InvalidInputError):
            hierarchical_cluster(profiles, k=0)
        with pytest.raises(InvalidInputError):
            hierarchical_cluster(profiles, k=5)

    def test_deterministic_assignments(self, rng):
        from delaydyn.synthgen import DELAY_TEMPLATES

        profiles, _ = template_profiles(rng, DELAY_TEMPLATES, [10, 10, 10, 10], noise=0.1)
        a = hierarchical_cluster(profiles, k=4)
        b = hierarchical_cluster(profiles, k=4)
        assert a.assignments == b.assignments
        assert a.centroids == b.centroids

    def test_assignments_invariant_to_raw_scaling(self, rng):
        from delaydyn.synthgen import DELAY_TEMPLATES

        raws = []
        for label, template in enumerate(DELAY_TEMPLATES):
            for i in range(8):
                raw = np.clip(np.asarray(template) + rng.normal(0, 0.1, 10), 0, None) * 37
                raws.append((f"E{label}_{i}", raw))
        base = hierarchical_cluster([normalize_profile(r, e) for e, r in raws], k=4)
        scaled = hierarchical_cluster(
            [normalize_profile(r * 3, e) for e, r in raws], k=4
        )
        assert base.assignments == scaled.assignments


class TestWssAndElbow:
    def test_wss_zero_at_singletons(self, rng):
        profiles, _ = template_profiles(rng, [(i / 10.0,) * 10 for i in range(1, 7)], [1] * 6)
        model = hierarchical_cluster(profiles, k=6)
        assert wss(model, profiles) == pytest.approx(0.0)

    def test_wss_nonincreasing_in_k(self, rng):
        from delaydyn.synthgen import DELAY_TEMPLATES

        profiles, _ = template_profiles(rng, DELAY_TEMPLATES, [8, 8, 8, 8], noise=0.15)
        values = [wss(hierarchical_cluster(profiles, k=k), profiles) for k in range(1, 9)]
        for earlier, later in zip(values, values[1:]):
            assert later <= earlier + 1e-9

    def test_elbow_needs_three_curve_points(self, rng):
        profiles, _ = template_profiles(rng, [(0.5,) * 10], [8])
        with pytest.raises(InsufficientDataError):
            elbow_select_k(profiles, k_range=[1, 2])

    def test_elbow_selects_four_on_default_synthetic(self):
        from delaydyn.dataset import clean_dataset
        from delaydyn.synthgen import GeneratorConfig, generate

        from delaydyn.clustering import dataset_profiles

        dataset, _ = generate(GeneratorConfig(n_epics=300, seed=11))
        profiles = dataset_profiles(clean_dataset(dataset))
        assert elbow_select_k(profiles) == 4


class TestClassifyPartial:
    def make_model(self, rng):
        from delaydyn.synthgen import DELAY_TEMPLATES

        profiles, _ = template_profiles(rng, DELAY_TEMPLATES, [15, 15, 15, 15], noise=0.05)
        return fit_cluster_model(profiles, k=4)

    def test_single_milestone_unavailable(self, rng):
        model = self.make_model(rng)
        assert classify_partial([5.0], model) == UNAVAILABLE
        assert classify_partial([], model) == UNAVAILABLE
        assert not classify_partial([5.0], model).available

    def test_centroid_prefix_recovers_label(self, rng):
        # Prefix normalization divides by the prefix max, so the shape is
        # preserved exactly once the observed window contains the profile's
        # peak; test each centroid from that point on.
        model = self.make_model(rng)
        for label, centroid in enumerate(model.centroids, start=1):
            peak = int(np.argmax(centroid)) + 1
            for length in range(max(peak, 2), 11):
                prefix = np.asarray(centroid[:length]) * 40
                got = classify_partial(prefix, model)
                assert got.label == label, (label, length)

    def test_prefix_agreement_with_full_series_labels(self, rng):
        from delaydyn.dataset import clean_dataset, dsp_series
        from delaydyn.synthgen import GeneratorConfig, generate

        from delaydyn.clustering import dataset_profiles

        dataset, _ = generate(GeneratorConfig(n_epics=200, seed=13))
        clean = clean_dataset(dataset)
        profiles = dataset_profiles(clean)
        model = fit_cluster_model(profiles, k=4)
        agree = 0
        for epic in clean.epics:
            series = dsp_series(epic)
            label = classify_partial(series[:5], model).label  # milestone 6 view
            agree += label == model.assignments[epic.epic_id]
        assert agree / len(clean.epics) >= 0.7

    def test_too_long_prefix_rejected(self, rng):
        model = self.make_model(rng)
        with pytest.raises(InvalidInputError):
            classify_partial(list(range(11)), model)


class TestCharacterizeClusters:
    def _report(self, assignments, predictor_values, bre, k=2):
        model = ClusterModel(
            k=k,
            assignments=assignments,
            centroids=tuple((0.0,) * 10 for _ in range(k)),
        )
        return characterize_clusters(model, predictor_values, bre)

    def test_identical_distributions_no_stars(self, rng):
        ids = [f"E{i}" for i in range(40)]
        assignments = {e: 1 + (i % 2) for i, e in enumerate(ids)}
        values = {e: {name: 1.0 for name in _PREDICTORS} for e in ids}
        bre = {e: 0.1 for e in ids}
        report = self._report(assignments, values, bre)
        assert not any(any(flags.values()) for flags in report.significant.values())

    def test_planted_shift_is_starred(self, rng):
        from delaydyn.clustering import epic_predictor_medians
        from delaydyn.dataset import clean_dataset
        from delaydyn.synthgen import GeneratorConfig, generate

        config = GeneratorConfig(
            n_epics=200,
            seed=21,
            predictor_effects={"out_degree": (60.0, 3.0, 3.0, 3.0)},
        )
        dataset, truth = generate(config)
        clean = clean_dataset(dataset)
        model = ClusterModel(
            k=4,
            assignments={e: truth.labels[e] for e in clean.epic_ids},
            centroids=tuple((0.0,) * 10 for _ in range(4)),
        )
        outcomes = clean.outcomes()
        report = characterize_clusters(
            model,
            epic_predictor_medians(clean),
            {e: o.bre for e, o in outcomes.items()},
        )
        assert report.significant["out_degree"][1]

    def test_bre_medians_match_targets_on_default_synthetic(self):
        from delaydyn.clustering import dataset_profiles, epic_predictor_medians
        from delaydyn.dataset import clean_dataset
        from delaydyn.synthgen import GeneratorConfig, generate

        dataset, _ = generate(GeneratorConfig(n_epics=400, seed=7))
        clean = clean_dataset(dataset)
        model = fit_cluster_model(dataset_profiles(clean), k=4)
        outcomes = clean.outcomes()
        report = characterize_clusters(
            model,
            epic_predictor_medians(clean),
            {e: o.bre for e, o in outcomes.items()},
        )
        observed = sorted(
            (report.medians["bre"][label] for label in report.labels), reverse=True
        )
        for got, want in zip(observed, (0.23, 0.17, 0.11, 0.09)):
            assert got == pytest.approx(want, abs=0.03)

    def test_small_cluster_excluded_with_warning(self):
        ids = [f"E{i}" for i in range(23)]
        assignments = {e: 1 if i < 20 else 2 for i, e in enumerate(ids)}
        assignments[ids[-1]] = 3  # cluster 3 has a single member
        assignments[ids[-2]] = 2
        assignments[ids[-3]] = 2
        values = {e: {name: float(i) for name in _PREDICTORS} for i, e in enumerate(ids)}
        bre = {e: 0.1 for e in ids}
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            report = self._report(assignments, values, bre, k=3)
        assert 3 not in report.tested_labels
        assert any("excluded" in str(w.message) for w in caught)


from delaydyn.dataset import PREDICTOR_NAMES as _PREDICTORS  # noqa: E402
