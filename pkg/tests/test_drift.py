"""Tests for drift splits, drift indicators and their ROC evaluation"""

import numpy as np
import pytest
from scipy.optimize import minimize as scipy_minimize

from gbmap.boosting import FitConfig
from gbmap.data import Dataset, gen_drift_fixture, preprocess
from gbmap.drift import (
    euclid_indicator,
    euclid_indicators,
    fit_score_model,
    gbmap_indicator,
    gbmap_indicators,
    ground_truth_loss,
    ground_truth_losses,
    label_and_score,
    make_drift_split,
    roc_curve,
    run_drift_experiment,
)
from gbmap.ensemble import GbmapModel
from gbmap.errors import InvalidArgumentError, InvalidStateError
from gbmap.models import TaskKind, WeakLearner
from gbmap.neighbors import EmbeddingMetric, knn_regress
from gbmap.optimizer import OptimizerConfig
from tests.helpers import make_dataset, random_model, with_intercept

SMALL = FitConfig(m=3, optimizer=OptimizerConfig(max_iterations=100))


@pytest.fixture
def step_data():
    """y is a step in x1 only; x2 and x3 are noise"""
    rng = np.random.default_rng(3)
    x = rng.normal(size=(200, 3))
    y = (x[:, 0] > 0).astype(float)
    raw = Dataset(x=x, y=y, feature_names=("x1", "x2", "x3"), task=TaskKind.REGRESSION)
    return preprocess(raw)[0]


def test_split_picks_the_determining_feature(step_data):
    split = make_drift_split(step_data, SMALL, seed=0)
    assert split.dropped_feature == "x1"
    assert split.drift_magnitude > 0
    assert split.drift_magnitude == max(split.feature_magnitudes.values())
    assert set(split.feature_magnitudes) == {"x1", "x2", "x3"}


def test_split_parts(step_data):
    """a1, a2, b are disjoint, cover the data, and a1/a2 halve the low half"""
    split = make_drift_split(step_data, SMALL, seed=0)
    rows = np.concatenate([split.a1_rows, split.a2_rows, split.b_rows])
    assert sorted(rows.tolist()) == list(range(step_data.n))
    assert abs(split.a1.n - split.a2.n) <= 1
    assert split.b.n == step_data.n - step_data.n // 2
    for part in (split.a1, split.a2, split.b):
        assert split.dropped_feature not in part.feature_names
        assert part.p == step_data.p - 1

    column = step_data.feature_names.index(split.dropped_feature)
    low = step_data.x[np.concatenate([split.a1_rows, split.a2_rows]), column]
    assert low.max() <= step_data.x[split.b_rows, column].min()


def test_split_is_deterministic(step_data):
    first = make_drift_split(step_data, SMALL, seed=4)
    second = make_drift_split(step_data, SMALL, seed=4)
    np.testing.assert_array_equal(first.a1_rows, second.a1_rows)
    np.testing.assert_array_equal(first.b_rows, second.b_rows)
    assert first.drift_magnitude == second.drift_magnitude


def test_split_on_pure_noise_target():
    rng = np.random.default_rng(8)
    raw = Dataset(
        x=rng.normal(size=(400, 2)), y=rng.normal(size=400),
        feature_names=("x1", "x2"), task=TaskKind.REGRESSION,
    )
    split = make_drift_split(preprocess(raw)[0], FitConfig(m=2), seed=0)
    assert np.isfinite(split.drift_magnitude)
    assert abs(split.drift_magnitude) < 0.6


def test_split_preconditions(rng):
    tiny = make_dataset(with_intercept(rng.normal(size=(7, 2))), rng.normal(size=7))
    with pytest.raises(InvalidArgumentError):
        make_drift_split(tiny, SMALL)
    narrow = make_dataset(with_intercept(rng.normal(size=(20, 1))), rng.normal(size=20))
    with pytest.raises(InvalidArgumentError):
        make_drift_split(narrow, SMALL)


def _constant_model(value, p):
    return GbmapModel(
        learners=(WeakLearner(a=value - np.log(2), b=1, w=(0.0,) * p),),
        beta=1.0,
        task=TaskKind.REGRESSION,
        p=p,
    )


def test_gbmap_indicator_zero_where_model_is_locally_exact(rng):
    train = make_dataset(with_intercept(rng.normal(size=(20, 2))), np.full(20, 3.0))
    model = _constant_model(3.0, 3)
    assert gbmap_indicator(model, train, train.x[4]) == pytest.approx(0.0, abs=1e-12)


def test_gbmap_indicator_grows_along_a_ray():
    """Moving away from the training range increases the indicator"""
    model = GbmapModel(
        learners=(WeakLearner(a=0.0, b=1, w=(1.0, 0.0)),),
        beta=1.0,
        task=TaskKind.REGRESSION,
        p=2,
    )
    x = with_intercept(np.linspace(-1, 1, 41)[:, None])
    train = make_dataset(x, model.predict(x))
    values = [gbmap_indicator(model, train, np.array([t, 1.0])) for t in (2.0, 4.0, 8.0, 16.0)]
    assert all(b > a for a, b in zip(values, values[1:]))


def test_gbmap_indicator_matches_composition(rng):
    """|f(x) - kNN mean of targets in embedding space|"""
    train = make_dataset(with_intercept(rng.normal(size=(40, 3))), rng.normal(size=40))
    model = random_model(rng, p=4, m=5)
    points = rng.normal(size=(6, 4))
    expected = np.abs(
        model.predict(points) - knn_regress(train, EmbeddingMetric(model), points, k=5)
    )
    np.testing.assert_allclose(gbmap_indicators(model, train, points, k=5), expected)


def test_gbmap_indicator_uses_scores_for_classification(rng):
    x = with_intercept(rng.normal(size=(30, 2)))
    train = make_dataset(x, rng.choice([-1.0, 1.0], size=30), TaskKind.CLASSIFICATION)
    model = random_model(rng, p=3, m=3, task=TaskKind.CLASSIFICATION)
    point = rng.normal(size=3)
    index = np.argsort(model.embedding_distance(np.tile(point, (30, 1)), x), kind="stable")[:4]
    expected = abs(model.predict(point) - model.predict(x)[index].mean())
    assert gbmap_indicator(model, train, point, k=4) == pytest.approx(expected)


def test_euclid_indicator(rng):
    cluster = np.tile([0.5, -0.5, 1.0], (5, 1))
    others = with_intercept(rng.normal(3.0, 1.0, size=(10, 2)))
    train = make_dataset(np.vstack([cluster, others]), np.zeros(15))
    assert euclid_indicator(train, np.array([0.5, -0.5, 1.0]), k=5) == 0.0
    assert euclid_indicator(train, train.x[9], k=1) == 0.0

    point = rng.normal(size=3)
    distances = np.sort(np.linalg.norm(train.x - point, axis=1))
    assert euclid_indicator(train, point, k=4) == pytest.approx(distances[3])
    np.testing.assert_allclose(
        euclid_indicators(train, np.vstack([point, point]), k=2), distances[1]
    )


def test_ground_truth_losses(rng):
    x = with_intercept(rng.normal(size=(10, 2)))
    model = random_model(rng, p=3, m=2)
    exact = make_dataset(x, model.predict(x))
    np.testing.assert_allclose(ground_truth_losses(model, exact), 0.0, atol=1e-24)
    assert ground_truth_loss(model, x[0], float(model.predict(x[0])) + 2.0) == pytest.approx(4.0)


def test_ground_truth_losses_for_classification(rng):
    x = with_intercept(rng.normal(size=(10, 2)))
    model = random_model(rng, p=3, m=2, task=TaskKind.CLASSIFICATION)
    data = make_dataset(x, rng.choice([-1.0, 1.0], size=10), TaskKind.CLASSIFICATION)
    np.testing.assert_allclose(ground_truth_losses(model, data, model, score_x=x), 0.0)
    assert ground_truth_loss(model, x[0], 1.0, model, score_x=x[0]) == pytest.approx(0.0)
    with pytest.raises(InvalidStateError):
        ground_truth_losses(model, data)
    with pytest.raises(InvalidStateError):
        ground_truth_loss(model, x[0], 1.0)


def test_classification_losses_need_score_rows(rng):
    """The score model sees the dropped feature, so its rows are never inferred"""
    full = with_intercept(rng.normal(size=(10, 3)))
    reduced = np.delete(full, 1, axis=1)
    model = random_model(rng, p=3, m=2, task=TaskKind.CLASSIFICATION)
    score_model = random_model(rng, p=4, m=2, task=TaskKind.CLASSIFICATION)
    data = make_dataset(reduced, rng.choice([-1.0, 1.0], size=10), TaskKind.CLASSIFICATION)
    with pytest.raises(InvalidStateError, match="score_x"):
        ground_truth_losses(model, data, score_model)
    with pytest.raises(InvalidStateError, match="score_x"):
        ground_truth_loss(model, reduced[0], 1.0, score_model)
    expected = (score_model.predict(full) - model.predict(reduced)) ** 2
    np.testing.assert_allclose(ground_truth_losses(model, data, score_model, full), expected)


def test_score_model_is_logistic_regression(rng):
    x = with_intercept(rng.normal(size=(200, 2)))
    logits = x @ [1.0, -2.0, 0.3]
    y = np.where(rng.random(200) < 1 / (1 + np.exp(-logits)), 1.0, -1.0)
    data = make_dataset(x, y, TaskKind.CLASSIFICATION)
    score = fit_score_model(data)
    ours = float(np.mean(np.logaddexp(0.0, -y * score.predict(x))))
    oracle = scipy_minimize(
        lambda w: float(np.mean(np.logaddexp(0.0, -y * (x @ w)))),
        np.zeros(3),
        method="BFGS",
        options={"gtol": 1e-9},
    )
    assert ours == pytest.approx(oracle.fun, abs=1e-4)

    with pytest.raises(InvalidArgumentError):
        fit_score_model(make_dataset(x, rng.normal(size=200)))


def test_roc_curve_endpoints_and_monotonicity(rng):
    indicators = rng.normal(size=50)
    labels = rng.random(50) < 0.3
    thresholds, fpr, tpr = roc_curve(indicators, labels)
    assert thresholds[0] == np.inf
    assert (fpr[0], tpr[0]) == (0.0, 0.0)
    assert (fpr[-1], tpr[-1]) == (1.0, 1.0)
    assert np.all(np.diff(fpr) >= 0) and np.all(np.diff(tpr) >= 0)
    assert np.all(np.diff(thresholds) < 0)


def test_perfect_indicator_has_unit_auc(rng):
    losses = rng.exponential(size=300)
    report = label_and_score(losses, losses, losses[:100])
    assert report.auc == pytest.approx(1.0)
    assert not report.auc_undefined
    area = np.trapezoid([p.tpr for p in report.roc], [p.fpr for p in report.roc])
    assert report.auc == pytest.approx(area)


def test_random_indicator_auc_near_half():
    aucs = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        losses = rng.exponential(size=1000)
        report = label_and_score(rng.permutation(losses), losses, losses[:500])
        aucs.append(report.auc)
    assert abs(np.mean(aucs) - 0.5) < 0.1


def test_auc_invariant_to_monotone_transform(rng):
    indicators = rng.normal(size=200)
    losses = indicators + rng.normal(size=200)
    first = label_and_score(indicators, losses, losses[:100])
    second = label_and_score(np.exp(indicators), losses, losses[:100])
    assert first.auc == pytest.approx(second.auc)


def test_quantile_labels_five_percent_of_in_distribution(rng):
    losses = rng.exponential(size=1000)
    report = label_and_score(rng.normal(size=1000), losses, losses)
    assert abs(sum(report.labels) - 50) <= 1
    assert report.threshold == pytest.approx(np.quantile(losses, 0.95))


def test_degenerate_labels_make_auc_undefined():
    report = label_and_score([0.1, 0.2, 0.3], [0.0, 0.0, 0.0], [0.0, 0.0])
    assert report.auc is None
    assert report.auc_undefined
    assert report.roc == []


def test_label_and_score_validates_inputs():
    with pytest.raises(InvalidArgumentError):
        label_and_score([0.1, 0.2], [0.3], [0.1])
    with pytest.raises(InvalidArgumentError):
        label_and_score([0.1], [0.3], [0.1], quantile=1.0)
    with pytest.raises(InvalidArgumentError):
        label_and_score([0.1], [0.3], [])


def test_drift_experiment_runs_on_small_fixture():
    data = preprocess(gen_drift_fixture(n=200, n_irrelevant=2, seed=2))[0]
    experiment = run_drift_experiment(data, SMALL, k=5, seed=2)
    evaluated = experiment.split.a2.n + experiment.split.b.n
    for report in (experiment.gbmap, experiment.euclid):
        assert len(report.indicators) == evaluated
        assert report.dropped_feature == experiment.split.dropped_feature
    assert experiment.gbmap.drifter == "gbmap"
    assert experiment.euclid.drifter == "euclid"


def test_drift_experiment_for_classification():
    rng = np.random.default_rng(12)
    x = rng.normal(size=(160, 3))
    y = np.where(x[:, 0] + 0.5 * rng.normal(size=160) > 0, 1.0, -1.0)
    raw = Dataset(x=x, y=y, feature_names=("x1", "x2", "x3"), task=TaskKind.CLASSIFICATION)
    experiment = run_drift_experiment(preprocess(raw)[0], SMALL.model_copy(update={"m": 2}))
    assert all(np.isfinite(experiment.gbmap.losses))
    assert experiment.split.model.task is TaskKind.CLASSIFICATION


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(5))
def test_gbmap_drifter_detects_fixture_drift(seed):
    """On the drift fixture the embedding drifter ranks drifted points well"""
    data = preprocess(gen_drift_fixture(n=2000, seed=seed))[0]
    config = FitConfig(m=20, beta=5.0, ridge=1e-3, seed=seed)
    experiment = run_drift_experiment(data, config, k=5, seed=seed)
    assert experiment.split.dropped_feature in ("relevant_1", "relevant_2")
    assert experiment.gbmap.auc >= 0.8
    assert experiment.gbmap.auc >= experiment.euclid.auc - 0.05


def test_drift_split_along_named_feature():
    data = preprocess(gen_drift_fixture(n=120, n_irrelevant=2, seed=4))[0]
    split = make_drift_split(data, SMALL, seed=4, feature="noise_1")
    assert split.dropped_feature == "noise_1"
    assert list(split.feature_magnitudes) == ["noise_1"]
    assert "noise_1" not in split.a1.feature_names
    with pytest.raises(InvalidArgumentError):
        make_drift_split(data, SMALL, feature="intercept")
    with pytest.raises(InvalidArgumentError):
        make_drift_split(data, SMALL, feature="unknown")


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(3))
def test_drift_direction_decides_detectability(seed):
    """Splitting along noise induces no concept drift, splitting along signal does"""
    data = preprocess(gen_drift_fixture(n=2000, seed=seed))[0]
    config = FitConfig(m=20, beta=5.0, ridge=1e-3, seed=seed)
    relevant = run_drift_experiment(data, config, k=5, seed=seed, feature="relevant_1")
    irrelevant = run_drift_experiment(data, config, k=5, seed=seed, feature="noise_1")

    assert irrelevant.split.drift_magnitude < 0.1 * relevant.split.drift_magnitude
    b_rate = np.mean(irrelevant.gbmap.labels[irrelevant.split.a2.n:])
    assert b_rate < 0.15
    assert np.mean(relevant.gbmap.labels[relevant.split.a2.n:]) > 0.3

    assert relevant.gbmap.auc >= relevant.euclid.auc - 0.05
