import numpy as np
import pytest

from src.core.dataset import Dataset
from src.core.folds import assign_folds
from src.core.schema import Kind
from src.errors import BadConfig, InsufficientVariation, NoSplitWarning, SchemaError, SchemaMismatch
from src.estimators.cate_forest import (
    CausalForestConfig, _aggregate, average_treatment_effect, build_cate_report, debias_variance, fit_causal_forest,
    grow_honest_tree, importance_by_variable, predict_cate, variable_importance,
)
from src.scm.sampler import sample
from tests.helpers import binary_confounder_spec, constant_effect_spec, make_schema

SMALL_FOREST = CausalForestConfig(n_trees=20, seed=1)


@pytest.fixture(scope="module")
def desk_sample(desk1):
    return sample(desk1, 3000, seed=41)


@pytest.fixture(scope="module")
def small_model(desk_sample, linear_nuisance):
    return fit_causal_forest(desk_sample, assign_folds(desk_sample.n, 3, 0), SMALL_FOREST, linear_nuisance)


# ==================== CONFIG ====================

def test_forest_config_validation():
    with pytest.raises(BadConfig):
        CausalForestConfig(n_trees=0)
    with pytest.raises(BadConfig):
        CausalForestConfig(honesty_fraction=1.0)
    with pytest.raises(BadConfig):
        CausalForestConfig.from_dict({"leaf": 5})


def test_min_leaf_alias_sets_both_groups():
    config = CausalForestConfig.from_dict({"min_leaf": 3, "n_trees": 10})
    assert (config.min_leaf_treated, config.min_leaf_control) == (3, 3)
    assert config.n_groups == 5


# ==================== TREE ====================

def test_leaf_sums_come_from_estimation_rows():
    rng = np.random.default_rng(0)
    n = 400
    z = rng.uniform(0, 1, size=(n, 1))
    treated = np.arange(n) % 2
    x_res = treated - 0.5
    y_res = rng.standard_normal(n) + 2.0 * (z[:, 0] > 0.5) * treated
    struct_rows, est_rows = np.arange(200), np.arange(200, 400)

    tree = grow_honest_tree(z, x_res, y_res, treated, struct_rows, est_rows, CausalForestConfig(), rng)
    assert tree.n_splits >= 1

    leaves = tree.apply(z[est_rows])
    for leaf in np.unique(leaves):
        rows = est_rows[leaves == leaf]
        assert tree.sxy[leaf] == pytest.approx(np.sum(x_res[rows] * y_res[rows]))
        assert tree.sxx[leaf] == pytest.approx(np.sum(x_res[rows] ** 2))
        assert tree.n_treated[leaf] == treated[rows].sum() >= 5
        assert tree.n_control[leaf] >= 5


def test_constant_feature_never_splits():
    n = 200
    z = np.zeros((n, 1))
    treated = np.arange(n) % 2
    tree = grow_honest_tree(z, treated - 0.5, np.arange(n, dtype=float), treated, np.arange(100),
                            np.arange(100, 200), CausalForestConfig(), np.random.default_rng(0))
    assert tree.n_splits == 0
    assert len(tree.feature) == 1


# ==================== FOREST ====================

def test_forest_needs_confounders(linear_nuisance):
    data = Dataset.from_columns(make_schema(), {"x": np.arange(200) % 2, "y": np.zeros(200)})
    with pytest.raises(SchemaError):
        fit_causal_forest(data, assign_folds(200, 2, 0), SMALL_FOREST, linear_nuisance)


def test_forest_needs_enough_rows_per_group(linear_nuisance):
    x = np.zeros(300, dtype=int)
    x[:20] = 1
    schema = make_schema(confounders=[("z", Kind.BINARY)])
    data = Dataset.from_columns(schema, {"x": x, "z": np.arange(300) % 2, "y": np.zeros(300)})
    with pytest.raises(InsufficientVariation):
        fit_causal_forest(data, assign_folds(300, 2, 0), SMALL_FOREST, linear_nuisance)


def test_forest_carries_out_of_bag_estimates(small_model, desk_sample):
    assert len(small_model.trees) == 20
    assert small_model.oob.tau_hat.shape == (desk_sample.n,)
    assert np.all(np.isfinite(small_model.oob.tau_hat))
    assert small_model.feature_names == ["female", "ses=Q2", "ses=Q3"]


def test_duplicate_rows_predict_identically(small_model):
    rows = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 1.0]])
    prediction = predict_cate(small_model, rows)
    assert prediction.tau_hat[0] == prediction.tau_hat[2]
    assert prediction.se[0] == prediction.se[2]


def test_prediction_from_dataset_matches_features(small_model, desk_sample):
    head = desk_sample.take(np.arange(5))
    from_data = predict_cate(small_model, head)
    from_array = predict_cate(small_model, small_model.z_train[:5])
    np.testing.assert_array_equal(from_data.tau_hat, from_array.tau_hat)


def test_prediction_rejects_other_features(small_model):
    with pytest.raises(SchemaMismatch):
        predict_cate(small_model, np.zeros((2, 5)))


def test_forest_is_deterministic_across_threads(desk_sample, small_model, linear_nuisance):
    again = fit_causal_forest(desk_sample, assign_folds(desk_sample.n, 3, 0), SMALL_FOREST, linear_nuisance,
                              threads=3)
    np.testing.assert_array_equal(again.oob.tau_hat, small_model.oob.tau_hat)


# ==================== VARIANCE ====================

def test_agreeing_bags_with_noisy_trees_keep_a_positive_se():
    preds = np.array([[1.0, 0.0], [-1.0, 0.0], [1.0, 10.0], [-1.0, 10.0], [1.0, 20.0], [-1.0, 20.0]])
    prediction = _aggregate(preds, np.array([0, 0, 1, 1, 2, 2]), n_groups=3, group_size=2)
    np.testing.assert_allclose(prediction.tau_hat, [0.0, 10.0])
    assert prediction.se[0] == pytest.approx(0.628, abs=2e-3)
    assert prediction.se[1] ** 2 > np.var([0.0, 10.0, 20.0])


def test_variance_correction_vanishes_with_many_bags():
    corrected = debias_variance(np.array([1.0, 0.0]), np.array([0.01, 0.0]), np.array([500.0, 500.0]))
    assert corrected[0] == pytest.approx(0.99, abs=1e-9)
    assert corrected[1] == 0.0


def test_variance_grows_with_between_bag_spread():
    between = np.array([0.0, 0.5, 1.0, 2.0])
    corrected = debias_variance(between, np.ones(4), np.full(4, 50.0))
    assert (corrected > 0).all()
    assert (np.diff(corrected) > 0).all()


def test_constant_confounder_gives_uniform_importance(linear_nuisance):
    n = 400
    schema = make_schema(confounders=[("a", Kind.BINARY)])
    rng = np.random.default_rng(3)
    data = Dataset.from_columns(schema, {"x": np.arange(n) % 2, "a": np.zeros(n), "y": rng.standard_normal(n)})
    model = fit_causal_forest(data, assign_folds(n, 2, 0), CausalForestConfig(n_trees=4), linear_nuisance)
    with pytest.warns(NoSplitWarning):
        importance = variable_importance(model)
    assert importance == {"a": 1.0}


def test_importance_sums_to_one_and_groups_dummies(small_model):
    importance = variable_importance(small_model)
    assert sum(importance.values()) == pytest.approx(1.0)
    grouped = importance_by_variable(small_model, importance)
    assert set(grouped) == {"female", "ses"}
    assert grouped["ses"] == pytest.approx(importance["ses=Q2"] + importance["ses=Q3"])


def test_cate_report_tables(small_model, desk_sample):
    report = build_cate_report(small_model, desk_sample, ["ses"], [("female", "ses")])
    assert len(report.subgroups["ses"]) == 3
    heatmap = report.heatmaps["female__ses"]
    assert {"mean_cate", "se_mean", "sd", "n", "small_flag"} <= set(heatmap.columns)
    assert heatmap["n"].sum() == desk_sample.n
    assert report.to_dict()["units"]["tau_hat"] == small_model.oob.tau_hat.tolist()


# ==================== RECOVERY ====================

@pytest.mark.slow
def test_constant_effect_average(linear_nuisance):
    data = sample(constant_effect_spec(effect=0.5), 10_000, seed=42)
    model = fit_causal_forest(data, assign_folds(data.n, 5, 0), CausalForestConfig(n_trees=100, seed=2),
                              linear_nuisance, threads=2)
    ate = average_treatment_effect(model)
    assert abs(ate.estimate - 0.5) <= 4 * ate.se
    assert abs(ate.estimate - 0.5) <= 0.05
    assert np.std(model.oob.tau_hat) <= 0.1 * 0.5 + 0.05


@pytest.mark.slow
def test_constant_effect_within_pointwise_intervals(linear_nuisance):
    data = sample(constant_effect_spec(effect=0.5), 10_000, seed=44)
    model = fit_causal_forest(data, assign_folds(data.n, 5, 0), CausalForestConfig(seed=4), linear_nuisance,
                              threads=2)
    prediction = predict_cate(model, data, threads=2)
    assert np.isfinite(prediction.se).all()
    assert (np.abs(prediction.tau_hat - 0.5) <= 3 * prediction.se).all()


@pytest.mark.slow
def test_zero_effect_estimates_stay_near_zero(linear_nuisance):
    data = sample(constant_effect_spec(effect=0.0), 40_000, seed=45)
    model = fit_causal_forest(data, assign_folds(data.n, 5, 0), CausalForestConfig(n_trees=200, seed=5),
                              linear_nuisance, threads=2)
    assert np.mean(np.abs(model.oob.tau_hat)) <= 0.05


@pytest.mark.slow
def test_heterogeneous_effect_found_on_the_right_confounder(linear_nuisance):
    spec = binary_confounder_spec("het", seed=6, xz={"z1": 1.0}, z_names=("z1", "z2"))
    data = sample(spec, 20_000, seed=43)
    model = fit_causal_forest(data, assign_folds(data.n, 5, 0), CausalForestConfig(n_trees=100, seed=3),
                              linear_nuisance, threads=2)
    tau = model.oob.tau_hat
    z1 = data.column("z1")
    gap = tau[z1 == 1].mean() - tau[z1 == 0].mean()
    assert 0.8 <= gap <= 1.2
    importance = variable_importance(model)
    assert max(importance, key=importance.get) == "z1"
