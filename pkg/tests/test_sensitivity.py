import numpy as np
import pytest
from scipy import stats

from src.core.dataset import Dataset
from src.core.folds import assign_folds
from src.core.schema import Kind
from src.errors import BadConfig, ConstructionFailure, DegenerateModel, EmptyStratum
from src.estimators.decomposition import COMPONENTS, debiased_decomposition, plugin_strata
from src.estimators.sensitivity import (
    bias_bound, fit_sensitivity_model, format_sensitivity, robustness_value, robustness_values, rv_from_f,
    rv_grid_oracle, rv_grid_search, trim_rows, trimming_curve,
)
from src.nuisance.cross_fit import NuisanceConfig, cross_fit
from src.scm.sampler import sample
from tests.helpers import make_schema


@pytest.fixture(scope="module")
def desk_sample(desk1):
    return sample(desk1, 3000, seed=51)


# ==================== ROBUSTNESS VALUES ====================

def test_robustness_value_closed_form():
    rv_q, rv_alpha = robustness_values(4.0, 100)
    assert rv_q == pytest.approx(0.32792, abs=1e-5)
    assert 0 < rv_alpha < rv_q


def test_zero_t_statistic_is_not_robust():
    assert robustness_values(0.0, 100) == (0.0, 0.0)
    assert rv_from_f(0.0) == 0.0


def test_insignificant_estimate_has_zero_rv_alpha():
    _, rv_alpha = robustness_values(1.0, 1000)
    assert rv_alpha == 0.0


def test_bias_bound_reaches_estimate_at_rv():
    t, dof, se = 5.0, 400.0, 0.1
    rv, _ = robustness_values(t, dof)
    assert bias_bound(se, dof, rv, rv) == pytest.approx(t * se)


def test_sensitivity_model_reports_x_coefficient(desk_sample):
    model = fit_sensitivity_model(desk_sample)
    assert model.names[:2] == ["const", "adhd"]
    assert model.dof == desk_sample.n - len(model.names)
    report = robustness_value(model)
    assert 0 < report.rv_alpha < report.rv_q1 < 1
    assert {b.variable for b in report.benchmarks} == {"female", "ses", "club", "precalc"}
    for bench in report.benchmarks:
        assert 0 <= bench.r2_dz_x < 1
        assert 0 <= bench.r2_yz_dx < 1
    text = format_sensitivity(report)
    assert "RV(q=1)" in text
    assert "precalc" in text


def test_collinear_design_is_degenerate():
    schema = make_schema(confounders=[("z", Kind.BINARY)])
    x = np.arange(20) % 2
    data = Dataset.from_columns(schema, {"x": x, "z": x, "y": np.linspace(0, 1, 20)})
    with pytest.raises(DegenerateModel):
        fit_sensitivity_model(data)


# ==================== CONSTRUCTED CONFOUNDER ====================

def test_zero_strength_confounder_changes_nothing(desk_sample):
    baseline = fit_sensitivity_model(desk_sample)
    adjusted = rv_grid_oracle(desk_sample, 0.0, seed=1)
    assert adjusted.estimate == pytest.approx(baseline.estimate, abs=1e-8)


def test_confounder_at_rv_explains_estimate_away(desk_sample):
    model = fit_sensitivity_model(desk_sample)
    report = robustness_value(model)
    adjusted = rv_grid_oracle(desk_sample, report.rv_q1, seed=2)
    assert abs(adjusted.estimate) <= 0.05 * abs(model.estimate)


def test_confounder_at_rv_alpha_sits_on_the_critical_value(desk_sample):
    model = fit_sensitivity_model(desk_sample)
    report = robustness_value(model)
    adjusted = rv_grid_oracle(desk_sample, report.rv_alpha, seed=3)
    critical = stats.t.ppf(0.975, model.dof - 1)
    assert abs(abs(adjusted.t) - critical) <= 0.15


def test_grid_search_matches_closed_form(desk_sample):
    report = robustness_value(fit_sensitivity_model(desk_sample))
    assert rv_grid_search(desk_sample, seed=4) == pytest.approx(report.rv_q1, abs=1e-3)


def test_full_strength_confounder_cannot_be_built(desk_sample):
    with pytest.raises(ConstructionFailure):
        rv_grid_oracle(desk_sample, 1.0)


# ==================== TRIMMING ====================

def test_trimming_curve(desk_sample, linear_nuisance):
    fits = cross_fit(desk_sample, assign_folds(desk_sample.n, 3, 0), linear_nuisance)
    curve = trimming_curve(desk_sample, fits, thresholds=(5, 2), k=3, nuisance=linear_nuisance)

    assert [e.percentile for e in curve.entries] == [0.0, 2.0, 5.0]
    baseline = debiased_decomposition(desk_sample, fits)
    for name in COMPONENTS:
        assert curve.baseline().report.components()[name].estimate == baseline.components()[name].estimate
    retained = [e.n_retained for e in curve.entries]
    assert retained[0] == desk_sample.n
    assert retained == sorted(retained, reverse=True)

    frame = curve.to_frame()
    assert len(frame) == 3 * len(COMPONENTS)
    drift = curve.drift()
    for name in COMPONENTS:
        base = curve.baseline().report.components()[name].estimate
        moves = [abs(e.report.components()[name].estimate - base) for e in curve.entries]
        assert drift[name] == pytest.approx(max(moves))
        assert curve.drift(scale=curve.outcome_sd)[name] == pytest.approx(drift[name] / curve.outcome_sd)
    assert curve.outcome_sd == pytest.approx(np.std(desk_sample.outcome(), ddof=1))


@pytest.mark.slow
def test_trimming_drift_stays_within_a_twentieth_of_an_sd(desk1):
    data = sample(desk1, 10_000, seed=52)
    nuisance = NuisanceConfig()
    fits = cross_fit(data, assign_folds(data.n, 5, 0), nuisance, threads=4)
    curve = trimming_curve(data, fits, thresholds=(1, 2, 3, 4, 5), k=5, nuisance=nuisance, threads=2)
    drift = curve.to_dict()["drift_sd"]
    assert all(value < 0.05 for value in drift.values()), drift


def test_trimming_level_must_be_below_fifty(desk_sample, linear_nuisance):
    fits = cross_fit(desk_sample, assign_folds(desk_sample.n, 3, 0), linear_nuisance)
    with pytest.raises(BadConfig):
        trimming_curve(desk_sample, fits, thresholds=(60,), k=3, nuisance=linear_nuisance)


def test_trimming_removes_a_stratum_without_comparison_rows():
    rng = np.random.default_rng(9)
    g = np.array(["A"] * 480 + ["B"] * 480 + ["C"] * 40, dtype=object)
    x = np.zeros(1000, dtype=int)
    x[:480] = np.arange(480) % 2
    x[480:960] = (np.arange(480) % 10) < 3
    schema = make_schema(confounders=[("g", Kind.CATEGORICAL, ("A", "B", "C"))])
    data = Dataset.from_columns(schema, {"x": x, "g": g, "y": rng.standard_normal(1000)})

    with pytest.raises(EmptyStratum):
        plugin_strata(data, n_bootstrap=0)

    e1 = np.select([g == "A", g == "B"], [0.5, 0.3], default=0.0)
    rows = trim_rows(e1, 5)
    assert len(rows) == 960
    report = plugin_strata(data.take(rows), n_bootstrap=0)
    assert np.isfinite(report.x_de.estimate)


def test_zero_percentile_keeps_every_row():
    np.testing.assert_array_equal(trim_rows(np.array([0.2, 0.9, 0.5]), 0), [0, 1, 2])
