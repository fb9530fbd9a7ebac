import numpy as np
import pytest

from src.core.dataset import Dataset
from src.core.folds import assign_folds
from src.core.schema import Kind
from src.errors import EmptyGroup, EmptyStratum, ExtremeWeightsWarning, SchemaMismatch
from src.estimators.common import Estimate
from src.estimators.decomposition import (
    COMPONENTS, DecompositionReport, Estimator, debiased_decomposition, flag_extreme,
    format_decomposition, plugin_model, plugin_strata, tv_empirical,
)
from src.nuisance.cross_fit import NuisanceConfig, cross_fit, saturated_fits
from src.scm.oracle import oracle_decomposition
from src.scm.sampler import sample
from tests.helpers import make_schema


def _identity_gap(report):
    return report.tv.estimate - (report.x_de.estimate - report.x_ie.estimate - report.x_se.estimate)


def test_tv_is_difference_in_group_means(tiny_dataset):
    y = tiny_dataset.outcome()
    x = tiny_dataset.protected_indicator()
    tv = tv_empirical(tiny_dataset)
    assert tv.estimate == pytest.approx(y[x == 1].mean() - y[x == 0].mean())
    assert tv.se > 0


def test_tv_needs_both_groups():
    data = Dataset.from_columns(make_schema(), {"x": [0, 0, 0], "y": [1.0, 2.0, 3.0]})
    with pytest.raises(EmptyGroup):
        tv_empirical(data)


# ==================== PLUG-IN ====================

def test_plugin_strata_identity_and_bootstrap(desk1_data):
    report = plugin_strata(desk1_data, n_bootstrap=30, seed=1)
    assert _identity_gap(report) == pytest.approx(0.0, abs=1e-12)
    assert report.tv.estimate == pytest.approx(tv_empirical(desk1_data).estimate, abs=1e-12)
    assert all(report.components()[name].se > 0 for name in COMPONENTS)
    assert report.diagnostics["n_bootstrap"] == 30


def test_plugin_strata_without_bootstrap_has_no_se(desk1_data):
    report = plugin_strata(desk1_data, n_bootstrap=0)
    assert np.isnan(report.x_de.se)


def test_plugin_strata_reports_empty_cells():
    schema = make_schema(confounders=[("z", Kind.BINARY)])
    data = Dataset.from_columns(schema, {
        "x": [0, 0, 1, 0, 1], "z": [0, 1, 0, 1, 0], "y": [1.0, 2.0, 3.0, 4.0, 5.0],
    })
    with pytest.raises(EmptyStratum) as excinfo:
        plugin_strata(data, n_bootstrap=0)
    assert excinfo.value.cells == [{"x": "1", "z": "1"}]


def test_plugin_model_with_saturated_fits_matches_strata(desk1_data):
    strata = plugin_strata(desk1_data, n_bootstrap=0)
    model = plugin_model(desk1_data, saturated_fits(desk1_data), n_bootstrap=0)
    for name in COMPONENTS:
        assert model.components()[name].estimate == pytest.approx(strata.components()[name].estimate, abs=1e-8)


# ==================== DEBIASED ====================

def test_debiased_with_saturated_fits_matches_plugin(desk1_data):
    strata = plugin_strata(desk1_data, n_bootstrap=0)
    debiased = debiased_decomposition(desk1_data, saturated_fits(desk1_data))
    assert debiased.estimator == Estimator.DEBIASED
    for name in COMPONENTS:
        assert debiased.components()[name].estimate == pytest.approx(strata.components()[name].estimate, abs=1e-8)


def test_debiased_corrects_a_shifted_outcome_model(desk1_data):
    fits = saturated_fits(desk1_data)
    base = debiased_decomposition(desk1_data, fits)
    shifted = debiased_decomposition(desk1_data, fits.with_values(mu1=fits.mu1 + 1.0, m1=fits.m1 + 1.0))
    for name in COMPONENTS:
        assert shifted.components()[name].estimate == pytest.approx(base.components()[name].estimate, abs=1e-8)


def test_debiased_identity_with_cross_fitted_nuisances(desk1_data, linear_nuisance):
    fits = cross_fit(desk1_data, assign_folds(desk1_data.n, 5, 0), linear_nuisance)
    report = debiased_decomposition(desk1_data, fits)
    assert _identity_gap(report) == pytest.approx(0.0, abs=1e-10)


def test_debiased_recovers_oracle(desk1, desk1_large, linear_nuisance):
    truth = oracle_decomposition(desk1)
    fits = cross_fit(desk1_large, assign_folds(desk1_large.n, 5, 3), linear_nuisance, threads=2)
    report = debiased_decomposition(desk1_large, fits)
    for name in COMPONENTS:
        est = report.components()[name]
        assert abs(est.estimate - getattr(truth, name)) < 4 * est.se + 0.01, name


def test_null_spec_components_near_zero(null1_data, linear_nuisance):
    fits = cross_fit(null1_data, assign_folds(null1_data.n, 5, 0), linear_nuisance)
    report = debiased_decomposition(null1_data, fits)
    for name in COMPONENTS:
        est = report.components()[name]
        assert abs(est.estimate) < 4 * est.se + 0.01, name


def test_fits_must_cover_every_row(desk1_data):
    fits = saturated_fits(desk1_data).take(np.arange(100))
    with pytest.raises(SchemaMismatch):
        debiased_decomposition(desk1_data, fits)


# ==================== DIAGNOSTICS & RENDERING ====================

def test_extreme_pseudo_outcomes_warn():
    psi = np.concatenate([np.linspace(-1, 1, 200), [500.0]])
    with pytest.warns(ExtremeWeightsWarning):
        assert flag_extreme("theta1", psi) == 1


def test_constant_pseudo_outcomes_are_not_extreme():
    assert flag_extreme("theta1", np.ones(50)) == 0


def _report(tv, de, ie, se):
    return DecompositionReport(
        tv=Estimate(tv, 0.01), x_de=Estimate(de, 0.01), x_ie=Estimate(ie, 0.01), x_se=Estimate(se, 0.01),
        estimator=Estimator.DEBIASED, n0=900, n1=100,
    )


def test_display_components_flip_indirect_and_spurious():
    report = _report(-0.5, -0.3, 0.1, 0.1)
    shown = report.display_components
    assert shown == {"direct": -0.3, "indirect": -0.1, "spurious": -0.1}
    assert sum(shown.values()) == pytest.approx(report.tv.estimate)
    assert report.shares["direct"] == pytest.approx(0.6)


def test_shares_undefined_for_zero_tv():
    report = _report(0.0, 0.2, 0.1, 0.1)
    assert report.shares == {"direct": None, "indirect": None, "spurious": None}
    assert report.to_dict()["shares"]["direct"] is None


def test_format_shows_the_additive_identity():
    text = format_decomposition(_report(-0.5, -0.3, 0.1, 0.1))
    assert "TV = spurious + indirect + direct" in text
    assert "-0.500 = -0.100 + -0.100 + -0.300" in text
    assert "60.0%" in text


# ==================== CALIBRATION ====================

@pytest.mark.slow
def test_interval_coverage_on_reference_spec(desk1, linear_nuisance):
    truth = oracle_decomposition(desk1)
    hits = {name: 0 for name in COMPONENTS}
    reps = 200
    for rep in range(reps):
        data = sample(desk1, 2000, seed=1000 + rep)
        report = debiased_decomposition(data, cross_fit(data, assign_folds(data.n, 5, rep), linear_nuisance))
        for name in COMPONENTS:
            lo, hi = report.components()[name].ci95
            hits[name] += lo <= getattr(truth, name) <= hi
    for name in COMPONENTS:
        assert 0.90 <= hits[name] / reps <= 0.99, name


@pytest.mark.slow
def test_null_spec_calibration(null1, linear_nuisance):
    within = {name: 0 for name in COMPONENTS}
    for rep in range(100):
        data = sample(null1, 5000, seed=2000 + rep)
        report = debiased_decomposition(data, cross_fit(data, assign_folds(data.n, 5, rep), linear_nuisance))
        for name in COMPONENTS:
            est = report.components()[name]
            within[name] += abs(est.estimate) <= 2 * est.se
    assert all(count >= 90 for count in within.values()), within


# ==================== ORACLE EQUIVALENCE (DEFAULT LEARNERS) ====================

@pytest.fixture(scope="module")
def desk1_50k(desk1):
    return sample(desk1, 50_000, seed=14)


def _assert_matches_oracle(report, truth, outcome_sd):
    for name in COMPONENTS:
        est = report.components()[name]
        error = abs(est.estimate - getattr(truth, name))
        assert error <= 4 * est.se, name
        assert error <= 0.02 * outcome_sd, name


@pytest.mark.slow
def test_plugin_strata_matches_oracle(desk1, desk1_50k):
    report = plugin_strata(desk1_50k, n_bootstrap=100, seed=3)
    _assert_matches_oracle(report, oracle_decomposition(desk1), desk1_50k.outcome().std())


@pytest.mark.slow
def test_default_learners_match_oracle_and_fold_count_is_stable(desk1, desk1_50k):
    truth = oracle_decomposition(desk1)
    outcome_sd = desk1_50k.outcome().std()
    reports = {}
    for k in (2, 10):
        fits = cross_fit(desk1_50k, assign_folds(desk1_50k.n, k, 7), NuisanceConfig(), threads=4)
        reports[k] = debiased_decomposition(desk1_50k, fits)
        _assert_matches_oracle(reports[k], truth, outcome_sd)

    pooled_se = np.hypot(reports[2].tv.se, reports[10].tv.se)
    assert abs(reports[2].tv.estimate - reports[10].tv.estimate) < 2 * pooled_se
