import numpy as np
import pytest

from src.core.dataset import Dataset
from src.core.folds import FoldAssignment, assign_folds
from src.core.schema import Kind
from src.errors import BadConfig, EmptyStratum, FoldCollapse
from src.nuisance.cross_fit import FIT_FIELDS, NuisanceConfig, cross_fit, saturated_fits
from src.nuisance.strata import positivity_gaps, strata_index
from src.scm.sampler import sample
from tests.helpers import binary_confounder_spec, make_schema


def test_clip_must_be_below_one_half():
    with pytest.raises(BadConfig):
        NuisanceConfig(clip=0.5)
    with pytest.raises(BadConfig):
        NuisanceConfig.from_dict({"treatment": {}})


def test_config_from_dict_defaults_propensity_to_logistic():
    config = NuisanceConfig.from_dict({"outcome": {"n_trees": 20}}, clip=0.02)
    assert config.propensity.family.value == "logistic_linear"
    assert config.outcome.n_trees == 20
    assert config.clip == 0.02


def test_fits_are_out_of_fold(desk1, linear_nuisance):
    data = sample(desk1, 3000, seed=31)
    folds = assign_folds(data.n, 5, 2)
    base = cross_fit(data, folds, linear_nuisance)

    fold0 = folds.test_rows(0)
    y = data.outcome()
    y[fold0] += 100.0
    shifted = cross_fit(data.replace_columns({"gpa": y}), folds, linear_nuisance)

    for name in FIT_FIELDS:
        np.testing.assert_array_equal(getattr(shifted, name)[fold0], getattr(base, name)[fold0])
    assert not np.allclose(shifted.mu1[folds.test_rows(1)], base.mu1[folds.test_rows(1)])


def test_cross_fit_is_deterministic_across_threads(desk1, linear_nuisance):
    data = sample(desk1, 2000, seed=32)
    folds = assign_folds(data.n, 4, 0)
    one = cross_fit(data, folds, linear_nuisance, threads=1)
    many = cross_fit(data, folds, linear_nuisance, threads=3)
    for name in FIT_FIELDS:
        np.testing.assert_array_equal(getattr(one, name), getattr(many, name))


def test_propensity_is_clipped(desk1, linear_nuisance):
    data = sample(desk1, 2000, seed=33)
    config = NuisanceConfig(linear_nuisance.outcome, linear_nuisance.propensity,
                            linear_nuisance.mediator_odds, linear_nuisance.nested, clip=0.2)
    fits = cross_fit(data, assign_folds(data.n, 3, 0), config)
    assert fits.e1.min() >= 0.2
    assert fits.clip_bounds == (0.2, 0.8)
    assert fits.clip_counts["e1_low"] > 0


def test_training_complement_without_a_group_collapses():
    schema = make_schema(confounders=[("z", Kind.BINARY)])
    x = np.array([1, 1, 1, 0, 0, 0, 0, 0])
    data = Dataset.from_columns(schema, {"x": x, "z": [0, 1, 0, 1, 0, 1, 0, 1], "y": np.arange(8.0)})
    folds = FoldAssignment(k=2, fold_of=np.array([0, 0, 0, 1, 1, 1, 1, 1]), seed=0)
    with pytest.raises(FoldCollapse):
        cross_fit(data, folds)


def test_null_propensity_near_constant(null1_data, linear_nuisance):
    fits = cross_fit(null1_data, assign_folds(null1_data.n, 10, 0), linear_nuisance)
    assert np.mean(np.abs(fits.e1 - 0.10) <= 0.05) >= 0.95


def test_randomized_protected_attribute_gives_unit_odds(linear_nuisance):
    spec = binary_confounder_spec(
        "randomized", seed=8, z_names=("z1", "z2"),
        mediators=[{"name": "w1", "intercept": -0.3, "z": {"z2": 0.5}}],
    )
    spec = spec.with_overrides(x_model=type(spec.x_model)(name="x"))
    data = sample(spec, 10_000, seed=34)
    fits = cross_fit(data, assign_folds(data.n, 10, 0), linear_nuisance)
    assert 0.8 <= np.median(fits.odds0) <= 1.25


# ==================== SATURATED ====================

def test_saturated_fits_are_cell_frequencies(desk1_data):
    fits = saturated_fits(desk1_data)
    index = strata_index(desk1_data)
    cnt, _ = index.counts()
    assert len(positivity_gaps(cnt)) == 0
    row = 0
    z, w = index.z_code[row], index.w_code[row]
    assert fits.odds0[row] == pytest.approx(cnt[0, z, w] / cnt[1, z, w])
    n_z = cnt[:, z, :].sum(axis=1)
    assert fits.e1[row] == pytest.approx(n_z[1] / n_z.sum())
    assert fits.source == "saturated"


def test_saturated_fits_need_both_groups_in_every_cell():
    schema = make_schema(confounders=[("z", Kind.BINARY)])
    data = Dataset.from_columns(schema, {
        "x": [0, 0, 1, 0, 1], "z": [0, 1, 0, 1, 0], "y": [1.0, 2.0, 3.0, 4.0, 5.0],
    })
    with pytest.raises(EmptyStratum) as excinfo:
        saturated_fits(data)
    assert excinfo.value.cells == [{"x": "1", "z": "1"}]
