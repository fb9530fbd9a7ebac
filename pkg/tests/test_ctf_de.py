import numpy as np
import pytest

from src.core.dataset import Dataset
from src.core.schema import Kind
from src.errors import UnknownDimension
from src.estimators.ctf_de import (
    aggregate_cells, build_ctf_de_report, ctf_de_by_cell, ctf_de_by_dimension, ctf_de_overall,
    ctf_de_pseudo_outcomes,
)
from src.estimators.decomposition import plugin_strata
from src.nuisance.cross_fit import saturated_fits
from src.scm.oracle import oracle_ctf_de
from tests.helpers import make_schema


def test_randomized_no_covariates_reduces_to_difference_in_means():
    rng = np.random.default_rng(0)
    x = (rng.random(4000) < 0.5).astype(int)
    y = 1.0 + 0.5 * x + rng.standard_normal(4000)
    data = Dataset.from_columns(make_schema(), {"x": x, "y": y})
    psi = ctf_de_pseudo_outcomes(data, saturated_fits(data))
    assert ctf_de_overall(psi).estimate == pytest.approx(y[x == 1].mean() - y[x == 0].mean(), abs=1e-6)


def test_cells_spanning_all_confounders_aggregate_to_x_de(desk1_data):
    psi = ctf_de_pseudo_outcomes(desk1_data, saturated_fits(desk1_data))
    report = ctf_de_by_cell(psi, desk1_data, "female", "ses")
    plugin = plugin_strata(desk1_data, n_bootstrap=0)
    assert aggregate_cells(report, desk1_data).estimate == pytest.approx(plugin.x_de.estimate, abs=1e-8)


def test_cell_estimates_track_oracle(desk1, desk1_large):
    psi = ctf_de_pseudo_outcomes(desk1_large, saturated_fits(desk1_large))
    report = ctf_de_by_cell(psi, desk1_large, "female", "ses")
    assert len(report.cells) == 6
    for _, cell in report.cells.iterrows():
        truth = oracle_ctf_de(desk1, {"female": int(cell["level1"]), "ses": cell["level2"]})
        assert abs(cell["estimate"] - truth) < 4 * cell["se"] + 0.02


def test_cell_table_columns_and_intervals(desk1_data):
    psi = ctf_de_pseudo_outcomes(desk1_data, saturated_fits(desk1_data))
    cells = ctf_de_by_cell(psi, desk1_data, "ses", "female").cells
    assert list(cells.columns) == [
        "dimension1", "level1", "dimension2", "level2", "estimate", "sd", "se", "n", "small_flag",
        "ci95_lo", "ci95_hi",
    ]
    assert cells["n"].sum() == desk1_data.n
    assert np.all(cells["ci95_lo"] < cells["estimate"])
    assert not cells["small_flag"].any()


def _constant_dims_dataset():
    schema = make_schema(confounders=[("a", Kind.BINARY), ("b", Kind.BINARY)])
    return Dataset.from_columns(schema, {
        "x": [0, 1, 0, 1, 0, 1], "a": [0] * 6, "b": [0] * 6, "y": [0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
    })


def test_single_populated_cell_equals_overall():
    data = _constant_dims_dataset()
    psi = np.array([0.5, -1.0, 2.0, 0.0, 1.5, 3.0])
    report = ctf_de_by_cell(psi, data, "a", "b")
    assert aggregate_cells(report, data).estimate == pytest.approx(psi.mean())
    assert report.overall.estimate == pytest.approx(psi.mean())

    empty = report.cells[report.cells["n"] == 0]
    assert len(empty) == 3
    assert empty["estimate"].isna().all()
    assert report.cells["small_flag"].all()


def test_one_way_table():
    data = _constant_dims_dataset()
    table = ctf_de_by_dimension(np.arange(6.0), data, "a")
    assert list(table["level"]) == ["0", "1"]
    assert table.loc[0, "estimate"] == pytest.approx(2.5)
    assert table.loc[1, "n"] == 0


def test_dimensions_must_be_discrete_confounders(tiny_dataset):
    psi = np.zeros(tiny_dataset.n)
    with pytest.raises(UnknownDimension):
        ctf_de_by_cell(psi, tiny_dataset, "club", "ses")
    with pytest.raises(UnknownDimension):
        ctf_de_by_cell(psi, tiny_dataset, "ses", "age")


def test_report_bundle(desk1_data):
    psi = ctf_de_pseudo_outcomes(desk1_data, saturated_fits(desk1_data))
    bundle = build_ctf_de_report(psi, desk1_data, [("female", "ses")], subgroups=["ses"])
    assert set(bundle["heatmaps"]) == {"female__ses"}
    assert len(bundle["subgroups"]["ses"]) == 3
    assert bundle["overall"].estimate == pytest.approx(np.mean(psi.values))
    assert bundle["diagnostics"]["max_abs_psi"] == psi.max_abs
