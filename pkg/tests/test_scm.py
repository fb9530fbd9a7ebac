import dataclasses

import numpy as np
import pytest

from src.core.validation import validate
from src.errors import ConfigError, NotEnumerable, UnknownStratum
from src.scm.oracle import oracle_cate, oracle_ctf_de, oracle_decomposition
from src.scm.sampler import BLOCK_SIZE, sample
from src.scm.spec import dump_scm_spec, load_scm_spec, scm_from_dict, scm_to_dict
from tests.helpers import binary_confounder_spec, constant_effect_spec


# ==================== SPEC ====================

def test_reference_spec_schema(desk1):
    schema = desk1.schema()
    assert schema.names == ["adhd", "female", "ses", "club", "precalc", "gpa"]
    assert desk1.chain_order == ["club", "precalc"]
    assert schema["ses"].reference == "Q1"


def test_spec_dict_survives_yaml(tmp_path, desk1):
    path = tmp_path / "desk.yaml"
    dump_scm_spec(desk1, path)
    assert scm_to_dict(load_scm_spec(path)) == scm_to_dict(desk1)


def test_unknown_reference_name():
    with pytest.raises(ConfigError):
        load_scm_spec("no-such-spec")


def test_coefficients_on_unknown_confounder_rejected(desk1):
    raw = scm_to_dict(desk1)
    raw["outcome"]["z"]["age"] = 1.0
    with pytest.raises(ConfigError):
        scm_from_dict(raw)


def test_mediator_chain_must_refer_backwards(desk1):
    raw = scm_to_dict(desk1)
    raw["mediators"][0]["w"] = {"precalc": 0.5}
    with pytest.raises(ConfigError):
        scm_from_dict(raw)


@pytest.mark.parametrize("term", [{"x": 0.7}, {"w": {"club": 0.4}}])
def test_protected_mechanism_takes_no_self_or_mediator_terms(desk1, term):
    raw = scm_to_dict(desk1)
    raw["protected"].update(term)
    with pytest.raises(ConfigError):
        scm_from_dict(raw)
    assert scm_from_dict(scm_to_dict(desk1)).x_model.x == 0.0


# ==================== SAMPLER ====================

def test_same_seed_same_rows(desk1):
    assert sample(desk1, 1000, seed=3).equals(sample(desk1, 1000, seed=3))
    assert not sample(desk1, 1000, seed=3).equals(sample(desk1, 1000, seed=4))


def test_thread_count_does_not_change_rows(desk1):
    n = 2 * BLOCK_SIZE + 17
    assert sample(desk1, n, seed=9, threads=1).equals(sample(desk1, n, seed=9, threads=3))


def test_sample_is_valid_and_complete(desk1):
    data = sample(desk1, 2000, seed=1)
    assert data.n == 2000
    assert data.is_complete
    assert validate(data) == []


def test_sample_needs_rows(desk1):
    with pytest.raises(ValueError):
        sample(desk1, 0)


def test_null_spec_x_and_y_uncorrelated(null1):
    n = 100_000
    data = sample(null1, n, seed=21)
    corr = np.corrcoef(data.protected_indicator(), data.outcome())[0, 1]
    assert abs(corr) < 4 / np.sqrt(n)


def test_marginal_protected_rate(null1):
    n = 50_000
    data = sample(null1, n, seed=22)
    assert abs(data.protected_indicator().mean() - 0.10) < 4 * np.sqrt(0.09 / n)


# ==================== ORACLE ====================

def test_oracle_identity_holds(desk1):
    truth = oracle_decomposition(desk1)
    assert truth.method == "exact"
    assert truth.tv == pytest.approx(truth.x_de - truth.x_ie - truth.x_se, abs=1e-12)
    assert abs(truth.tv) > 0.05


def test_null_spec_oracle_is_zero(null1):
    truth = oracle_decomposition(null1)
    for value in (truth.tv, truth.x_de, truth.x_ie, truth.x_se):
        assert value == pytest.approx(0.0, abs=1e-12)
    assert oracle_cate(null1, {"female": 1, "ses": "Q2"}) == pytest.approx(0.0, abs=1e-12)


def test_no_confounders_no_mediators_only_direct_path():
    spec = scm_from_dict({
        "name": "direct-only", "seed": 1,
        "protected": {"name": "x", "intercept": -0.5},
        "outcome": {"name": "y", "intercept": 1.0, "x": 0.7, "sigma": 1.0},
    })
    truth = oracle_decomposition(spec)
    assert truth.x_de == pytest.approx(0.7)
    assert truth.tv == pytest.approx(0.7)
    assert truth.x_ie == pytest.approx(0.0, abs=1e-12)
    assert truth.x_se == pytest.approx(0.0, abs=1e-12)


def test_constant_effect_cate():
    spec = constant_effect_spec(effect=0.4)
    for stratum in spec.z_dist.enumerate():
        assert oracle_cate(spec, stratum[0]) == pytest.approx(0.4)


def test_ctf_de_equals_cate_without_mediated_channel(desk1):
    no_channel = desk1.with_overrides(w_models=[dataclasses.replace(m, x=0.0) for m in desk1.w_models])
    for values, _ in no_channel.z_dist.enumerate():
        assert oracle_ctf_de(no_channel, values) == pytest.approx(oracle_cate(no_channel, values), abs=1e-12)


def test_strata_table_matches_point_queries(desk1):
    truth = oracle_decomposition(desk1)
    assert len(truth.strata) == 6
    for row in truth.strata:
        assert row["tau"] == pytest.approx(oracle_cate(desk1, row["z"]))
        assert row["ctf_de"] == pytest.approx(oracle_ctf_de(desk1, row["z"]))
    assert sum(row["prob_given_x0"] for row in truth.strata) == pytest.approx(1.0)


def test_x_de_is_ctf_de_averaged_over_x0(desk1):
    truth = oracle_decomposition(desk1)
    assert truth.x_de == pytest.approx(sum(r["prob_given_x0"] * r["ctf_de"] for r in truth.strata))


def test_unknown_stratum(desk1):
    with pytest.raises(UnknownStratum):
        oracle_cate(desk1, {"female": 1, "ses": "Q9"})
    with pytest.raises(UnknownStratum):
        oracle_ctf_de(desk1, {"ses": "Q1"})


def test_exact_oracle_needs_finite_confounders():
    spec = scm_from_dict({
        "name": "continuous", "seed": 2,
        "confounders": {"mode": "independent", "variables": [{"name": "score", "kind": "continuous"}]},
        "protected": {"name": "x", "z": {"score": 0.5}},
        "outcome": {"name": "y", "x": 0.3, "z": {"score": 1.0}},
    })
    with pytest.raises(NotEnumerable):
        oracle_decomposition(spec, method="exact")


def test_table_mode_confounders():
    spec = binary_confounder_spec("table", seed=3, x_effect=0.5)
    raw = scm_to_dict(spec)
    raw["confounders"] = {
        "mode": "table",
        "variables": [{"name": "z1", "kind": "binary"}],
        "strata": [{"values": {"z1": 0}, "prob": 0.25}, {"values": {"z1": 1}, "prob": 0.75}],
    }
    table_spec = scm_from_dict(raw)
    data = sample(table_spec, 20_000, seed=4)
    assert data.column("z1").mean() == pytest.approx(0.75, abs=0.02)
    assert oracle_decomposition(table_spec).x_de == pytest.approx(0.5)


@pytest.mark.slow
def test_monte_carlo_oracle_agrees_with_enumeration(desk1):
    exact = oracle_decomposition(desk1, method="exact")
    mc = oracle_decomposition(desk1, method="montecarlo", reps=400_000, threads=2)
    for name in ("tv", "x_de", "x_ie", "x_se"):
        assert abs(getattr(mc, name) - getattr(exact, name)) < 4 * mc.mc_se[name]
