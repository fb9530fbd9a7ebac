"""
Orchestrator - Runs the fairness-analysis steps as one LangGraph state graph
prepare -> balance -> decompose -> cate -> ctfde -> sensitivity -> manifest
"""

import platform
import warnings
from typing import Dict, List, Optional, TypedDict

import numpy as np
import pandas as pd
import scipy
import statsmodels
import yaml
from langgraph.graph import END, StateGraph

from src.config import PipelineConfig
from src.core.dataset import Dataset
from src.core.folds import FoldAssignment, assign_folds
from src.core.imputation import simple_impute
from src.core.io import dataset_to_csv_text, read_dataset_csv
from src.core.schema import Kind, read_schema
from src.core.validation import validate
from src.errors import DataFormatError, EmptyStratum, MissingData
from src.estimators.balance import balance_table, format_balance
from src.estimators.cate_forest import build_cate_report, fit_causal_forest
from src.estimators.common import discrete_confounders
from src.estimators.ctf_de import build_ctf_de_report, ctf_de_pseudo_outcomes
from src.estimators.decomposition import (
    debiased_decomposition, format_decomposition, plugin_model, plugin_strata, tv_empirical,
)
from src.estimators.sensitivity import (
    fit_sensitivity_model, format_sensitivity, robustness_value, trimming_curve,
)
from src.nuisance.cross_fit import NuisanceFits, cross_fit
from src.scm.oracle import oracle_decomposition
from src.scm.sampler import sample
from src.scm.spec import load_scm_spec
from src.utils.artifacts import ArtifactStore
from src.utils.logger import ActionType, log_event

TOOL_VERSION = "1.0.0"
STEPS = ("simulate", "balance", "decompose", "cate", "ctfde", "sensitivity")


class PipelineState(TypedDict):
    """
    State shared by every node of the graph.

    Nodes read the config and the requested steps, fill the dataset, folds and
    cross-fitted nuisances on demand, and record per-step summaries in results.
    """
    config: PipelineConfig
    steps: List[str]
    store: ArtifactStore
    dataset: Optional[Dataset]
    folds: Optional[FoldAssignment]
    fits: Optional[NuisanceFits]
    results: Dict
    warnings: List[str]


def _banner(title: str):
    print("\n" + "=" * 30)
    print(title)
    print("=" * 30)


def _skipped(state: PipelineState, step: str) -> bool:
    if step in state["steps"]:
        return False
    _banner(f"NODE: {step.upper()} (Skipped)")
    return True


def _record_warnings(state: PipelineState, caught) -> None:
    for w in caught:
        message = f"{w.category.__name__}: {w.message}"
        if message not in state["warnings"]:
            state["warnings"].append(message)
            print(f"   ⚠️ {message}")


def _check_written(result: Dict) -> str:
    if not result["success"]:
        raise OSError(result["error"])
    print(f"   ✅ {result['path']}")
    return result["path"]


class PipelineOrchestrator:
    """
    LangGraph orchestrator for the analysis pipeline.

    Every node runs only when its step was requested; the manifest node always runs.
    """

    def __init__(self, config: PipelineConfig, steps: List[str]):
        unknown = [s for s in steps if s not in STEPS]
        if unknown:
            raise ValueError(f"Unknown steps {unknown}; expected a subset of {list(STEPS)}")
        self.config = config
        self.steps = list(steps)
        self.store = ArtifactStore(config.out, config.config_hash)
        self.workflow = self._build_workflow_graph()

    def _build_workflow_graph(self):
        workflow = StateGraph(PipelineState)

        # ===== NODES =====
        workflow.add_node("prepare", self._prepare_node)
        workflow.add_node("balance", self._balance_node)
        workflow.add_node("decompose", self._decompose_node)
        workflow.add_node("cate", self._cate_node)
        workflow.add_node("ctfde", self._ctfde_node)
        workflow.add_node("sensitivity", self._sensitivity_node)
        workflow.add_node("manifest", self._manifest_node)

        # ===== EDGES =====
        workflow.set_entry_point("prepare")
        workflow.add_edge("prepare", "balance")
        workflow.add_edge("balance", "decompose")
        workflow.add_edge("decompose", "cate")
        workflow.add_edge("cate", "ctfde")
        workflow.add_edge("ctfde", "sensitivity")
        workflow.add_edge("sensitivity", "manifest")
        workflow.add_edge("manifest", END)

        return workflow.compile()

    # ==================== SHARED INPUTS ====================

    def _load_dataset(self, state: PipelineState) -> Dataset:
        config = state["config"]
        if config.scm is not None:
            spec = load_scm_spec(config.scm)
            dataset = sample(spec, config.n, seed=config.seed, threads=config.threads)
            print(f"   🎲 Drew {dataset.n} rows from SCM '{spec.name}' (seed {config.seed})")
            log_event("prepare", ActionType.SIMULATION,
                      {"scm": spec.name, "n": dataset.n, "seed": config.seed}, "SUCCESS")
            if "simulate" in state["steps"]:
                self._write_simulation(state, spec, dataset)
            return dataset

        schema = read_schema(config.schema)
        dataset = read_dataset_csv(config.data, schema)
        print(f"   📄 Read {dataset.n} rows from {config.data}")
        return dataset

    def _write_simulation(self, state: PipelineState, spec, dataset: Dataset):
        store = state["store"]
        config = state["config"]
        _check_written(store.write_text("data.csv", dataset_to_csv_text(dataset)))
        schema_text = yaml.safe_dump(dataset.schema.to_dict(), sort_keys=False, allow_unicode=True)
        _check_written(store.write_text("schema.yaml", schema_text))
        truth = oracle_decomposition(spec, threads=config.threads)
        _check_written(store.write_json("ground_truth.json", truth.to_dict()))
        state["results"]["simulate"] = {"n": dataset.n, "tv": truth.tv, "method": truth.method}

    def _require_complete(self, state: PipelineState, dataset: Dataset) -> Dataset:
        violations = validate(dataset)
        if violations:
            preview = "; ".join(str(v) for v in violations[:5])
            raise DataFormatError(f"{len(violations)} invalid cell(s): {preview}")
        if dataset.is_complete:
            return dataset
        if state["config"].impute == "simple":
            n_missing = len(dataset.missing_cells())
            print(f"   🩹 Imputing {n_missing} missing cell(s) (mean/mode)")
            return simple_impute(dataset)
        raise MissingData(dataset.missing_cells())

    def _ensure_fits(self, state: PipelineState) -> NuisanceFits:
        if state["fits"] is None:
            config = state["config"]
            print(f"   🔁 Cross-fitting nuisances ({config.folds} folds, {config.threads} thread(s))")
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                state["fits"] = cross_fit(state["dataset"], state["folds"], config.learners, threads=config.threads)
            _record_warnings(state, caught)
        return state["fits"]

    def _subgroups(self, state: PipelineState) -> List[str]:
        config = state["config"]
        if config.subgroups is not None:
            return list(config.subgroups)
        return discrete_confounders(state["dataset"].schema)

    # ==================== NODES ====================

    def _prepare_node(self, state: PipelineState) -> PipelineState:
        _banner("NODE: PREPARE (Data)")
        dataset = self._load_dataset(state)
        analysis = [s for s in state["steps"] if s != "simulate"]
        if analysis:
            dataset = self._require_complete(state, dataset)
            state["folds"] = assign_folds(dataset.n, state["config"].folds, state["config"].seed)
        state["dataset"] = dataset
        n0, n1 = dataset.group_sizes()
        log_event("prepare", ActionType.DIAGNOSTIC, {"n": dataset.n, "n0": n0, "n1": n1}, "SUCCESS")
        return state

    def _balance_node(self, state: PipelineState) -> PipelineState:
        if _skipped(state, "balance"):
            return state
        _banner("NODE: BALANCE (SMD)")
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            table = balance_table(state["dataset"])
        _record_warnings(state, caught)
        print(format_balance(table))

        store = state["store"]
        _check_written(store.write_json("balance.json", table.to_dict()))
        _check_written(store.write_csv("balance.csv", table.rows))
        flagged = table.flagged["variable"].tolist()
        state["results"]["balance"] = {"flagged": len(flagged)}
        log_event("balance", ActionType.DIAGNOSTIC, {"rows": len(table.rows), "flagged": flagged}, "SUCCESS")
        return state

    def _decompose_node(self, state: PipelineState) -> PipelineState:
        if _skipped(state, "decompose"):
            return state
        _banner("NODE: DECOMPOSE (TV = DE - IE - SE)")
        config = state["config"]
        dataset = state["dataset"]
        fits = self._ensure_fits(state)

        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            debiased = debiased_decomposition(dataset, fits)
            model = plugin_model(dataset, fits, n_bootstrap=config.bootstrap, seed=config.seed)
        _record_warnings(state, caught)
        print(format_decomposition(debiased))

        payload = {
            "tv_empirical": tv_empirical(dataset).to_dict(),
            "debiased": debiased.to_dict(),
            "plugin_model": model.to_dict(),
            "plugin_strata": None,
            "warnings": list(state["warnings"]),
        }
        schema = dataset.schema
        if all(v.kind != Kind.CONTINUOUS for v in [*schema.confounders, *schema.mediators]):
            try:
                payload["plugin_strata"] = plugin_strata(dataset, n_bootstrap=config.bootstrap, seed=config.seed).to_dict()
            except EmptyStratum as e:
                print(f"   ⚠️ Plug-in strata estimator unavailable: {e}")
                payload["plugin_strata"] = {"error": str(e), "cells": e.cells}

        _check_written(state["store"].write_json("decomposition.json", payload))
        state["results"]["decompose"] = {name: est.estimate for name, est in debiased.components().items()}
        log_event("decompose", ActionType.ESTIMATION, {
            "inputs": {"n": dataset.n, "folds": config.folds, "learners": config.learners.to_dict()},
            "outputs": state["results"]["decompose"],
        }, "SUCCESS")
        return state

    def _cate_node(self, state: PipelineState) -> PipelineState:
        if _skipped(state, "cate"):
            return state
        _banner("NODE: CATE (Causal forest)")
        config = state["config"]
        dataset = state["dataset"]

        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            model = fit_causal_forest(dataset, state["folds"], config.forest, config.learners, threads=config.threads)
            report = build_cate_report(model, dataset, self._subgroups(state), config.heatmaps)
        _record_warnings(state, caught)
        print(f"   ATE (forest, doubly robust): {report.ate.estimate:.4f} (se {report.ate.se:.4f})")

        store = state["store"]
        _check_written(store.write_json("cate.json", report.to_dict()))
        for key, frame in report.heatmaps.items():
            _check_written(store.write_csv(f"heatmap_cate_{key}.csv", frame))
        state["results"]["cate"] = {"ate": report.ate.estimate}
        log_event("cate", ActionType.ESTIMATION, {
            "inputs": {"n": dataset.n, "n_trees": config.forest.n_trees},
            "outputs": {"ate": report.ate.to_dict(), "importance": report.importance_by_variable},
        }, "SUCCESS")
        return state

    def _ctfde_node(self, state: PipelineState) -> PipelineState:
        if _skipped(state, "ctfde"):
            return state
        _banner("NODE: CTFDE (Counterfactual direct effect)")
        config = state["config"]
        dataset = state["dataset"]
        fits = self._ensure_fits(state)

        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            psi = ctf_de_pseudo_outcomes(dataset, fits)
            bundle = build_ctf_de_report(psi, dataset, config.heatmaps, self._subgroups(state))
        _record_warnings(state, caught)
        overall = bundle["overall"]
        print(f"   ctf-DE overall: {overall.estimate:.4f} (se {overall.se:.4f})")

        store = state["store"]
        payload = {
            "overall": overall.to_dict(),
            "subgroups": {d: frame.to_dict(orient="records") for d, frame in bundle["subgroups"].items()},
            "heatmaps": {key: report.to_dict() for key, report in bundle["heatmaps"].items()},
            "diagnostics": bundle["diagnostics"],
        }
        _check_written(store.write_json("ctf_de.json", payload))
        for key, report in bundle["heatmaps"].items():
            _check_written(store.write_csv(f"heatmap_ctfde_{key}.csv", report.cells))
        state["results"]["ctfde"] = {"overall": overall.estimate}
        log_event("ctfde", ActionType.ESTIMATION, {
            "inputs": {"n": dataset.n, "heatmaps": [list(p) for p in config.heatmaps]},
            "outputs": {"overall": overall.to_dict()},
        }, "SUCCESS")
        return state

    def _sensitivity_node(self, state: PipelineState) -> PipelineState:
        if _skipped(state, "sensitivity"):
            return state
        _banner("NODE: SENSITIVITY (RV + trimming)")
        config = state["config"]
        dataset = state["dataset"]
        fits = self._ensure_fits(state)

        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            report = robustness_value(fit_sensitivity_model(dataset), q=config.q, alpha=config.alpha)
            curve = trimming_curve(dataset, fits, config.trimming, k=config.folds, seed=config.seed,
                                   nuisance=config.learners, threads=config.threads)
        _record_warnings(state, caught)
        print(format_sensitivity(report))
        for entry in curve.entries:
            print(f"   trim {entry.percentile:g}%: n={entry.n_retained}, x-DE={entry.report.x_de.estimate:.4f}")

        store = state["store"]
        _check_written(store.write_json("sensitivity.json", {"robustness": report.to_dict(), "trimming": curve.to_dict()}))
        _check_written(store.write_csv("trimming.csv", curve.to_frame()))
        state["results"]["sensitivity"] = {"rv_q1": report.rv_q1, "rv_alpha": report.rv_alpha}
        log_event("sensitivity", ActionType.SENSITIVITY, {
            "inputs": {"q": config.q, "alpha": config.alpha, "trimming": list(config.trimming)},
            "outputs": {**state["results"]["sensitivity"], "drift": curve.drift()},
        }, "SUCCESS")
        return state

    def _manifest_node(self, state: PipelineState) -> PipelineState:
        _banner("NODE: MANIFEST")
        config = state["config"]
        extra = {
            "seed": config.seed,
            "steps": list(state["steps"]),
            "config": {k: v for k, v in config.to_dict().items() if k not in ("out", "threads")},
            "versions": {
                "tool": TOOL_VERSION,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "pandas": pd.__version__,
                "scipy": scipy.__version__,
                "statsmodels": statsmodels.__version__,
            },
        }
        _check_written(state["store"].write_manifest(extra))
        log_event("manifest", ActionType.EXPORT, {"artifacts": state["store"].artifact_names()}, "SUCCESS")
        return state

    # ==================== ENTRY POINT ====================

    def run(self) -> Dict:
        """
        Execute the graph.

        Returns:
            {success, config_hash, artifacts, results, warnings}

        Raises:
            CfaError: Input and estimation errors propagate to the caller
        """
        initial_state: PipelineState = {
            "config": self.config,
            "steps": self.steps,
            "store": self.store,
            "dataset": None,
            "folds": None,
            "fits": None,
            "results": {},
            "warnings": [],
        }

        print("\n" + "=" * 60)
        print(f"PIPELINE: {', '.join(self.steps)}  (config {self.config.config_hash[:12]})")
        print("=" * 60)

        final_state = self.workflow.invoke(initial_state)
        return {
            "success": True,
            "config_hash": self.config.config_hash,
            "artifacts": final_state["store"].artifact_names(),
            "results": final_state["results"],
            "warnings": final_state["warnings"],
        }
