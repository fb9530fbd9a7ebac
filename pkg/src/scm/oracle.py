"""
Oracle - Ground-truth causal quantities of an ScmSpec

Exact mode enumerates every (z, w) stratum with the true structural
probabilities. Monte-Carlo mode re-runs the structural equations in the
factual and intervened worlds with shared exogenous draws.
"""

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional

import numpy as np

from src.errors import NotEnumerable
from src.scm.sampler import block_rng, block_sizes, draw_exogenous, mediators_under, outcome_under
from src.scm.spec import ScmSpec

MC_STREAM = 1


@dataclass
class GroundTruth:
    """
    Oracle values in outcome units.

    strata (Exact mode) lists every confounder configuration with P(z), P(z|x0),
    tau(z) and ctf-DE(z).
    """
    tv: float
    x_de: float
    x_ie: float
    x_se: float
    method: str
    strata: List[Dict] = field(default_factory=list)
    reps: Optional[int] = None
    mc_se: Dict[str, float] = field(default_factory=dict)
    spec: Optional[ScmSpec] = field(default=None, repr=False, compare=False)

    def tau_of(self, z: Mapping[str, object]) -> float:
        return oracle_cate(self.spec, z)

    def ctf_de_of(self, z: Mapping[str, object]) -> float:
        return oracle_ctf_de(self.spec, z)

    def to_dict(self) -> Dict:
        out = {
            "spec": self.spec.name if self.spec is not None else None,
            "method": self.method,
            "tv": self.tv,
            "x_de": self.x_de,
            "x_ie": self.x_ie,
            "x_se": self.x_se,
        }
        if self.method == "montecarlo":
            out["reps"] = self.reps
            out["mc_se"] = dict(self.mc_se)
        out["strata"] = [
            {**s, "z": {k: (v if isinstance(v, str) else float(v)) for k, v in s["z"].items()}}
            for s in self.strata
        ]
        return out


# ==================== STRATUM MOMENTS ====================

def _mediator_configs(spec: ScmSpec) -> List[Dict[str, float]]:
    names = spec.chain_order
    return [dict(zip(names, map(float, bits))) for bits in itertools.product((0, 1), repeat=len(names))]


def stratum_moments(spec: ScmSpec, zcols: Mapping[str, np.ndarray], n_strata: int) -> Dict[str, np.ndarray]:
    """
    Per-stratum conditional moments with the mediators summed out exactly.

    Returns:
        Dict with e1 (P(X=1|z)), m0, m1 (E[Y|do(x), z]) and eta (E[Y_{x1, W_{x0}}|z])
    """
    configs = _mediator_configs(spec)
    pw = {0: [], 1: []}
    mu = {0: [], 1: []}
    for x in (0, 1):
        for config in configs:
            wcols = {k: np.full(n_strata, v) for k, v in config.items()}
            prob = np.ones(n_strata)
            for mech in spec.w_models:
                p = mech.prob(float(x), zcols, wcols, n_strata)
                prob = prob * np.where(wcols[mech.name] == 1.0, p, 1.0 - p)
            pw[x].append(prob)
            mu[x].append(spec.y_model.mean(float(x), zcols, wcols, n_strata))

    pw0, pw1 = np.array(pw[0]), np.array(pw[1])
    mu0, mu1 = np.array(mu[0]), np.array(mu[1])
    return {
        "e1": spec.x_model.prob(0.0, zcols, {}, n_strata),
        "m0": np.sum(mu0 * pw0, axis=0),
        "m1": np.sum(mu1 * pw1, axis=0),
        "eta": np.sum(mu1 * pw0, axis=0),
    }


def oracle_cate(spec: ScmSpec, z: Mapping[str, object]) -> float:
    """
    tau(z) = sum_w E[Y|x1,w,z]P(w|x1,z) - sum_w E[Y|x0,w,z]P(w|x0,z).

    Raises:
        UnknownStratum: If z is outside the confounder support
    """
    zcols = spec.z_dist.check_support(z)
    moments = stratum_moments(spec, zcols, 1)
    return float(moments["m1"][0] - moments["m0"][0])


def oracle_ctf_de(spec: ScmSpec, z: Mapping[str, object]) -> float:
    """
    ctf-DE(z) = sum_w (E[Y|x1,w,z] - E[Y|x0,w,z]) P(w|x0,z).

    Raises:
        UnknownStratum: If z is outside the confounder support
    """
    zcols = spec.z_dist.check_support(z)
    moments = stratum_moments(spec, zcols, 1)
    return float(moments["eta"][0] - moments["m0"][0])


# ==================== DECOMPOSITION ====================

def _exact(spec: ScmSpec) -> GroundTruth:
    strata = spec.z_dist.enumerate()
    n_strata = len(strata)
    zcols = {}
    for var in spec.z_dist.variables:
        values = [values[var.name] for values, _ in strata]
        zcols[var.name] = (np.array([str(v) for v in values], dtype=object)
                           if var.kind.value == "categorical" else np.array(values, dtype=float))
    if n_strata == 0:
        zcols, n_strata, pz = {}, 1, np.ones(1)
        strata = [({}, 1.0)]
    else:
        pz = np.array([prob for _, prob in strata], dtype=float)

    moments = stratum_moments(spec, zcols, n_strata)
    e1 = moments["e1"]
    p1 = float(np.sum(pz * e1))
    pz_x1 = pz * e1 / p1
    pz_x0 = pz * (1.0 - e1) / (1.0 - p1)

    ey0 = float(np.sum(pz_x0 * moments["m0"]))
    ey1 = float(np.sum(pz_x1 * moments["m1"]))
    theta1 = float(np.sum(pz_x0 * moments["eta"]))
    theta2 = float(np.sum(pz_x0 * moments["m1"]))

    table = [
        {
            "z": dict(values),
            "prob": float(pz[i]),
            "prob_given_x0": float(pz_x0[i]),
            "prob_given_x1": float(pz_x1[i]),
            "tau": float(moments["m1"][i] - moments["m0"][i]),
            "ctf_de": float(moments["eta"][i] - moments["m0"][i]),
        }
        for i, (values, _) in enumerate(strata)
    ]

    return GroundTruth(
        tv=ey1 - ey0,
        x_de=theta1 - ey0,
        x_ie=theta1 - theta2,
        x_se=theta2 - ey1,
        method="exact",
        strata=table,
        spec=spec,
    )


def _mc_block(spec: ScmSpec, block: int, n: int) -> Dict[str, np.ndarray]:
    exo = draw_exogenous(spec, block_rng(spec.seed, block, MC_STREAM), n)
    e1 = spec.x_model.prob(0.0, exo.z, {}, n)
    x = (exo.u_x < e1).astype(int)
    w0 = mediators_under(spec, 0.0, exo)
    w1 = mediators_under(spec, 1.0, exo)
    return {
        "x": x,
        "y00": outcome_under(spec, 0.0, w0, exo),
        "y10": outcome_under(spec, 1.0, w0, exo),
        "y11": outcome_under(spec, 1.0, w1, exo),
    }


def _montecarlo(spec: ScmSpec, reps: int, threads: int) -> GroundTruth:
    sizes = block_sizes(reps)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        blocks = list(pool.map(lambda b: _mc_block(spec, b, sizes[b]), range(len(sizes))))
    draws = {k: np.concatenate([blk[k] for blk in blocks]) for k in blocks[0]}

    g0, g1 = draws["x"] == 0, draws["x"] == 1
    n0, n1 = int(g0.sum()), int(g1.sum())

    def two_sample(a, b):
        return float(np.sqrt(np.var(a, ddof=1) / len(a) + np.var(b, ddof=1) / len(b)))

    de_rows = draws["y10"][g0] - draws["y00"][g0]
    ie_rows = draws["y10"][g0] - draws["y11"][g0]

    ey0 = float(np.mean(draws["y00"][g0]))
    ey1 = float(np.mean(draws["y11"][g1]))
    x_de = float(np.mean(de_rows))
    x_ie = float(np.mean(ie_rows))
    x_se = float(np.mean(draws["y11"][g0]) - ey1)

    mc_se = {
        "tv": two_sample(draws["y11"][g1], draws["y00"][g0]),
        "x_de": float(np.std(de_rows, ddof=1) / np.sqrt(n0)),
        "x_ie": float(np.std(ie_rows, ddof=1) / np.sqrt(n0)),
        "x_se": two_sample(draws["y11"][g0], draws["y11"][g1]),
    }
    return GroundTruth(
        tv=ey1 - ey0, x_de=x_de, x_ie=x_ie, x_se=x_se,
        method="montecarlo", reps=reps, mc_se=mc_se, spec=spec,
    )


def oracle_decomposition(spec: ScmSpec, method: str = "auto", reps: int = 1_000_000,
                         threads: int = 1) -> GroundTruth:
    """
    Ground-truth TV, x-DE, x-IE and x-SE.

    Args:
        spec: Structural model
        method: "exact", "montecarlo" or "auto" (exact when Z is finite)
        reps: Monte-Carlo replicates
        threads: Worker threads for Monte-Carlo blocks

    Returns:
        GroundTruth

    Raises:
        NotEnumerable: If exact mode is requested with a continuous confounder
    """
    if method == "auto":
        method = "exact" if spec.z_dist.is_finite else "montecarlo"
    if method == "exact":
        if not spec.z_dist.is_finite:
            raise NotEnumerable("Exact oracle needs finite confounders; use method='montecarlo'")
        return _exact(spec)
    if method == "montecarlo":
        return _montecarlo(spec, reps, threads)
    raise ValueError(f"Unknown oracle method {method!r}")
