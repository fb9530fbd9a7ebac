"""
Sampler - Draws SFM datasets from an ScmSpec

Rows are generated in fixed-size blocks; block b draws from its own Philox
substream keyed by (seed, b), so the output depends only on (spec, n, seed)
and never on the number of worker threads.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List

import numpy as np

from src.core.dataset import Dataset
from src.scm.spec import ScmSpec

BLOCK_SIZE = 16384


def block_rng(seed: int, block: int, stream: int = 0) -> np.random.Generator:
    """Counter-based substream for one block."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stream, block])))


@dataclass
class ExogenousBlock:
    """Confounders plus the exogenous uniforms/normals of X, each W_j and Y."""
    z: Dict[str, np.ndarray]
    u_x: np.ndarray
    u_w: np.ndarray
    u_y: np.ndarray

    @property
    def n(self) -> int:
        return len(self.u_x)


def draw_exogenous(spec: ScmSpec, rng: np.random.Generator, n: int) -> ExogenousBlock:
    z = spec.z_dist.sample(rng, n)
    u_x = rng.random(n)
    u_w = rng.random((n, len(spec.w_models)))
    u_y = rng.standard_normal(n)
    return ExogenousBlock(z=z, u_x=u_x, u_w=u_w, u_y=u_y)


def mediators_under(spec: ScmSpec, x, block: ExogenousBlock) -> Dict[str, np.ndarray]:
    """Mediator chain evaluated with X set to x (scalar or per-row), sharing the W noise."""
    w: Dict[str, np.ndarray] = {}
    for j, mech in enumerate(spec.w_models):
        p = mech.prob(x, block.z, w, block.n)
        w[mech.name] = (block.u_w[:, j] < p).astype(float)
    return w


def outcome_under(spec: ScmSpec, x, w: Dict[str, np.ndarray], block: ExogenousBlock) -> np.ndarray:
    return spec.y_model.mean(x, block.z, w, block.n) + spec.y_model.sigma * block.u_y


def _sample_block(spec: ScmSpec, seed: int, block: int, n: int) -> Dict[str, np.ndarray]:
    exo = draw_exogenous(spec, block_rng(seed, block), n)
    e1 = spec.x_model.prob(0.0, exo.z, {}, n)
    x = (exo.u_x < e1).astype(float)
    w = mediators_under(spec, x, exo)
    y = outcome_under(spec, x, w, exo)

    columns = {spec.x_model.name: x}
    columns.update(exo.z)
    columns.update(w)
    columns[spec.y_model.name] = y
    return columns


def block_sizes(n: int) -> List[int]:
    full, rest = divmod(n, BLOCK_SIZE)
    return [BLOCK_SIZE] * full + ([rest] if rest else [])


def sample(spec: ScmSpec, n: int, seed: int = None, threads: int = 1) -> Dataset:
    """
    Draw n i.i.d. rows in topological order Z -> X -> W -> Y.

    Args:
        spec: Structural model
        n: Number of rows (>= 1)
        seed: Overrides spec.seed when given
        threads: Worker threads for block generation

    Returns:
        Dataset with the schema implied by the SCM
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    seed = spec.seed if seed is None else seed
    sizes = block_sizes(n)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        blocks = list(pool.map(lambda b: _sample_block(spec, seed, b, sizes[b]), range(len(sizes))))

    schema = spec.schema()
    columns = {name: np.concatenate([blk[name] for blk in blocks]) for name in schema.names}
    return Dataset.from_columns(schema, columns)
