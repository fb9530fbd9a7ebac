"""
Synthetic SCM - parametric structural models, sampling and ground-truth oracles
"""

from .oracle import GroundTruth, oracle_cate, oracle_ctf_de, oracle_decomposition
from .sampler import sample
from .spec import (
    ScmSpec, dump_scm_spec, load_scm_spec, reference_spec, schema_for, scm_from_dict, scm_to_dict,
)

__all__ = [
    'GroundTruth', 'oracle_cate', 'oracle_ctf_de', 'oracle_decomposition', 'sample',
    'ScmSpec', 'dump_scm_spec', 'load_scm_spec', 'reference_spec', 'schema_for',
    'scm_from_dict', 'scm_to_dict',
]
