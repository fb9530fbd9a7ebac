"""
SFM core - schema, dataset container, encoding, imputation and folds
"""

from .dataset import Dataset
from .encoding import DesignMatrices, encode
from .folds import FoldAssignment, assign_folds
from .imputation import simple_impute
from .io import dataset_to_csv_text, read_dataset_csv, write_dataset_csv
from .schema import Kind, Role, SfmSchema, VariableSpec, default_schema, read_schema, write_schema
from .validation import Violation, validate

__all__ = [
    'Dataset', 'DesignMatrices', 'encode', 'FoldAssignment', 'assign_folds',
    'simple_impute', 'dataset_to_csv_text', 'read_dataset_csv', 'write_dataset_csv', 'Kind', 'Role',
    'SfmSchema', 'VariableSpec', 'default_schema', 'read_schema', 'write_schema',
    'Violation', 'validate',
]
