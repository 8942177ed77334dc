"""
Shared package for the NRPS simulation lab

This package contains the validated data models, error hierarchy,
logging, settings and utilities used by every engine module.
"""

from .models import (
    ShockKind,
    ShockSpec,
    ShockField,
    ParamBounds,
    DemandParams,
    Scenario,
    SolverPath,
    PricingSolution,
    Decision,
    DecisionMeta,
    PolicyName,
    PolicyKind,
    RunConfig,
    ResultRow,
    off_diagonal_mask
)

from .utils import (
    generate_id,
    hash_content,
    canonical_json,
    format_timestamp,
    safe_json_dumps,
    measure_execution_time
)

__all__ = [
    # Models
    'ShockKind',
    'ShockSpec',
    'ShockField',
    'ParamBounds',
    'DemandParams',
    'Scenario',
    'SolverPath',
    'PricingSolution',
    'Decision',
    'DecisionMeta',
    'PolicyName',
    'PolicyKind',
    'RunConfig',
    'ResultRow',
    'off_diagonal_mask',

    # Utilities
    'generate_id',
    'hash_content',
    'canonical_json',
    'format_timestamp',
    'safe_json_dumps',
    'measure_execution_time'
]
