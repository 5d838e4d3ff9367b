"""Tactic environments: the decidable toy prover and the external-prover adapter."""

from stepforge.env.base import (
    NO_GOALS_PP,
    Advanced,
    ApplyResult,
    Environment,
    Failed,
    MissingNegation,
    ProofPath,
    ReplayError,
    Solved,
    Statement,
    replay,
)
from stepforge.env.external import ExternalEnv, ExternalState, ProtocolError, ProverTimeout
from stepforge.env.formula import (
    And,
    Atom,
    Falsum,
    Formula,
    Imp,
    Or,
    ParseError,
    format_formula,
    parse_formula,
)
from stepforge.env.toy import (
    MAX_ORACLE_DEPTH,
    NO_GOALS,
    ProofState,
    Sequent,
    ToyEnv,
    apply_tactic,
    decide,
    enumerate_tactics,
    init_state,
    negate,
    oracle_search,
    parse_state,
)

__all__ = [
    "NO_GOALS_PP",
    "Advanced",
    "ApplyResult",
    "Environment",
    "Failed",
    "MissingNegation",
    "ProofPath",
    "ReplayError",
    "Solved",
    "Statement",
    "replay",
    "ExternalEnv",
    "ExternalState",
    "ProtocolError",
    "ProverTimeout",
    "And",
    "Atom",
    "Falsum",
    "Formula",
    "Imp",
    "Or",
    "ParseError",
    "format_formula",
    "parse_formula",
    "MAX_ORACLE_DEPTH",
    "NO_GOALS",
    "ProofState",
    "Sequent",
    "ToyEnv",
    "apply_tactic",
    "decide",
    "enumerate_tactics",
    "init_state",
    "negate",
    "oracle_search",
    "parse_state",
]
