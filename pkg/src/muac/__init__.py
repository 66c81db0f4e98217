"""Automatic fair exchanges of finite resources under mutual access control policies."""

from .errors import (
    BudgetExceeded,
    CorruptLog,
    HeadNotMe,
    InfeasibleAt,
    MuacError,
    NoSolution,
    NotFactOwner,
    NotInWallet,
    NotOwned,
    PolicyError,
    PolicySyntaxError,
    ResourceVariable,
    UnboundVariable,
)
from .ledger import Ledger, replay
from .logic import (
    Certificate,
    ExactState,
    OwnsAtLeast,
    Theory,
    check,
    check_diagnostics,
    compile_policy,
    compile_state,
    handshake_closure,
)
from .model import (
    Computation,
    Context,
    ContextFact,
    OwnershipState,
    Transfer,
    apply_computation,
    apply_transfer,
    holds,
    state_equal,
)
from .oracle import accepted_by, brute_force_solve, is_fair
from .policy import Policy, RuleInstance, instantiate, parse_policy, pretty_print, validate
from .solver import SolveRequest, find_ordering, solve

__version__ = "0.1.0"
