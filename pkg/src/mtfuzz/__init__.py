"""Greybox fuzzing of deeply nested branch constraints on a small target language."""

from .bench import (BoundTooLarge, CyclicProgramUnsupported, FixtureSpec, RandomLimits,
                    brute_force_solve, builtin_targets, gen_random_target, load_fixture,
                    oracle_priors)
from .cfa import (NodesInDifferentFunctions, PostDomTree, PriorSet, TargetNotCondStmt,
                  build_analyses, build_postdom_tree, find_prior_stmts, postdominates)
from .fuzz import (CampaignConfig, CampaignStats, ConfigError, Coverage, ForcedRunRejected,
                   QueueEmpty, TargetParseError, run_campaign, schedule_next, update_coverage)
from .implicit import ImplicitReport, PreconditionViolated, detect_implicit_priors
from .interp import (ExecutionResult, ForcePlan, NotExecutable, Status, TraceEntry, execute,
                     replay_with_choices)
from .ir import (CFG, DuplicateFunction, Program, StmtId, TargetError, TargetSyntaxError,
                 UnknownCallee, format_program, lower_to_cfg, parse_target, validate_program)
from .objective import JointObjective, ObjectiveTerm, joint_objective, rectify, transform_predicate
from .solver import (ConstraintTarget, SolveOutcome, SolverConfig, SolverContext, SolveStatus,
                     descend, make_target, solve_constraint, strategy_joint, strategy_plain,
                     strategy_reachability, strategy_satisfiability)
from .taint_group import EffectiveSet, EmptyTargetTaint, UnionFind, effective_priors

__version__ = "0.1.0"

__all__ = [n for n in dir() if not n.startswith("_")]
