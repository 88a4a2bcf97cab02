"""KAM step machinery: schedules, conjugation chains, steps, drivers."""

from .chain import ConjugationChain, FiberTranslation, NearIdentity
from .schedule import KamSchedule, audit_schedule
from .steps import QpfSystem, load_system, step_a_eliminate, step_b_reduce, step_c_conjugate_back
from .drivers import run_almost_reducibility, run_rotations_reducibility
from .approximants import linearizable_approximant, mode_locked_approximant

__all__ = [
    "ConjugationChain",
    "FiberTranslation",
    "NearIdentity",
    "KamSchedule",
    "audit_schedule",
    "QpfSystem",
    "load_system",
    "step_a_eliminate",
    "step_b_reduce",
    "step_c_conjugate_back",
    "run_almost_reducibility",
    "run_rotations_reducibility",
    "linearizable_approximant",
    "mode_locked_approximant",
]
