"""End-to-end synthesis: capacity -> closed form -> plan -> grid -> schedule."""

from dataclasses import dataclass

from .grid import (DistributionPlan, ProcGrid, derive_grid,
                   ensure_distributable, plan_distribution)
from .model import ConvProblem, MachineSpec
from .optimizer import (ClosedFormSolution, IntegerPlan, effective_capacity,
                        integerize, solve_closed_form)
from .schedule import CommSchedule, build_schedule


@dataclass(frozen=True)
class SynthesisResult:
    m_l: float
    solution: ClosedFormSolution
    plan: IntegerPlan
    grid: ProcGrid
    dist: DistributionPlan
    schedule: CommSchedule
    adjustment_delta: int


def synthesize(prob: ConvProblem, machine: MachineSpec,
               scope: str = "c_innermost", lower_bound: bool = False,
               for_simulation: bool = False) -> SynthesisResult:
    """Derive every planning artifact for one layer/machine pair.

    `for_simulation=True` additionally requires a uniform initial input
    layout so the exact-counting simulator's identities hold; the integer
    search is rerun under that filter when needed and the cost delta is
    reported in the result.
    """
    m_l = effective_capacity(machine.m, prob, lower_bound=lower_bound)
    sol = solve_closed_form(prob, machine, m_l, permutation_scope=scope)
    plan = integerize(sol, prob, machine)
    plan, delta = ensure_distributable(sol, plan, prob, machine,
                                       require_uniform=for_simulation)
    grid = derive_grid(plan, sol, prob, machine)
    dist = plan_distribution(grid, plan, prob)
    sched = build_schedule(grid, plan, dist, prob)
    return SynthesisResult(m_l=m_l, solution=sol, plan=plan, grid=grid,
                           dist=dist, schedule=sched, adjustment_delta=delta)
