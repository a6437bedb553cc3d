"""Processor-grid derivation and initial data distribution.

The P processors form a logical five-dimensional grid with one level per
tiled loop, P_i = N_i / W_i.  Ownership follows the index structure of the
three tensors: a loop index missing from a tensor's subscript means all
processors along that grid dimension touch identical slices, so the initial
layout splits each shared slice evenly across the processors that share it:

- Ker slices (per channel/feature block) are split along c across the
  b,h,w dimensions of the grid;
- In slices (per batch/channel/pixel block, halo included) are split along
  c across the k dimension;
- Out blocks are replicated along c (a final reduction merges them), so no
  Out communication happens during execution.

Input halo rows on a work-partition boundary are needed by both neighbors;
ownership assigns each element to the lowest pixel-grid coordinate that
needs it, keeping the initial layout disjoint.
"""

from dataclasses import dataclass
from itertools import product

from .errors import GridProductMismatch, NonDividingPartition, SubSliceIndivisible
from .model import ConvProblem, MachineSpec
from .optimizer import CASE_1A, CASE_1B, ClosedFormSolution, IntegerPlan, integerize

AXES = ("b", "k", "c", "h", "w")


@dataclass(frozen=True)
class ProcGrid:
    """Logical processor grid, one dimension per tiled loop."""

    p_b: int
    p_k: int
    p_c: int
    p_h: int
    p_w: int

    @property
    def size(self) -> int:
        return self.p_b * self.p_k * self.p_c * self.p_h * self.p_w

    @property
    def p_bhw(self) -> int:
        return self.p_b * self.p_h * self.p_w

    def coords(self):
        """All grid coordinates (b, k, c, h, w) in rank order."""
        return product(range(self.p_b), range(self.p_k), range(self.p_c),
                       range(self.p_h), range(self.p_w))

    def rank_of(self, coord) -> int:
        b, k, c, h, w = coord
        return (((b * self.p_k + k) * self.p_c + c) * self.p_h + h) * self.p_w + w

    def bhw_index(self, coord) -> int:
        """Linear position along the combined b,h,w dimensions (w fastest)."""
        b, _, _, h, w = coord
        return (b * self.p_h + h) * self.p_w + w


@dataclass(frozen=True)
class OwnershipRecord:
    """One rectangular slice of a tensor owned by one processor.

    `ranges` holds half-open (lo, hi) index ranges, one per tensor dimension:
    In (b, c, x, y); Ker (k, c, r, s); Out (b, k, w, h).
    """

    tensor: str
    owner: tuple[int, int, int, int, int]
    ranges: tuple[tuple[int, int], ...]

    @property
    def elements(self) -> int:
        n = 1
        for lo, hi in self.ranges:
            n *= hi - lo
        return n


@dataclass(frozen=True)
class DistributionPlan:
    """Initial ownership of all three tensors plus Out replication factor."""

    records: tuple[OwnershipRecord, ...]
    out_replicas: int

    def records_for(self, owner, tensor=None):
        return [r for r in self.records
                if r.owner == owner and (tensor is None or r.tensor == tensor)]

    def owned_elements(self, owner, tensor=None) -> int:
        return sum(r.elements for r in self.records_for(owner, tensor))


def derive_grid(plan: IntegerPlan, sol_case, prob: ConvProblem,
                machine: MachineSpec) -> ProcGrid:
    """Derive the processor grid from an integer plan, P_i = N_i / W_i.

    `sol_case` is the regime case label (or a ClosedFormSolution); regime-1
    plans must keep a single channel level.
    """
    pp = plan.partition
    dims = {}
    for axis in AXES:
        n = getattr(prob, f"n_{axis}")
        w = getattr(pp, f"w_{axis}")
        if n % w:
            raise NonDividingPartition(f"w_{axis}={w} does not divide n_{axis}={n}")
        dims[axis] = n // w
    grid = ProcGrid(p_b=dims["b"], p_k=dims["k"], p_c=dims["c"],
                    p_h=dims["h"], p_w=dims["w"])
    if grid.size != machine.p:
        raise GridProductMismatch(
            f"grid product {grid.size} does not equal P = {machine.p}")
    case = getattr(sol_case, "case_label", sol_case)
    if case in (CASE_1A, CASE_1B) and grid.p_c != 1:
        raise GridProductMismatch(
            f"regime-1 plans keep channels unsplit but p_c = {grid.p_c}")
    return grid


def _owned_span(idx: int, count: int, stride: int, w: int, halo: int) -> tuple[int, int]:
    """Disjoint input span owned along one pixel axis.

    Block `idx` of `count` owns [stride*idx*w, stride*(idx+1)*w) shifted so
    the first block absorbs the shared halo head and the last block the
    halo tail; the union covers the full stride*count*w + halo extent.
    """
    lo = 0 if idx == 0 else stride * idx * w + halo
    hi = stride * (idx + 1) * w + halo
    return lo, hi


def needed_in_span_x(w_hat: int, pp, prob: ConvProblem) -> tuple[int, int]:
    """Input x-range a pixel-grid column needs, halo included."""
    lo = prob.sigma_w * w_hat * pp.w_w
    return lo, lo + prob.sigma_w * pp.w_w + prob.n_r - 1


def needed_in_span_y(h_hat: int, pp, prob: ConvProblem) -> tuple[int, int]:
    lo = prob.sigma_h * h_hat * pp.w_h
    return lo, lo + prob.sigma_h * pp.w_h + prob.n_s - 1


def halo_ownership_uniform(grid: ProcGrid, prob: ConvProblem) -> bool:
    """True when every processor owns an equal share of the input layout.

    Splitting a pixel dimension across processors skews ownership whenever
    the stencil creates a halo overlap on that axis, and the rotating
    broadcast along k cannot source the neighbor-owned halo rows.  Such
    grids still plan and distribute, but the exact volume and memory
    identities (and simulation) require a uniform layout.
    """
    return ((grid.p_w == 1 or prob.n_r == 1)
            and (grid.p_h == 1 or prob.n_s == 1))


def distribution_divisible(grid: ProcGrid, plan: IntegerPlan) -> bool:
    """True when the channel range splits evenly into every sub-slice."""
    w_c = plan.partition.w_c
    return w_c % grid.p_k == 0 and w_c % grid.p_bhw == 0


def plan_distribution(grid: ProcGrid, plan: IntegerPlan,
                      prob: ConvProblem) -> DistributionPlan:
    """Emit the initial ownership records for In, Ker and Out."""
    pp = plan.partition
    if pp.w_c % grid.p_k:
        raise SubSliceIndivisible(
            f"w_c={pp.w_c} is not divisible by p_k={grid.p_k}")
    if pp.w_c % grid.p_bhw:
        raise SubSliceIndivisible(
            f"w_c={pp.w_c} is not divisible by p_b*p_h*p_w={grid.p_bhw}")
    in_chunk = pp.w_c // grid.p_k
    ker_chunk = pp.w_c // grid.p_bhw
    records = []
    for coord in grid.coords():
        b, k, c, h, w = coord
        c0 = c * pp.w_c
        # In: this pixel/batch block's needed slice, split along c over the
        # k dimension; halo rows go to the lowest pixel coordinate.
        records.append(OwnershipRecord(
            tensor="In", owner=coord,
            ranges=((b * pp.w_b, (b + 1) * pp.w_b),
                    (c0 + k * in_chunk, c0 + (k + 1) * in_chunk),
                    _owned_span(w, grid.p_w, prob.sigma_w, pp.w_w, prob.n_r - 1),
                    _owned_span(h, grid.p_h, prob.sigma_h, pp.w_h, prob.n_s - 1))))
        # Ker: the (c, k) slice split along c over the b,h,w dimensions.
        j = grid.bhw_index(coord)
        records.append(OwnershipRecord(
            tensor="Ker", owner=coord,
            ranges=((k * pp.w_k, (k + 1) * pp.w_k),
                    (c0 + j * ker_chunk, c0 + (j + 1) * ker_chunk),
                    (0, prob.n_r),
                    (0, prob.n_s))))
        # Out: the full block, one replica per channel level.
        records.append(OwnershipRecord(
            tensor="Out", owner=coord,
            ranges=((b * pp.w_b, (b + 1) * pp.w_b),
                    (k * pp.w_k, (k + 1) * pp.w_k),
                    (w * pp.w_w, (w + 1) * pp.w_w),
                    (h * pp.w_h, (h + 1) * pp.w_h))))
    return DistributionPlan(records=tuple(records), out_replicas=grid.p_c)


def ensure_distributable(sol: ClosedFormSolution, plan: IntegerPlan,
                         prob: ConvProblem, machine: MachineSpec,
                         require_uniform: bool = False):
    """Return a plan whose grid the distribution planner accepts.

    When the unconstrained plan fails the sub-slice divisibility (or, if
    requested, the uniform-ownership condition), rerun the integer search
    with those conditions as a filter and report the cost delta.
    """

    def acceptable(candidate) -> bool:
        dims = []
        for axis in AXES:
            n = getattr(prob, f"n_{axis}")
            w = getattr(candidate, f"w_{axis}")
            if n % w:
                return False
            dims.append(n // w)
        grid = ProcGrid(*dims)
        if grid.size != machine.p:
            return False
        if candidate.w_c % grid.p_k or candidate.w_c % grid.p_bhw:
            return False
        if require_uniform and not halo_ownership_uniform(grid, prob):
            return False
        return True

    if acceptable(plan.partition):
        return plan, 0
    adjusted = integerize(sol, prob, machine, candidate_filter=acceptable)
    return adjusted, adjusted.achieved_cost - plan.achieved_cost


def serialize_distribution(dist: DistributionPlan, prob: ConvProblem) -> str:
    """Line-oriented export: `tensor owner dim=lo..hi ...` per record."""
    dim_names = {"In": ("b", "c", "x", "y"), "Ker": ("k", "c", "r", "s"),
                 "Out": ("b", "k", "w", "h")}
    lines = []
    for rec in dist.records:
        owner = ",".join(str(x) for x in rec.owner)
        spans = " ".join(f"{name}={lo}..{hi}" for name, (lo, hi)
                         in zip(dim_names[rec.tensor], rec.ranges))
        lines.append(f"{rec.tensor} ({owner}) {spans}")
    return "\n".join(lines) + "\n"
