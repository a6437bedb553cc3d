"""Domain types and data-movement formulas for tiled CNN forward convolution.

The layer computes

    Out[b, k, w, h] += In[b, c, sigma_w*w + r, sigma_h*h + s] * Ker[k, c, r, s]

over seven loop extents.  Five of the loops (b, k, c, h, w) are tiled; the
stencil loops (r, s) are small and never tiled.  Every function here is pure
arithmetic over immutable values and counts tensor elements, not bytes.

Tile-count divisions use ceiling division so non-dividing tile sizes remain
legal; when every tile size divides its extent the formulas are exact.
"""

import warnings
from dataclasses import dataclass
from typing import NamedTuple

from .errors import ConstraintViolated, MemoryExceeded, PartitionInvalid
from .util import ceil_div, exact_div

_REL_TOL = 1e-9


@dataclass(frozen=True)
class ConvProblem:
    """One convolution layer instance: extents and strides, in iterations.

    The input feature map is indexed by (b, c, sigma_w*w + r, sigma_h*h + s),
    so its implied spatial extents are (sigma_w*n_w + n_r - 1) by
    (sigma_h*n_h + n_s - 1).
    """

    n_b: int
    n_k: int
    n_c: int
    n_h: int
    n_w: int
    n_r: int
    n_s: int
    sigma_w: int = 1
    sigma_h: int = 1

    def __post_init__(self):
        for name in ("n_b", "n_k", "n_c", "n_h", "n_w", "n_r", "n_s",
                     "sigma_w", "sigma_h"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.n_r > self.n_h or self.n_s > self.n_w:
            warnings.warn(
                "stencil extents exceed pixel extents; the model assumes a "
                "small stencil", stacklevel=2)

    @property
    def n_bhw(self) -> int:
        """Product of the three reuse-equivalent extents b, h, w."""
        return self.n_b * self.n_h * self.n_w

    @property
    def in_x(self) -> int:
        """Input extent along the w/r axis, halo included."""
        return self.sigma_w * self.n_w + self.n_r - 1

    @property
    def in_y(self) -> int:
        """Input extent along the h/s axis, halo included."""
        return self.sigma_h * self.n_h + self.n_s - 1

    @property
    def size_in(self) -> int:
        return self.n_b * self.n_c * self.in_x * self.in_y

    @property
    def size_ker(self) -> int:
        return self.n_k * self.n_c * self.n_r * self.n_s

    @property
    def size_out(self) -> int:
        return self.n_b * self.n_k * self.n_w * self.n_h


@dataclass(frozen=True)
class MachineSpec:
    """Processor count and per-processor memory capacities, in elements.

    `m` is the fast-memory capacity available for tile footprints; `m_d` is
    the full local memory of a distributed-memory node, which must also hold
    the initial data layout.
    """

    p: int
    m: int
    m_d: int

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.m_d < self.m:
            raise ValueError("m_d must be >= m")


@dataclass(frozen=True)
class TilePlan:
    """Tile sizes along the five tiled loops (iterations per tile)."""

    t_b: int
    t_k: int
    t_c: int
    t_h: int
    t_w: int

    def __post_init__(self):
        for name in ("t_b", "t_k", "t_c", "t_h", "t_w"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def t_bhw(self) -> int:
        return self.t_b * self.t_h * self.t_w


@dataclass(frozen=True)
class PartitionPlan:
    """Per-processor work-partition extents with the embedded tile sizes."""

    w_b: int
    w_k: int
    w_c: int
    w_h: int
    w_w: int
    tile: TilePlan

    def __post_init__(self):
        for axis in ("b", "k", "c", "h", "w"):
            w = getattr(self, f"w_{axis}")
            t = getattr(self.tile, f"t_{axis}")
            if w < 1:
                raise PartitionInvalid(f"w_{axis} must be >= 1")
            if t > w:
                raise PartitionInvalid(f"t_{axis}={t} exceeds w_{axis}={w}")

    @property
    def w_bhw(self) -> int:
        return self.w_b * self.w_h * self.w_w

    def work_product(self) -> int:
        return self.w_b * self.w_k * self.w_c * self.w_h * self.w_w

    def validate(self, prob: ConvProblem, machine: MachineSpec) -> None:
        """Check partition bounds and the iteration-space closure.

        The P work partitions must tile the iteration space exactly:
        p * prod(w_i) == prod(n_i).
        """
        for axis in ("b", "k", "c", "h", "w"):
            w = getattr(self, f"w_{axis}")
            n = getattr(prob, f"n_{axis}")
            if w > n:
                raise PartitionInvalid(f"w_{axis}={w} exceeds n_{axis}={n}")
        total = prob.n_b * prob.n_k * prob.n_c * prob.n_h * prob.n_w
        if machine.p * self.work_product() != total:
            raise PartitionInvalid(
                f"P * prod(W_i) = {machine.p * self.work_product()} does not "
                f"equal prod(N_i) = {total}")


@dataclass(frozen=True)
class CostBreakdown:
    """Element counts moved per tensor; `total` is their sum."""

    out_term: int
    ker_term: int
    in_term: int

    def __post_init__(self):
        for name in ("out_term", "ker_term", "in_term"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def total(self) -> int:
        return self.out_term + self.ker_term + self.in_term


class DistributedCost(NamedTuple):
    """Initialization, broadcast and total volumes of a distributed run."""

    cost_i: int
    cost_c: int
    cost_d: int


def halo_x(t_w: int, prob: ConvProblem) -> int:
    """Input-buffer extent along w/r for a tile of width t_w."""
    return prob.sigma_w * t_w + prob.n_r - 1


def halo_y(t_h: int, prob: ConvProblem) -> int:
    """Input-buffer extent along h/s for a tile of height t_h."""
    return prob.sigma_h * t_h + prob.n_s - 1


def footprint_in(plan: TilePlan, prob: ConvProblem) -> int:
    """Elements of In one tile touches, halo border included."""
    return plan.t_b * plan.t_c * halo_x(plan.t_w, prob) * halo_y(plan.t_h, prob)


def footprint_ker(plan: TilePlan, prob: ConvProblem) -> int:
    """Elements of Ker one tile touches."""
    return prob.n_r * prob.n_s * plan.t_k * plan.t_c


def footprint_out(plan: TilePlan) -> int:
    """Elements of Out one tile touches."""
    return plan.t_w * plan.t_h * plan.t_b * plan.t_k


def tile_memory(plan: TilePlan, prob: ConvProblem) -> int:
    """Fast-memory footprint of one tile: all three tensor slices."""
    return footprint_in(plan, prob) + footprint_out(plan) + footprint_ker(plan, prob)


def cost_sequential(plan: TilePlan, prob: ConvProblem,
                    machine: MachineSpec) -> CostBreakdown:
    """Data moved between fast memory and backing store for one full layer.

    Out is stored once per output tile (the channel tile loop is innermost,
    so partial sums stay resident).  Ker and In are reloaded once per tile
    that uses them.
    """
    g = tile_memory(plan, prob)
    if g > machine.m:
        raise MemoryExceeded(f"tile footprint {g} exceeds capacity {machine.m}")
    tiles_w = ceil_div(prob.n_w, plan.t_w)
    tiles_h = ceil_div(prob.n_h, plan.t_h)
    tiles_b = ceil_div(prob.n_b, plan.t_b)
    tiles_k = ceil_div(prob.n_k, plan.t_k)
    out_term = prob.n_b * prob.n_k * prob.n_w * prob.n_h
    ker_term = prob.n_k * prob.n_c * prob.n_r * prob.n_s * tiles_w * tiles_h * tiles_b
    in_term = (prob.n_b * prob.n_c
               * halo_x(plan.t_w, prob) * halo_y(plan.t_h, prob)
               * tiles_w * tiles_h * tiles_k)
    return CostBreakdown(out_term, ker_term, in_term)


def cost_global(pp: PartitionPlan, prob: ConvProblem, machine: MachineSpec,
                printed_ker: bool = False) -> CostBreakdown:
    """Per-processor volume between local memory and the shared global store.

    `printed_ker=True` evaluates the as-printed variant whose Ker term scales
    with the full channel extent N_c instead of the partition share W_c; the
    default W_c form is the one consistent with the simplified objective and
    the distributed broadcast volume.
    """
    pp.validate(prob, machine)
    t = pp.tile
    g = tile_memory(t, prob)
    if g > machine.m:
        raise MemoryExceeded(f"tile footprint {g} exceeds capacity {machine.m}")
    tiles_w = ceil_div(pp.w_w, t.t_w)
    tiles_h = ceil_div(pp.w_h, t.t_h)
    tiles_b = ceil_div(pp.w_b, t.t_b)
    tiles_k = ceil_div(pp.w_k, t.t_k)
    c_extent = prob.n_c if printed_ker else pp.w_c
    out_term = pp.w_b * pp.w_k * pp.w_w * pp.w_h
    ker_term = pp.w_k * c_extent * prob.n_r * prob.n_s * tiles_w * tiles_h * tiles_b
    in_term = (pp.w_b * pp.w_c
               * halo_x(t.t_w, prob) * halo_y(t.t_h, prob)
               * tiles_w * tiles_h * tiles_k)
    return CostBreakdown(out_term, ker_term, in_term)


def cost_simplified(w_k: float, w_bhw: float, t_k: float, t_bhw: float,
                    w_c: float, prob: ConvProblem, machine: MachineSpec,
                    m_l: float | None = None) -> float:
    """Simplified per-processor volume over the composite bhw index.

    Drops the stencil halo border from both the objective and the memory
    constraint, treating (b, h, w) as a single index.  Real-valued; used by
    the closed-form solver and its certificates.
    """
    if m_l is None:
        m_l = float(machine.m)
    if t_bhw * t_k > m_l * (1 + _REL_TOL):
        raise ConstraintViolated(
            f"t_bhw*t_k = {t_bhw * t_k} exceeds capacity {m_l}")
    lhs = machine.p * w_bhw * w_k * w_c
    rhs = prob.n_bhw * prob.n_k * prob.n_c
    if abs(lhs - rhs) > _REL_TOL * rhs:
        raise ConstraintViolated(
            f"P*W_bhw*W_k*W_c = {lhs} does not cover the iteration space {rhs}")
    work = prob.n_k * prob.n_c * prob.n_bhw / machine.p
    reload_in = prob.sigma_w * prob.sigma_h / t_k
    reload_ker = prob.n_r * prob.n_s / t_bhw
    return w_k * w_bhw + work * (reload_ker + reload_in)


def cost_distributed(pp: PartitionPlan, prob: ConvProblem,
                     machine: MachineSpec) -> DistributedCost:
    """Initialization plus broadcast volume of the distributed algorithm.

    cost_i covers the initial data layout (the local Out block plus even
    shares of In and Ker); cost_c is the rotating-broadcast volume, equal to
    the Ker and In terms of `cost_global`.
    """
    pp.validate(prob, machine)
    block = pp.w_b * pp.w_k * pp.w_w * pp.w_h
    cost_i = (block
              + exact_div(prob.size_in, machine.p)
              + exact_div(prob.size_ker, machine.p))
    cg = cost_global(pp, prob, machine)
    cost_c = cg.ker_term + cg.in_term
    return DistributedCost(cost_i, cost_c, cost_i + cost_c)


def memory_distributed(pp: PartitionPlan, prob: ConvProblem,
                       machine: MachineSpec) -> int:
    """Local-memory requirement of a distributed node for this plan.

    Tile buffers for In and Ker, the resident Out block, and the node's
    shares of the initial In and Ker layout.  The caller compares the result
    to machine.m_d.
    """
    t = pp.tile
    block = pp.w_b * pp.w_k * pp.w_w * pp.w_h
    return (footprint_in(t, prob) + footprint_ker(t, prob) + block
            + exact_div(prob.size_ker, machine.p)
            + exact_div(prob.size_in, machine.p))
