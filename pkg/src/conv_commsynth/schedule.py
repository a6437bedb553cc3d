"""Rotating broadcast schedule feeding the per-tile buffers.

Execution advances through w_c channel steps (the channel tile size is 1).
The steps are divided into p_k groups for In and p_b*p_h*p_w groups for
Ker; within each group one processor owns the group's channel chunk and is
the broadcast root for its line.  Roots rotate between groups, so everyone
sources exactly the data it was handed at initialization:

- In broadcasts run along the k dimension (all k share an input slice);
- Ker broadcasts run along the combined b,h,w dimensions (w fastest).

Within each step, In broadcasts precede Ker broadcasts.  Out never moves
until the final reduction.  Broadcasts are modeled as payload delivery to
every non-root line member plus a local copy at the root; volume accounting
counts tile-buffer fills, once per tile per step, matching the broadcast
cost term of the distributed model.
"""

from dataclasses import dataclass

from .errors import GroupIndivisible
from .model import ConvProblem, halo_x, halo_y
from .optimizer import IntegerPlan
from .util import ceil_div

from .grid import (DistributionPlan, ProcGrid, needed_in_span_x,
                   needed_in_span_y)


@dataclass(frozen=True)
class TileBuffers:
    """Element capacities of the per-tile staging buffers (no Out buffer)."""

    in_buffer_capacity: int
    ker_buffer_capacity: int


@dataclass(frozen=True)
class BroadcastRecord:
    """One broadcast: a root sends one channel step's slice along a line.

    `line` is "k" or "bhw"; `ranges` are half-open index spans in the
    tensor's own dimension order (In: b,c,x,y; Ker: k,c,r,s).
    """

    tensor: str
    root: tuple[int, int, int, int, int]
    line: str
    ranges: tuple[tuple[int, int], ...]

    @property
    def payload_elements(self) -> int:
        n = 1
        for lo, hi in self.ranges:
            n *= hi - lo
        return n


@dataclass(frozen=True)
class ScheduleStep:
    index: int
    broadcasts: tuple[BroadcastRecord, ...]


@dataclass(frozen=True)
class CommSchedule:
    """All broadcast steps plus the per-step buffer-fill accounting."""

    steps: tuple[ScheduleStep, ...]
    buffers: TileBuffers
    in_fill_per_step: int
    ker_fill_per_step: int
    in_group_len: int
    ker_group_len: int

    @property
    def num_steps(self) -> int:
        return len(self.steps)


@dataclass(frozen=True)
class ScheduleVolumes:
    """Per-processor element counts received into tile buffers."""

    in_per_processor: tuple[int, ...]
    ker_per_processor: tuple[int, ...]

    @property
    def total_per_processor(self) -> tuple[int, ...]:
        return tuple(i + k for i, k in
                     zip(self.in_per_processor, self.ker_per_processor))

    @property
    def max_total(self) -> int:
        return max(self.total_per_processor)


def build_schedule(grid: ProcGrid, plan: IntegerPlan, dist: DistributionPlan,
                   prob: ConvProblem) -> CommSchedule:
    """Build the w_c-step rotating broadcast schedule for one plan."""
    pp = plan.partition
    t = pp.tile
    if pp.w_c % grid.p_k:
        raise GroupIndivisible(
            f"w_c={pp.w_c} steps do not split into p_k={grid.p_k} groups")
    if pp.w_c % grid.p_bhw:
        raise GroupIndivisible(
            f"w_c={pp.w_c} steps do not split into p_b*p_h*p_w={grid.p_bhw} groups")
    in_group = pp.w_c // grid.p_k
    ker_group = pp.w_c // grid.p_bhw

    steps = []
    for ct in range(pp.w_c):
        records = []
        if grid.p_k > 1:
            root_k = ct // in_group
            for b in range(grid.p_b):
                for c in range(grid.p_c):
                    for h in range(grid.p_h):
                        for w in range(grid.p_w):
                            records.append(BroadcastRecord(
                                tensor="In", line="k",
                                root=(b, root_k, c, h, w),
                                ranges=((b * pp.w_b, (b + 1) * pp.w_b),
                                        (c * pp.w_c + ct, c * pp.w_c + ct + 1),
                                        needed_in_span_x(w, pp, prob),
                                        needed_in_span_y(h, pp, prob))))
        if grid.p_bhw > 1:
            j = ct // ker_group
            w_idx = j % grid.p_w
            h_idx = (j // grid.p_w) % grid.p_h
            b_idx = j // (grid.p_w * grid.p_h)
            for k in range(grid.p_k):
                for c in range(grid.p_c):
                    records.append(BroadcastRecord(
                        tensor="Ker", line="bhw",
                        root=(b_idx, k, c, h_idx, w_idx),
                        ranges=((k * pp.w_k, (k + 1) * pp.w_k),
                                (c * pp.w_c + ct, c * pp.w_c + ct + 1),
                                (0, prob.n_r),
                                (0, prob.n_s))))
        steps.append(ScheduleStep(index=ct, broadcasts=tuple(records)))

    # Buffer fills per step: every tile of the step refills both buffers.
    # Edge tiles are clipped, so the per-axis sums telescope.
    tiles_k = ceil_div(pp.w_k, t.t_k)
    tiles_b = ceil_div(pp.w_b, t.t_b)
    tiles_w = ceil_div(pp.w_w, t.t_w)
    tiles_h = ceil_div(pp.w_h, t.t_h)
    sum_hx = prob.sigma_w * pp.w_w + tiles_w * (prob.n_r - 1)
    sum_hy = prob.sigma_h * pp.w_h + tiles_h * (prob.n_s - 1)
    in_fill = tiles_k * pp.w_b * sum_hx * sum_hy
    ker_fill = tiles_b * tiles_w * tiles_h * prob.n_r * prob.n_s * pp.w_k

    buffers = TileBuffers(
        in_buffer_capacity=t.t_b * halo_x(t.t_w, prob) * halo_y(t.t_h, prob),
        ker_buffer_capacity=t.t_k * prob.n_r * prob.n_s)
    return CommSchedule(steps=tuple(steps), buffers=buffers,
                        in_fill_per_step=in_fill, ker_fill_per_step=ker_fill,
                        in_group_len=in_group, ker_group_len=ker_group)


def schedule_volume(sched: CommSchedule, grid: ProcGrid) -> ScheduleVolumes:
    """Elements each processor receives into its tile buffers over the run.

    Root processors fill their own buffers from local memory; those local
    copies count the same as received payloads, so the totals are uniform
    across the grid.
    """
    in_total = sched.num_steps * sched.in_fill_per_step
    ker_total = sched.num_steps * sched.ker_fill_per_step
    return ScheduleVolumes(
        in_per_processor=tuple(in_total for _ in range(grid.size)),
        ker_per_processor=tuple(ker_total for _ in range(grid.size)))


def serialize_schedule(sched: CommSchedule) -> str:
    """Line-oriented export: `step tensor root line payload ranges`."""
    dim_names = {"In": ("b", "c", "x", "y"), "Ker": ("k", "c", "r", "s")}
    lines = []
    for step in sched.steps:
        for rec in step.broadcasts:
            root = ",".join(str(x) for x in rec.root)
            spans = " ".join(f"{name}={lo}..{hi}" for name, (lo, hi)
                             in zip(dim_names[rec.tensor], rec.ranges))
            lines.append(f"{step.index} {rec.tensor} ({root}) {rec.line} "
                         f"{rec.payload_elements} {spans}")
    return "\n".join(lines) + "\n"
