"""Deterministic lockstep simulator with exact element counting.

Runs the distributed algorithm on P simulated processors with fully
partitioned memories.  Each of the w_c channel steps is a lockstep round:
all broadcasts of the step complete first, then every processor executes
its tile loop for that channel, filling its In/Ker tile buffers once per
tile and accumulating into its resident Out block.  After the last step,
Out replicas along the channel grid dimension are reduced into the lowest
channel coordinate.

Two tripwires guard correctness: a tile read of an element that is neither
owned nor delivered by the schedule raises DataMissing, and a processor
whose live elements exceed its local capacity raises MemoryOverflow.  In
``full_compute`` mode the gathered output is compared elementwise against
the direct-loop reference convolution; tensors hold small integers so all
arithmetic is exact.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import DataMissing, MemoryOverflow, ShapeMismatch
from .grid import DistributionPlan, ProcGrid
from .model import (ConvProblem, MachineSpec, cost_distributed, cost_global,
                    memory_distributed)
from .optimizer import IntegerPlan
from .schedule import CommSchedule
from .util import ceil_div


def generate_tensors(prob: ConvProblem, seed: int):
    """Seeded input tensors with entries in [-4, 4].

    Drawn from numpy's PCG64 generator: the In tensor first, then Ker, each
    with ``integers(-4, 5)`` over the tensor's natural shape.  Fixing the
    generator and the draw order keeps fixtures reproducible everywhere.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    in_t = rng.integers(-4, 5, size=(prob.n_b, prob.n_c, prob.in_x, prob.in_y),
                        dtype=np.int64)
    ker_t = rng.integers(-4, 5, size=(prob.n_k, prob.n_c, prob.n_r, prob.n_s),
                         dtype=np.int64)
    return in_t, ker_t


def reference_convolution(prob: ConvProblem, in_tensor, ker_tensor):
    """Direct evaluation of the seven-deep convolution loop nest."""
    expected_in = (prob.n_b, prob.n_c, prob.in_x, prob.in_y)
    if tuple(in_tensor.shape) != expected_in:
        raise ShapeMismatch(
            f"In has shape {tuple(in_tensor.shape)}, layer implies {expected_in}")
    expected_ker = (prob.n_k, prob.n_c, prob.n_r, prob.n_s)
    if tuple(ker_tensor.shape) != expected_ker:
        raise ShapeMismatch(
            f"Ker has shape {tuple(ker_tensor.shape)}, layer implies {expected_ker}")
    out = np.zeros((prob.n_b, prob.n_k, prob.n_w, prob.n_h), dtype=np.int64)
    kernels.conv_accumulate(out, np.ascontiguousarray(in_tensor),
                            np.ascontiguousarray(ker_tensor),
                            prob.sigma_w, prob.sigma_h)
    return out


@dataclass(frozen=True)
class SimConfig:
    """Everything one simulated run needs; components must agree."""

    prob: ConvProblem
    machine: MachineSpec
    plan: IntegerPlan
    grid: ProcGrid
    dist: DistributionPlan
    schedule: CommSchedule
    seed: int = 0
    mode: str = "full_compute"

    def __post_init__(self):
        if self.mode not in ("full_compute", "count_only"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.grid.size != self.machine.p:
            raise ValueError("grid does not match the processor count")
        if self.schedule.num_steps != self.plan.partition.w_c:
            raise ValueError("schedule does not match the plan's channel range")


@dataclass
class SimReport:
    """Measured per-processor traffic and the global roll-up."""

    received_in: tuple[int, ...]
    received_ker: tuple[int, ...]
    initial_footprint: tuple[int, ...]
    peak_memory: tuple[int, ...]
    reduction_volume: tuple[int, ...]
    cost_i: int
    cost_c: int
    cost_d: int
    steps: int
    mode: str
    verdict: str = "n/a"
    seed: int = 0


class IdentityCheck(NamedTuple):
    name: str
    passed: bool
    lhs: object
    rhs: object


def _boxes_for(dist: DistributionPlan, coord, tensor):
    return [rec.ranges for rec in dist.records_for(coord, tensor)]


def _coverage_gap(needed_axes, boxes):
    """First index combination of `needed_axes` not covered by `boxes`.

    Axes are half-open (lo, hi) ranges; boxes are same-arity range tuples.
    Returns None when fully covered.
    """
    shape = tuple(hi - lo for lo, hi in needed_axes)
    mask = np.zeros(shape, dtype=bool)
    for box in boxes:
        slicer = []
        empty = False
        for (n_lo, n_hi), (b_lo, b_hi) in zip(needed_axes, box):
            lo = max(n_lo, b_lo)
            hi = min(n_hi, b_hi)
            if lo >= hi:
                empty = True
                break
            slicer.append(slice(lo - n_lo, hi - n_lo))
        if not empty:
            mask[tuple(slicer)] = True
    if mask.all():
        return None
    first = np.argwhere(~mask)[0]
    return tuple(int(lo + off) for (lo, _), off in zip(needed_axes, first))


def run(cfg: SimConfig) -> SimReport:
    """Execute the distributed algorithm and count every element moved."""
    prob, machine, grid = cfg.prob, cfg.machine, cfg.grid
    pp = cfg.plan.partition
    t = pp.tile
    p = grid.size
    coords = list(grid.coords())
    ranks = {coord: grid.rank_of(coord) for coord in coords}
    compute = cfg.mode == "full_compute"

    own_in = {coord: _boxes_for(cfg.dist, coord, "In") for coord in coords}
    own_ker = {coord: _boxes_for(cfg.dist, coord, "Ker") for coord in coords}
    owned_in_count = [cfg.dist.owned_elements(coord, "In") for coord in coords]
    owned_ker_count = [cfg.dist.owned_elements(coord, "Ker") for coord in coords]
    block = pp.w_b * pp.w_k * pp.w_w * pp.w_h
    buffers = (cfg.schedule.buffers.in_buffer_capacity
               + cfg.schedule.buffers.ker_buffer_capacity)

    received_in = [0] * p
    received_ker = [0] * p
    initial = [owned_in_count[ranks[c]] + owned_ker_count[ranks[c]] + block
               for c in coords]
    live = [initial[ranks[c]] + buffers for c in coords]
    peak = [0] * p
    reduction = [0] * p

    in_full = ker_full = None
    out_blocks = None
    if compute:
        in_full, ker_full = generate_tensors(prob, cfg.seed)
        out_blocks = [np.zeros((pp.w_b, pp.w_k, pp.w_w, pp.w_h), dtype=np.int64)
                      for _ in coords]

    def sample_memory(step):
        for coord in coords:
            rank = ranks[coord]
            peak[rank] = max(peak[rank], live[rank])
            if live[rank] > machine.m_d:
                raise MemoryOverflow(rank, step, live[rank], machine.m_d)

    tiles_k = ceil_div(pp.w_k, t.t_k)
    tiles_b = ceil_div(pp.w_b, t.t_b)
    tiles_w = ceil_div(pp.w_w, t.t_w)
    tiles_h = ceil_div(pp.w_h, t.t_h)

    for ct in range(pp.w_c):
        step = cfg.schedule.steps[ct]

        # Broadcast phase: roots must own their payloads; line members get
        # the step's slice delivered into their tile buffers as tiles run.
        step_in = {coord: [] for coord in coords}
        step_ker = {coord: [] for coord in coords}
        for rec in step.broadcasts:
            own = own_in if rec.tensor == "In" else own_ker
            gap = _coverage_gap(rec.ranges, own[rec.root])
            if gap is not None:
                raise DataMissing(ranks[rec.root], ct, gap, rec.tensor)
            rb, rk, rc, rh, rw = rec.root
            for coord in coords:
                b, k, c, h, w = coord
                if rec.tensor == "In" and (b, c, h, w) == (rb, rc, rh, rw):
                    step_in[coord].append(rec.ranges)
                elif rec.tensor == "Ker" and (k, c) == (rk, rc):
                    step_ker[coord].append(rec.ranges)
        sample_memory(ct)

        # Compute phase: every processor runs its tile loop for this channel.
        for coord in coords:
            rank = ranks[coord]
            b, k, c, h, w = coord
            b0, k0 = b * pp.w_b, k * pp.w_k
            h0, w0 = h * pp.w_h, w * pp.w_w
            c_g = c * pp.w_c + ct
            avail_in = own_in[coord] + step_in[coord]
            avail_ker = own_ker[coord] + step_ker[coord]
            for kt in range(tiles_k):
                k_lo = k0 + kt * t.t_k
                k_hi = min(k0 + (kt + 1) * t.t_k, k0 + pp.w_k)
                ker_need = ((k_lo, k_hi), (c_g, c_g + 1),
                            (0, prob.n_r), (0, prob.n_s))
                gap = _coverage_gap(ker_need, avail_ker)
                if gap is not None:
                    raise DataMissing(rank, ct, gap, "Ker")
                ker_fill = (k_hi - k_lo) * prob.n_r * prob.n_s
                for bt in range(tiles_b):
                    b_lo = b0 + bt * t.t_b
                    b_hi = min(b0 + (bt + 1) * t.t_b, b0 + pp.w_b)
                    for wt in range(tiles_w):
                        wo_lo = w0 + wt * t.t_w
                        wo_hi = min(w0 + (wt + 1) * t.t_w, w0 + pp.w_w)
                        x_lo = prob.sigma_w * wo_lo
                        x_buf_hi = x_lo + prob.sigma_w * (wo_hi - wo_lo) + prob.n_r - 1
                        for ht in range(tiles_h):
                            ho_lo = h0 + ht * t.t_h
                            ho_hi = min(h0 + (ht + 1) * t.t_h, h0 + pp.w_h)
                            y_lo = prob.sigma_h * ho_lo
                            y_buf_hi = (y_lo + prob.sigma_h * (ho_hi - ho_lo)
                                        + prob.n_s - 1)
                            in_need = ((b_lo, b_hi), (c_g, c_g + 1),
                                       (x_lo, x_buf_hi), (y_lo, y_buf_hi))
                            gap = _coverage_gap(in_need, avail_in)
                            if gap is not None:
                                raise DataMissing(rank, ct, gap, "In")
                            received_in[rank] += ((b_hi - b_lo)
                                                  * (x_buf_hi - x_lo)
                                                  * (y_buf_hi - y_lo))
                            received_ker[rank] += ker_fill
                            if compute:
                                x_hi = (prob.sigma_w * (wo_hi - 1) + prob.n_r)
                                y_hi = (prob.sigma_h * (ho_hi - 1) + prob.n_s)
                                out_view = out_blocks[rank][
                                    b_lo - b0:b_hi - b0, k_lo - k0:k_hi - k0,
                                    wo_lo - w0:wo_hi - w0, ho_lo - h0:ho_hi - h0]
                                kernels.conv_accumulate(
                                    out_view,
                                    np.ascontiguousarray(
                                        in_full[b_lo:b_hi, c_g:c_g + 1,
                                                x_lo:x_hi, y_lo:y_hi]),
                                    np.ascontiguousarray(
                                        ker_full[k_lo:k_hi, c_g:c_g + 1, :, :]),
                                    prob.sigma_w, prob.sigma_h)
        sample_memory(ct)

    # Final reduction: replicas along the channel dimension merge into the
    # lowest channel coordinate.
    verdict = "n/a"
    if grid.p_c > 1:
        for b in range(grid.p_b):
            for k in range(grid.p_k):
                for h in range(grid.p_h):
                    for w in range(grid.p_w):
                        root = ranks[(b, k, 0, h, w)]
                        for c in range(1, grid.p_c):
                            member = ranks[(b, k, c, h, w)]
                            reduction[root] += block
                            if compute:
                                out_blocks[root] += out_blocks[member]

    if compute:
        out_global = np.zeros((prob.n_b, prob.n_k, prob.n_w, prob.n_h),
                              dtype=np.int64)
        for coord in coords:
            b, k, c, h, w = coord
            if c != 0:
                continue
            rank = ranks[coord]
            out_global[b * pp.w_b:(b + 1) * pp.w_b,
                       k * pp.w_k:(k + 1) * pp.w_k,
                       w * pp.w_w:(w + 1) * pp.w_w,
                       h * pp.w_h:(h + 1) * pp.w_h] = out_blocks[rank]
        ref = reference_convolution(prob, in_full, ker_full)
        verdict = "pass" if np.array_equal(out_global, ref) else "fail"

    cost_i = max(initial)
    cost_c = max(ri + rk for ri, rk in zip(received_in, received_ker))
    return SimReport(
        received_in=tuple(received_in), received_ker=tuple(received_ker),
        initial_footprint=tuple(initial), peak_memory=tuple(peak),
        reduction_volume=tuple(reduction),
        cost_i=cost_i, cost_c=cost_c, cost_d=cost_i + cost_c,
        steps=pp.w_c, mode=cfg.mode, verdict=verdict, seed=cfg.seed)


def verify_identities(report: SimReport, prob: ConvProblem,
                      machine: MachineSpec, plan: IntegerPlan):
    """Check the measured run against the analytical model.

    Returns one (name, passed, lhs, rhs) row per identity; failures are
    data for the caller, not errors.
    """
    pp = plan.partition
    predicted = cost_distributed(pp, prob, machine)
    offset = ((prob.size_in + prob.size_ker) / machine.p
              if (prob.size_in + prob.size_ker) % machine.p
              else (prob.size_in + prob.size_ker) // machine.p)
    total = cost_global(pp, prob, machine).total
    g_d = memory_distributed(pp, prob, machine)
    checks = [
        IdentityCheck("broadcast_volume_matches", report.cost_c == predicted.cost_c,
                      report.cost_c, predicted.cost_c),
        IdentityCheck("constant_offset", report.cost_d - total == offset,
                      report.cost_d - total, offset),
        IdentityCheck("peak_within_model", max(report.peak_memory) <= g_d,
                      max(report.peak_memory), g_d),
        IdentityCheck("model_within_capacity", g_d <= machine.m_d,
                      g_d, machine.m_d),
    ]
    if report.mode == "full_compute":
        checks.append(IdentityCheck("functional_correctness",
                                    report.verdict == "pass",
                                    report.verdict, "pass"))
    return checks
