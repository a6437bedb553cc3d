"""Tile and work-partition optimization.

The simplified problem treats (b, h, w) as one composite index and asks for
real-valued tile sizes (T_k, T_bhw) and partition sizes (W_k, W_bhw, W_c)
minimizing per-processor volume under a capacity bound on T_k*T_bhw.  Any
optimum keeps either the whole channel range on every processor (W_c = N_c)
or makes the tiles as large as the partition (T = W); that structural fact
splits the solution into regimes:

  row 1  capacity-bound tiles, channels unsplit      (case 1a; 1b when the
         tile product is capped by the partition product instead)
  row 2  replicated channels, cube-balanced tiles    (case 2a)
  row 3  replicated channels, capacity-bound tiles   (case 2b)

Regimes 2a/2b are the convolution analogues of the 3D and 2.5D distributed
matrix-multiplication algorithms; regime 1 corresponds to 2D SUMMA.

`solve_closed_form` dispatches on the regime conditions, applies the bound
clamps (t <= w <= n, products preserved), and reports the regime row that
fired.  `effective_capacity` shrinks the capacity handed to the simplified
problem so that the returned tiles also satisfy the exact halo-aware memory
constraint.  `integerize` snaps a real solution to divisor grids and locally
searches the exact cost.  `brute_force_oracle` enumerates all divisor plans
and is the ground truth the closed form is validated against.
"""

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import (CapacityTooSmall, Infeasible, NoFeasibleInteger,
                     SearchSpaceTooLarge)
from .model import (ConvProblem, MachineSpec, PartitionPlan, TilePlan,
                    cost_global, cost_simplified, tile_memory)
from .util import divisor_window, divisors, largest_divisor_at_most

_TOL = 1e-12

CASE_1A = "1a"
CASE_1B = "1b"
CASE_2A = "2a"
CASE_2B = "2b"


@dataclass(frozen=True)
class ClosedFormSolution:
    """Real-valued optimum of the simplified problem.

    `table_row` is the regime condition row that fired (1..3); `case_label`
    refines it to 1a/1b/2a/2b.  With `scope="all"`, `predicted_cost` is the
    bound over all tile-loop permutations and `alt_permutation_cheaper`
    marks when a permutation other than channel-innermost attains it.
    """

    case_label: str
    table_row: int
    t_k: float
    t_bhw: float
    w_k: float
    w_bhw: float
    w_c: float
    predicted_cost: float
    m_l_used: float
    scope: str = "c_innermost"
    alt_permutation_cheaper: bool = False


@dataclass(frozen=True)
class IntegerPlan:
    """Integer plan with its exact cost and gap against the real optimum."""

    partition: PartitionPlan
    achieved_cost: int
    gap_vs_closed_form: float


@dataclass(frozen=True)
class OracleLimits:
    max_points: int = 10_000_000


def effective_capacity(m: int, prob: ConvProblem, lower_bound: bool = False) -> float:
    """Capacity handed to the simplified problem.

    The default shrinks m so that tiles sized against the reduced capacity
    still fit the exact halo-aware footprint within m.  `lower_bound=True`
    returns m unchanged, which turns the regime costs into lower bounds on
    any achievable volume.
    """
    if lower_bound:
        return float(m)
    k = math.sqrt(prob.sigma_w * prob.sigma_h * prob.n_r * prob.n_s)
    if m <= 9.0 * k * k:
        raise CapacityTooSmall(
            f"capacity {m} is within the halo correction floor {9 * k * k:.1f}")
    m_l = m - 0.5 * (3.0 * k * (math.sqrt(9.0 * k * k + 4.0 * m) - 3.0 * k))
    if m_l < 1.0:
        raise CapacityTooSmall(f"reduced capacity {m_l:.3f} is below 1")
    return m_l


def _close(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=_TOL, abs_tol=0.0)


def _split_product(q: float, sigma_prod: float, stencil_prod: float,
                   lo: float, hi: float) -> float:
    """k-component of the optimal (t_k, t_bhw) split with t_k*t_bhw = q.

    Minimizes stencil_prod/t_bhw + sigma_prod/t_k, which is convex in t_k,
    so clamping the unconstrained optimum into [lo, hi] stays optimal.
    """
    t_k = math.sqrt(q * sigma_prod / stencil_prod)
    return min(max(t_k, lo), hi)


def _best_tile_product(q_lo: float, q_hi: float, work: float, rs: float,
                       ss: float, n_k: float, n_bhw: float):
    """Constrained optimum of q + work*(rs/t_bhw + ss/t_k) with t_k*t_bhw = q.

    q ranges over [q_lo, q_hi] and the split is boxed by 1 <= t_k <= n_k,
    1 <= t_bhw <= n_bhw.  The objective is piecewise convex in q (one piece
    per active split clamp), so the minimum sits at a piece's stationary
    point, a clamp breakpoint, or an interval end; all are closed-form and
    evaluated directly.
    """
    q_hi = max(q_hi, q_lo)

    def clamp_q(x):
        return min(max(x, q_lo), q_hi)

    candidates = {
        q_lo, q_hi,
        clamp_q(float(np.cbrt(work * work * rs * ss))),  # no clamp active
        clamp_q(math.sqrt(work * rs * n_k)),      # t_k pinned at n_k
        clamp_q(math.sqrt(work * ss * n_bhw)),    # t_bhw pinned at n_bhw
        clamp_q(math.sqrt(work * rs)),            # t_k pinned at 1
        clamp_q(math.sqrt(work * ss)),            # t_bhw pinned at 1
        clamp_q(n_k * n_k * rs / ss),             # breakpoints where the
        clamp_q(n_bhw * n_bhw * ss / rs),         # unclamped split meets
        clamp_q(rs / ss),                         # each box face
        clamp_q(ss / rs),
    }
    best = None
    for q in sorted(candidates):
        t_k = _split_product(q, ss, rs, lo=max(1.0, q / n_bhw),
                             hi=min(n_k, q))
        t_bhw = q / t_k
        value = q + work * (rs / t_bhw + ss / t_k)
        if best is None or value < best[0] * (1 - 1e-15):
            best = (value, q, t_k, t_bhw)
    return best


def solve_closed_form(prob: ConvProblem, machine: MachineSpec, m_l: float,
                      permutation_scope: str = "c_innermost") -> ClosedFormSolution:
    """Solve the simplified tile/partition problem in closed form.

    Evaluates the regime condition rows in order and returns the matching
    row's tile sizes and predicted cost, clamped so that t <= w <= n with
    all products preserved.  Boundary ties resolve toward row 1.
    """
    if permutation_scope not in ("c_innermost", "all"):
        raise ValueError(f"unknown permutation scope {permutation_scope!r}")
    if m_l < 1.0:
        raise Infeasible(f"capacity {m_l} cannot hold even a unit tile")
    p = machine.p
    rs = float(prob.n_r * prob.n_s)
    ss = float(prob.sigma_w * prob.sigma_h)
    n_k = float(prob.n_k)
    n_bhw = float(prob.n_bhw)
    n_c = float(prob.n_c)
    q_cap = n_k * n_bhw / p                # partition product with W_c = N_c
    work = n_k * n_c * n_bhw / p
    threshold = np.cbrt(work * work * rs * ss)   # replication pays off above

    first_terms = (q_cap, rs * n_k * n_c / p, ss * n_c * n_bhw / p)
    if permutation_scope == "all":
        row1 = all(m_l <= t or _close(m_l, t) for t in first_terms)
    else:
        row1 = m_l <= q_cap or _close(m_l, q_cap)

    def case1(q_t: float, row: int):
        # Channels unsplit; tiles capped by capacity or by the partition.
        w_k = _split_product(q_cap, ss, rs,
                             lo=max(1.0, q_cap / n_bhw), hi=min(n_k, q_cap))
        w_bhw = q_cap / w_k
        t_k = _split_product(q_t, ss, rs,
                             lo=max(1.0, q_t / w_bhw), hi=min(w_k, q_t))
        t_bhw = q_t / t_k
        label = CASE_1A if q_t < q_cap * (1 - _TOL) else CASE_1B
        return label, row, t_k, t_bhw, w_k, w_bhw, n_c

    if row1:
        picked = case1(min(m_l, q_cap), 1)
    else:
        row = 2 if (m_l >= threshold or _close(m_l, threshold)) else 3
        q_lo = max(1.0, q_cap)
        q_hi = min(m_l, work, n_k * n_bhw)
        _, q, t_k, t_bhw = _best_tile_product(q_lo, q_hi, work, rs, ss,
                                              n_k, n_bhw)
        if q <= q_cap * (1 + _TOL):
            # Channel replication clamps back to a whole channel range.
            picked = case1(q_cap, row)
        else:
            w_c = work / q
            label = CASE_2A if row == 2 else CASE_2B
            picked = (label, row, t_k, t_bhw, t_k, t_bhw, w_c)

    label, row, t_k, t_bhw, w_k, w_bhw, w_c = picked
    cost = cost_simplified(w_k, w_bhw, t_k, t_bhw, w_c, prob, machine, m_l=m_l)
    alt = False
    if permutation_scope == "all" and row == 1:
        best_first = min(first_terms)
        alt = best_first < q_cap * (1 - _TOL)
        cost = cost - q_cap + best_first
    return ClosedFormSolution(
        case_label=label, table_row=row, t_k=t_k, t_bhw=t_bhw,
        w_k=w_k, w_bhw=w_bhw, w_c=w_c, predicted_cost=cost, m_l_used=m_l,
        scope=permutation_scope, alt_permutation_cheaper=alt)


def printed_case1_partition(prob: ConvProblem) -> tuple[float, float]:
    """As-printed regime-1 partition sizes, without the 1/P factor.

    Exposed for inspection only; the solver uses the 1/P-corrected values so
    that W_k*W_bhw matches the per-processor work share.
    """
    rs = float(prob.n_r * prob.n_s)
    ss = float(prob.sigma_w * prob.sigma_h)
    base = float(prob.n_k * prob.n_bhw)
    return math.sqrt(base * ss / rs), math.sqrt(base * rs / ss)


def _greedy_split(target: float, n_w: int, n_h: int, n_b: int) -> tuple[int, int, int]:
    """Split a composite bhw target into divisor factors, widest-first.

    Fills w, then h, then b, taking the largest divisor not exceeding the
    remaining target at each step.
    """
    remaining = max(1.0, target)
    w = largest_divisor_at_most(n_w, remaining)
    remaining = max(1.0, target / w)
    h = largest_divisor_at_most(n_h, remaining)
    remaining = max(1.0, target / (w * h))
    b = largest_divisor_at_most(n_b, remaining)
    return b, h, w


def _candidate_partitions(sol: ClosedFormSolution, prob: ConvProblem,
                          machine: MachineSpec, radius: int = 2):
    """Divisor tuples (w_b, w_k, w_c, w_h, w_w) near the real solution.

    Only tuples whose per-axis quotients multiply to P are yielded, so the
    iteration-space closure holds exactly by construction.
    """
    if sol.case_label in (CASE_1A, CASE_1B):
        wc_cands = [prob.n_c]
    else:
        wc_cands = divisor_window(prob.n_c, sol.w_c, radius)
    wk_cands = divisor_window(prob.n_k, sol.w_k, radius)
    base_b, base_h, _base_w = _greedy_split(sol.w_bhw, prob.n_w, prob.n_h, prob.n_b)
    wb_cands = divisor_window(prob.n_b, base_b, radius)
    wh_cands = divisor_window(prob.n_h, base_h, radius)
    seen = set()
    for w_b, w_k, w_c, w_h in product(wb_cands, wk_cands, wc_cands, wh_cands):
        # w_w is pinned by the closure once the other four axes are chosen.
        grid_partial = ((prob.n_b // w_b) * (prob.n_k // w_k)
                        * (prob.n_c // w_c) * (prob.n_h // w_h))
        if machine.p % grid_partial:
            continue
        p_w = machine.p // grid_partial
        if prob.n_w % p_w:
            continue
        w_w = prob.n_w // p_w
        key = (w_b, w_k, w_c, w_h, w_w)
        if key not in seen:
            seen.add(key)
            yield key


def _candidate_tiles(sol: ClosedFormSolution, w_b: int, w_k: int,
                     w_h: int, w_w: int, radius: int = 2):
    tk_cands = divisor_window(w_k, sol.t_k, radius)
    base_b, base_h, base_w = _greedy_split(sol.t_bhw, w_w, w_h, w_b)
    tb_cands = divisor_window(w_b, base_b, 1)
    th_cands = divisor_window(w_h, base_h, 1)
    tw_cands = divisor_window(w_w, base_w, 1)
    for t_b, t_k, t_h, t_w in product(tb_cands, tk_cands, th_cands, tw_cands):
        yield TilePlan(t_b=t_b, t_k=t_k, t_c=1, t_h=t_h, t_w=t_w)


def integerize(sol: ClosedFormSolution, prob: ConvProblem, machine: MachineSpec,
               candidate_filter=None, radius: int = 2) -> IntegerPlan:
    """Snap a real solution to an exact-cost integer plan.

    Rounds the partition to divisor grids, splits the composite bhw extents
    widest-first (w, then h, then b), and searches the divisor neighborhood
    for the cheapest plan satisfying the closure and the memory bound.  For
    regime-1 solutions the channel range stays whole so the derived grid
    keeps a single channel level.

    `candidate_filter(plan)` can reject plans (for example ones the
    distribution planner cannot lay out); ties break lexicographically.
    """
    best = None
    best_key = None
    for w_b, w_k, w_c, w_h, w_w in _candidate_partitions(sol, prob, machine, radius):
        for tile in _candidate_tiles(sol, w_b, w_k, w_h, w_w, radius):
            plan = PartitionPlan(w_b=w_b, w_k=w_k, w_c=w_c, w_h=w_h, w_w=w_w,
                                 tile=tile)
            if tile_memory(tile, prob) > machine.m:
                continue
            if candidate_filter is not None and not candidate_filter(plan):
                continue
            cost = cost_global(plan, prob, machine).total
            key = (cost, (w_b, w_k, w_c, w_h, w_w,
                          tile.t_b, tile.t_k, tile.t_h, tile.t_w))
            if best is None or key < best_key:
                best = plan
                best_key = key
    if best is None:
        raise NoFeasibleInteger(
            "no divisor plan near the closed form satisfies the closure and "
            "memory bound; consider relaxing w_c")
    achieved = best_key[0]
    gap = max(0.0, achieved / sol.predicted_cost - 1.0) if sol.predicted_cost > 0 else 0.0
    return IntegerPlan(partition=best, achieved_cost=achieved, gap_vs_closed_form=gap)


def _tile_cost_batch(w: tuple[int, int, int, int, int], prob: ConvProblem,
                     m: int):
    """Exact costs of every (t | w, t_c = 1) tile choice for one partition.

    Vectorized over the divisor grid; returns (costs, tuples) with
    infeasible tiles priced at +inf.  Tuples are in lexicographic
    (t_b, t_k, t_h, t_w) order so argmin picks the canonical tie-break.
    """
    w_b, w_k, w_c, w_h, w_w = w
    tb = np.array(divisors(w_b), dtype=np.int64)
    tk = np.array(divisors(w_k), dtype=np.int64)
    th = np.array(divisors(w_h), dtype=np.int64)
    tw = np.array(divisors(w_w), dtype=np.int64)
    TB, TK, TH, TW = np.meshgrid(tb, tk, th, tw, indexing="ij")
    TB, TK, TH, TW = (a.ravel() for a in (TB, TK, TH, TW))
    hx = prob.sigma_w * TW + prob.n_r - 1
    hy = prob.sigma_h * TH + prob.n_s - 1
    mem = TB * hx * hy + TW * TH * TB * TK + prob.n_r * prob.n_s * TK
    out_term = w_b * w_k * w_w * w_h
    ker_term = (w_k * w_c * prob.n_r * prob.n_s
                * (w_w // TW) * (w_h // TH) * (w_b // TB))
    in_term = w_b * w_c * hx * hy * (w_w // TW) * (w_h // TH) * (w_k // TK)
    total = (out_term + ker_term + in_term).astype(np.float64)
    total[mem > m] = np.inf
    return total, TB, TK, TH, TW


def brute_force_oracle(prob: ConvProblem, machine: MachineSpec,
                       limits: OracleLimits | None = None) -> IntegerPlan:
    """Exhaustive optimum over all divisor partitions and dividing tiles.

    Enumerates every (w_i | n_i) tuple whose quotients multiply to P, every
    (t_i | w_i, t_c = 1) tile, evaluates the exact cost, and returns the
    argmin with a deterministic lexicographic tie-break on
    (w_b, w_k, w_c, w_h, w_w, t_b, t_k, t_h, t_w).
    """
    limits = limits or OracleLimits()
    axes = [divisors(prob.n_b), divisors(prob.n_k), divisors(prob.n_c),
            divisors(prob.n_h), divisors(prob.n_w)]
    w_tuples = []
    points = 0
    for w in product(*axes):
        w_b, w_k, w_c, w_h, w_w = w
        grid = ((prob.n_b // w_b) * (prob.n_k // w_k) * (prob.n_c // w_c)
                * (prob.n_h // w_h) * (prob.n_w // w_w))
        if grid != machine.p:
            continue
        w_tuples.append(w)
        points += (len(divisors(w_b)) * len(divisors(w_k))
                   * len(divisors(w_h)) * len(divisors(w_w)))
    if points > limits.max_points:
        raise SearchSpaceTooLarge(
            f"{points} candidate points exceed the limit {limits.max_points}")

    best_cost = None
    best_key = None
    for w in w_tuples:
        total, TB, TK, TH, TW = _tile_cost_batch(w, prob, machine.m)
        idx = int(np.argmin(total))
        cost = total[idx]
        if not np.isfinite(cost):
            continue
        key = (int(cost), w + (int(TB[idx]), int(TK[idx]), int(TH[idx]), int(TW[idx])))
        if best_cost is None or key < (best_cost, best_key):
            best_cost, best_key = key
    if best_cost is None:
        raise Infeasible("no divisor plan fits the tile memory capacity")
    w_b, w_k, w_c, w_h, w_w, t_b, t_k, t_h, t_w = best_key
    plan = PartitionPlan(
        w_b=w_b, w_k=w_k, w_c=w_c, w_h=w_h, w_w=w_w,
        tile=TilePlan(t_b=t_b, t_k=t_k, t_c=1, t_h=t_h, t_w=t_w))
    check = cost_global(plan, prob, machine).total
    assert check == best_cost, "vectorized cost disagrees with the scalar formula"
    return IntegerPlan(partition=plan, achieved_cost=best_cost,
                       gap_vs_closed_form=0.0)
