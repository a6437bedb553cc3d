import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conv_commsynth import (ConvProblem, MachineSpec, PartitionPlan, TilePlan,
                            cost_distributed, cost_global, cost_sequential,
                            cost_simplified, footprint_in, footprint_ker,
                            footprint_out, memory_distributed, tile_memory)
from conv_commsynth.errors import (ConstraintViolated, MemoryExceeded,
                                   PartitionInvalid)
from conv_commsynth.util import ceil_div

SMALL = ConvProblem(n_b=1, n_k=2, n_c=2, n_h=4, n_w=4, n_r=3, n_s=3)
ONES = ConvProblem(n_b=1, n_k=1, n_c=1, n_h=1, n_w=1, n_r=1, n_s=1)


def plan(t_b=1, t_k=1, t_c=1, t_h=1, t_w=1):
    return TilePlan(t_b=t_b, t_k=t_k, t_c=t_c, t_h=t_h, t_w=t_w)


class TestFootprints:
    def test_in_all_ones_no_halo(self):
        assert footprint_in(plan(), ONES) == 1

    def test_in_with_halo(self):
        prob = ConvProblem(n_b=1, n_k=1, n_c=1, n_h=4, n_w=4, n_r=3, n_s=3)
        assert footprint_in(plan(t_w=4, t_h=4), prob) == 36

    def test_in_with_stride(self):
        prob = ConvProblem(n_b=2, n_k=1, n_c=1, n_h=3, n_w=3, n_r=3, n_s=3,
                           sigma_w=2, sigma_h=2)
        assert footprint_in(plan(t_b=2, t_w=3, t_h=3), prob) == 2 * 8 * 8

    def test_ker(self):
        assert footprint_ker(plan(), SMALL) == 9
        mm = ConvProblem(n_b=1, n_k=8, n_c=1, n_h=1, n_w=1, n_r=1, n_s=1)
        assert footprint_ker(plan(t_k=8), mm) == 8

    def test_out(self):
        assert footprint_out(plan(t_b=2, t_k=4, t_w=4, t_h=4)) == 128

    def test_tile_memory_all_ones(self):
        assert tile_memory(plan(), ONES) == 3

    def test_tile_memory_sum(self):
        prob = ConvProblem(n_b=1, n_k=2, n_c=1, n_h=4, n_w=4, n_r=3, n_s=3)
        t = plan(t_k=2, t_h=4, t_w=4)
        assert tile_memory(t, prob) == 36 + 32 + 18


class TestConvProblem:
    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            ConvProblem(n_b=0, n_k=1, n_c=1, n_h=1, n_w=1, n_r=1, n_s=1)
        with pytest.raises(ValueError):
            ConvProblem(n_b=1, n_k=1, n_c=1, n_h=1, n_w=1, n_r=1, n_s=1,
                        sigma_w=0)

    def test_warns_on_large_stencil(self):
        with pytest.warns(UserWarning):
            ConvProblem(n_b=1, n_k=1, n_c=1, n_h=2, n_w=8, n_r=4, n_s=1)

    def test_input_extents_include_halo(self):
        prob = ConvProblem(n_b=1, n_k=1, n_c=1, n_h=4, n_w=4, n_r=3, n_s=3,
                           sigma_w=2, sigma_h=1)
        assert prob.in_x == 2 * 4 + 3 - 1
        assert prob.in_y == 4 + 3 - 1


class TestCostSequential:
    def test_single_tile_collapses_to_tensor_sizes(self):
        machine = MachineSpec(p=1, m=200, m_d=200)
        cost = cost_sequential(plan(t_b=1, t_k=2, t_c=2, t_h=4, t_w=4),
                               SMALL, machine)
        assert (cost.out_term, cost.ker_term, cost.in_term) == (32, 36, 72)
        assert cost.total == 140

    def test_all_ones(self):
        cost = cost_sequential(plan(), ONES, MachineSpec(p=1, m=3, m_d=3))
        assert cost.total == 3

    def test_memory_precondition(self):
        with pytest.raises(MemoryExceeded):
            cost_sequential(plan(t_b=1, t_k=2, t_c=2, t_h=4, t_w=4), SMALL,
                            MachineSpec(p=1, m=100, m_d=100))

    def test_problem_a_matches_literal_tile_loop(self, problem_a):
        # Oracle: walk the tiled loop nest and count what every tile loads
        # and every output tile stores.
        prob = problem_a
        t = plan(t_b=1, t_k=4, t_c=1, t_h=4, t_w=4)
        loads_in = loads_ker = stores_out = 0
        for bt in range(0, prob.n_b, t.t_b):
            for ht in range(0, prob.n_h, t.t_h):
                for wt in range(0, prob.n_w, t.t_w):
                    for kt in range(0, prob.n_k, t.t_k):
                        stores_out += t.t_w * t.t_h * t.t_b * t.t_k
                        for ct in range(0, prob.n_c, t.t_c):
                            loads_in += (t.t_b * t.t_c
                                         * (prob.sigma_w * t.t_w + prob.n_r - 1)
                                         * (prob.sigma_h * t.t_h + prob.n_s - 1))
                            loads_ker += prob.n_r * prob.n_s * t.t_k * t.t_c
        cost = cost_sequential(t, prob, MachineSpec(p=1, m=256, m_d=256))
        assert cost.out_term == stores_out
        assert cost.ker_term == loads_ker
        assert cost.in_term == loads_in
        assert cost.total == 10240


class TestCostGlobal:
    def test_degenerates_to_sequential_when_p1(self):
        machine = MachineSpec(p=1, m=200, m_d=200)
        t = plan(t_b=1, t_k=2, t_c=2, t_h=4, t_w=4)
        pp = PartitionPlan(w_b=1, w_k=2, w_c=2, w_h=4, w_w=4, tile=t)
        assert cost_global(pp, SMALL, machine).total == 140

    def test_all_ones(self):
        pp = PartitionPlan(w_b=1, w_k=1, w_c=1, w_h=1, w_w=1, tile=plan())
        assert cost_global(pp, ONES, MachineSpec(p=1, m=3, m_d=3)).total == 3

    def test_partition_closure_enforced(self):
        pp = PartitionPlan(w_b=1, w_k=1, w_c=2, w_h=4, w_w=4, tile=plan())
        with pytest.raises(PartitionInvalid):
            cost_global(pp, SMALL, MachineSpec(p=1, m=64, m_d=64))

    def test_tile_larger_than_partition_rejected(self):
        with pytest.raises(PartitionInvalid):
            PartitionPlan(w_b=1, w_k=1, w_c=1, w_h=2, w_w=2, tile=plan(t_h=4))

    def test_printed_variant_scales_ker_with_full_channels(self):
        prob = ConvProblem(n_b=2, n_k=4, n_c=8, n_h=4, n_w=4, n_r=3, n_s=3)
        machine = MachineSpec(p=4, m=256, m_d=256)
        t = plan(t_b=1, t_k=2, t_h=2, t_w=2)
        pp = PartitionPlan(w_b=2, w_k=2, w_c=4, w_h=4, w_w=4, tile=t)
        default = cost_global(pp, prob, machine)
        printed = cost_global(pp, prob, machine, printed_ker=True)
        assert printed.ker_term == default.ker_term * prob.n_c // pp.w_c
        assert printed.in_term == default.in_term
        assert printed.out_term == default.out_term


class TestCostSimplified:
    def test_matmul_degeneration_hits_amgm_point(self):
        prob = ConvProblem(n_b=4, n_k=16, n_c=16, n_h=2, n_w=2, n_r=1, n_s=1)
        machine = MachineSpec(p=4, m=64, m_d=64)
        root = 8.0  # sqrt of the capacity
        cost = cost_simplified(16.0, 4.0, root, root, 16.0, prob, machine)
        work = prob.n_k * prob.n_c * prob.n_bhw / machine.p
        assert cost == pytest.approx(16.0 * 4.0 + 2 * work / root)

    def test_capacity_violation(self):
        prob = ConvProblem(n_b=4, n_k=16, n_c=16, n_h=2, n_w=2, n_r=1, n_s=1)
        machine = MachineSpec(p=4, m=64, m_d=64)
        with pytest.raises(ConstraintViolated):
            cost_simplified(16.0, 4.0, 16.0, 16.0, 16.0, prob, machine)

    def test_closure_violation(self):
        prob = ConvProblem(n_b=4, n_k=16, n_c=16, n_h=2, n_w=2, n_r=1, n_s=1)
        machine = MachineSpec(p=4, m=64, m_d=64)
        with pytest.raises(ConstraintViolated):
            cost_simplified(16.0, 4.0, 8.0, 8.0, 1.0, prob, machine)


class TestDistributedFormulas:
    def test_p1_distributed_offset_is_tensor_sizes(self):
        machine = MachineSpec(p=1, m=200, m_d=1000)
        t = plan(t_b=1, t_k=2, t_c=2, t_h=4, t_w=4)
        pp = PartitionPlan(w_b=1, w_k=2, w_c=2, w_h=4, w_w=4, tile=t)
        dc = cost_distributed(pp, SMALL, machine)
        total = cost_global(pp, SMALL, machine).total
        assert dc.cost_d - total == SMALL.size_in + SMALL.size_ker
        assert dc.cost_i == 32 + SMALL.size_in + SMALL.size_ker

    def test_memory_distributed_fixture(self):
        machine = MachineSpec(p=1, m=200, m_d=1000)
        t = plan(t_b=1, t_k=2, t_c=1, t_h=4, t_w=4)
        pp = PartitionPlan(w_b=1, w_k=2, w_c=2, w_h=4, w_w=4, tile=t)
        assert memory_distributed(pp, SMALL, machine) == 36 + 18 + 32 + 36 + 72

    def test_memory_distributed_all_ones(self):
        pp = PartitionPlan(w_b=1, w_k=1, w_c=1, w_h=1, w_w=1, tile=plan())
        assert memory_distributed(pp, ONES, MachineSpec(p=1, m=3, m_d=5)) == 5

    @pytest.mark.parametrize("w_k,w_c,t_k,t_h", [
        (2, 8, 1, 2), (4, 4, 2, 4), (8, 2, 4, 1),
    ])
    def test_constant_offsets_for_varied_plans(self, w_k, w_c, t_k, t_h):
        prob = ConvProblem(n_b=2, n_k=8, n_c=8, n_h=4, n_w=4, n_r=3, n_s=3)
        machine = MachineSpec(p=4, m=512, m_d=4096)
        pp = PartitionPlan(w_b=2, w_k=w_k, w_c=w_c, w_h=4, w_w=64 // (w_k * w_c),
                           tile=plan(t_k=t_k, t_h=t_h))
        dc = cost_distributed(pp, prob, machine)
        total = cost_global(pp, prob, machine).total
        share = (prob.size_in + prob.size_ker) / machine.p
        assert dc.cost_d - total == share
        # The distributed model drops the out-tile buffer (partial sums live
        # in the resident block), so the memory offset carries the block
        # minus that buffer; with t == w it reduces to the constant share.
        g_d = memory_distributed(pp, prob, machine)
        g = tile_memory(pp.tile, prob)
        block = pp.w_b * pp.w_k * pp.w_w * pp.w_h
        assert g_d - g == block + share - footprint_out(pp.tile)

    def test_memory_offset_is_constant_when_tiles_fill_partition(self):
        prob = ConvProblem(n_b=2, n_k=8, n_c=8, n_h=4, n_w=4, n_r=3, n_s=3)
        machine = MachineSpec(p=4, m=2048, m_d=8192)
        t = plan(t_b=2, t_k=4, t_c=1, t_h=4, t_w=4)
        pp = PartitionPlan(w_b=2, w_k=4, w_c=4, w_h=4, w_w=4, tile=t)
        share = (prob.size_in + prob.size_ker) // machine.p
        g_d = memory_distributed(pp, prob, machine)
        g = tile_memory(pp.tile, prob)
        assert g_d - g == share


class TestInvariantProperties:
    @given(st.sampled_from([1, 2, 4]), st.sampled_from([1, 2, 4]),
           st.sampled_from([1, 2, 4]))
    @settings(max_examples=30, deadline=None)
    def test_monotonicity_along_divisor_chains(self, t_w, t_h, t_k):
        # Growing any tile size along a divisor chain never increases the
        # reload traffic and never shrinks the tile footprint.
        prob = ConvProblem(n_b=2, n_k=4, n_c=4, n_h=4, n_w=4, n_r=3, n_s=3)
        machine = MachineSpec(p=1, m=100000, m_d=100000)

        def reload_cost(t_w, t_h, t_k):
            pp = PartitionPlan(w_b=2, w_k=4, w_c=4, w_h=4, w_w=4,
                               tile=plan(t_k=t_k, t_h=t_h, t_w=t_w))
            c = cost_global(pp, prob, machine)
            return c.ker_term + c.in_term

        for axis, val in (("t_w", t_w), ("t_h", t_h), ("t_k", t_k)):
            grown = {"t_w": t_w, "t_h": t_h, "t_k": t_k}
            grown[axis] = val * 2 if val * 2 <= 4 else val
            assert reload_cost(**grown) <= reload_cost(t_w=t_w, t_h=t_h, t_k=t_k)
            small = tile_memory(plan(t_k=t_k, t_h=t_h, t_w=t_w), prob)
            big = tile_memory(plan(**grown), prob)
            assert big >= small

    @given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4))
    @settings(max_examples=25, deadline=None)
    def test_matmul_degeneration(self, t_b, t_k, t_w):
        # Without stencil or stride all formulas reduce to their
        # matrix-multiplication three-index analogues.
        prob = ConvProblem(n_b=4, n_k=4, n_c=4, n_h=4, n_w=4, n_r=1, n_s=1)
        machine = MachineSpec(p=1, m=10 ** 6, m_d=10 ** 6)
        t = plan(t_b=t_b, t_k=t_k, t_w=t_w, t_h=2)
        assert footprint_in(t, prob) == t.t_b * t.t_c * t.t_w * t.t_h
        pp = PartitionPlan(w_b=4, w_k=4, w_c=4, w_h=4, w_w=4, tile=t)
        c = cost_global(pp, prob, machine)
        assert c.ker_term == 4 * 4 * ceil_div(4, t.t_w) * 2 * ceil_div(4, t_b)
        assert c.in_term == (4 * 4 * t.t_w * t.t_h
                             * ceil_div(4, t.t_w) * 2 * ceil_div(4, t_k))

    def test_purity(self):
        machine = MachineSpec(p=1, m=200, m_d=200)
        t = plan(t_b=1, t_k=2, t_c=2, t_h=4, t_w=4)
        first = cost_sequential(t, SMALL, machine)
        second = cost_sequential(t, SMALL, machine)
        assert first == second
