import dataclasses

import numpy as np
import pytest

from conv_commsynth import (ConvProblem, MachineSpec, SimConfig,
                            cost_distributed, cost_sequential,
                            generate_tensors, memory_distributed,
                            reference_convolution, run, synthesize,
                            verify_identities)
from conv_commsynth.errors import DataMissing, MemoryOverflow, ShapeMismatch
from conv_commsynth.schedule import CommSchedule, ScheduleStep


def sim_config(prob, machine, seed=0, mode="full_compute", **kwargs):
    result = synthesize(prob, machine, for_simulation=True)
    return result, SimConfig(prob=prob, machine=machine, plan=result.plan,
                             grid=result.grid, dist=result.dist,
                             schedule=result.schedule, seed=seed, mode=mode,
                             **kwargs)


class TestReferenceConvolution:
    def test_scalar_layer(self):
        prob = ConvProblem(n_b=1, n_k=1, n_c=1, n_h=1, n_w=1, n_r=1, n_s=1)
        out = reference_convolution(prob, np.full((1, 1, 1, 1), 2, np.int64),
                                    np.full((1, 1, 1, 1), 3, np.int64))
        assert out[0, 0, 0, 0] == 6

    def test_matches_plain_loop_nest(self):
        # Independent oracle: literal loops in python over a strided layer.
        prob = ConvProblem(n_b=2, n_k=3, n_c=2, n_h=3, n_w=4, n_r=2, n_s=3,
                           sigma_w=2, sigma_h=1)
        in_t, ker_t = generate_tensors(prob, seed=11)
        expected = np.zeros((2, 3, 4, 3), dtype=np.int64)
        for b in range(2):
            for k in range(3):
                for w in range(4):
                    for h in range(3):
                        acc = 0
                        for c in range(2):
                            for r in range(2):
                                for s in range(3):
                                    acc += (in_t[b, c, 2 * w + r, h + s]
                                            * ker_t[k, c, r, s])
                        expected[b, k, w, h] = acc
        assert np.array_equal(reference_convolution(prob, in_t, ker_t), expected)

    def test_matmul_degeneration(self):
        prob = ConvProblem(n_b=2, n_k=4, n_c=3, n_h=2, n_w=2, n_r=1, n_s=1)
        in_t, ker_t = generate_tensors(prob, seed=5)
        out = reference_convolution(prob, in_t, ker_t)
        # Contract over c only: a batched matrix product.
        expected = np.einsum("bcwh,kc->bkwh", in_t, ker_t[:, :, 0, 0])
        assert np.array_equal(out, expected)

    def test_shape_mismatch(self):
        prob = ConvProblem(n_b=1, n_k=1, n_c=1, n_h=2, n_w=2, n_r=1, n_s=1)
        with pytest.raises(ShapeMismatch):
            reference_convolution(prob, np.zeros((1, 1, 3, 3), np.int64),
                                  np.zeros((1, 1, 1, 1), np.int64))


class TestGenerateTensors:
    def test_deterministic_and_bounded(self):
        prob = ConvProblem(n_b=2, n_k=2, n_c=2, n_h=3, n_w=3, n_r=3, n_s=3)
        a_in, a_ker = generate_tensors(prob, seed=42)
        b_in, b_ker = generate_tensors(prob, seed=42)
        assert np.array_equal(a_in, b_in) and np.array_equal(a_ker, b_ker)
        assert a_in.min() >= -4 and a_in.max() <= 4
        c_in, _ = generate_tensors(prob, seed=43)
        assert not np.array_equal(a_in, c_in)


class TestRun:
    def test_single_processor_degenerates_to_sequential(self):
        prob = ConvProblem(n_b=1, n_k=2, n_c=2, n_h=4, n_w=4, n_r=3, n_s=3)
        machine = MachineSpec(p=1, m=256, m_d=4096)
        result, cfg = sim_config(prob, machine, seed=3)
        report = run(cfg)
        assert report.verdict == "pass"
        seq = cost_sequential(result.plan.partition.tile, prob, machine)
        offset = prob.size_in + prob.size_ker
        # The partition covers the whole layer, so the distributed total is
        # the sequential total plus the resident layout.
        assert report.cost_d - seq.total == offset

    def test_all_zero_input_gives_zero_output(self):
        prob = ConvProblem(n_b=1, n_k=2, n_c=2, n_h=2, n_w=2, n_r=1, n_s=1)
        in_t = np.zeros((1, 2, 2, 2), np.int64)
        ker = np.arange(4, dtype=np.int64).reshape(2, 2, 1, 1)
        assert not reference_convolution(prob, in_t, ker).any()

    def test_problem_a_full_compute(self, problem_a, machine_a, pipeline_a):
        cfg = SimConfig(prob=problem_a, machine=machine_a, plan=pipeline_a.plan,
                        grid=pipeline_a.grid, dist=pipeline_a.dist,
                        schedule=pipeline_a.schedule, seed=42)
        report = run(cfg)
        assert report.verdict == "pass"
        predicted = cost_distributed(pipeline_a.plan.partition, problem_a,
                                     machine_a)
        assert report.cost_c == predicted.cost_c
        assert report.cost_i == predicted.cost_i
        again = run(cfg)
        assert dataclasses.asdict(again) == dataclasses.asdict(report)

    def test_count_only_matches_full_compute_counts(self, problem_a,
                                                    machine_a, pipeline_a):
        cfg = SimConfig(prob=problem_a, machine=machine_a, plan=pipeline_a.plan,
                        grid=pipeline_a.grid, dist=pipeline_a.dist,
                        schedule=pipeline_a.schedule, seed=42,
                        mode="count_only")
        report = run(cfg)
        assert report.verdict == "n/a"
        full = run(dataclasses.replace(cfg, mode="full_compute"))
        assert report.received_in == full.received_in
        assert report.received_ker == full.received_ker

    def test_replication_and_reduction(self):
        prob = ConvProblem(n_b=2, n_k=16, n_c=16, n_h=2, n_w=4, n_r=1, n_s=1)
        machine = MachineSpec(p=8, m=128, m_d=4096)
        result, cfg = sim_config(prob, machine, seed=9)
        assert result.grid.p_c == 2
        report = run(cfg)
        assert report.verdict == "pass"
        pp = result.plan.partition
        block = pp.w_b * pp.w_k * pp.w_w * pp.w_h
        roots = [v for v in report.reduction_volume if v]
        assert all(v == (result.grid.p_c - 1) * block for v in roots)
        assert len(roots) == machine.p // result.grid.p_c

    def test_dropped_broadcast_trips_data_missing(self, problem_a, machine_a,
                                                  pipeline_a):
        sched = pipeline_a.schedule
        target = next(i for i, s in enumerate(sched.steps) if s.broadcasts)
        broken_steps = list(sched.steps)
        victim = broken_steps[target]
        broken_steps[target] = ScheduleStep(index=victim.index,
                                            broadcasts=victim.broadcasts[1:])
        broken = CommSchedule(
            steps=tuple(broken_steps), buffers=sched.buffers,
            in_fill_per_step=sched.in_fill_per_step,
            ker_fill_per_step=sched.ker_fill_per_step,
            in_group_len=sched.in_group_len, ker_group_len=sched.ker_group_len)
        cfg = SimConfig(prob=problem_a, machine=machine_a, plan=pipeline_a.plan,
                        grid=pipeline_a.grid, dist=pipeline_a.dist,
                        schedule=broken, seed=42, mode="count_only")
        with pytest.raises(DataMissing) as excinfo:
            run(cfg)
        assert excinfo.value.step == target

    def test_undersized_memory_overflows(self, problem_a, machine_a,
                                         pipeline_a):
        first = run(SimConfig(prob=problem_a, machine=machine_a,
                              plan=pipeline_a.plan, grid=pipeline_a.grid,
                              dist=pipeline_a.dist, schedule=pipeline_a.schedule,
                              seed=42, mode="count_only"))
        peak = max(first.peak_memory)
        tight = MachineSpec(p=machine_a.p, m=machine_a.m, m_d=peak - 1)
        cfg = SimConfig(prob=problem_a, machine=tight, plan=pipeline_a.plan,
                        grid=pipeline_a.grid, dist=pipeline_a.dist,
                        schedule=pipeline_a.schedule, seed=42,
                        mode="count_only")
        with pytest.raises(MemoryOverflow) as excinfo:
            run(cfg)
        assert excinfo.value.step == 0
        assert 0 <= excinfo.value.processor < machine_a.p


class TestVerifyIdentities:
    def test_problem_a_identities_all_pass(self, problem_a, machine_a,
                                           pipeline_a):
        cfg = SimConfig(prob=problem_a, machine=machine_a, plan=pipeline_a.plan,
                        grid=pipeline_a.grid, dist=pipeline_a.dist,
                        schedule=pipeline_a.schedule, seed=42)
        report = run(cfg)
        checks = verify_identities(report, problem_a, machine_a, pipeline_a.plan)
        assert all(c.passed for c in checks)
        names = [c.name for c in checks]
        assert "broadcast_volume_matches" in names
        assert "constant_offset" in names

    def test_peak_within_analytic_bound(self, problem_a, machine_a,
                                        pipeline_a):
        cfg = SimConfig(prob=problem_a, machine=machine_a, plan=pipeline_a.plan,
                        grid=pipeline_a.grid, dist=pipeline_a.dist,
                        schedule=pipeline_a.schedule, seed=42,
                        mode="count_only")
        report = run(cfg)
        g_d = memory_distributed(pipeline_a.plan.partition, problem_a,
                                 machine_a)
        assert max(report.peak_memory) <= g_d <= machine_a.m_d

    def test_failures_are_data_not_errors(self, problem_a, machine_a,
                                          pipeline_a):
        cfg = SimConfig(prob=problem_a, machine=machine_a, plan=pipeline_a.plan,
                        grid=pipeline_a.grid, dist=pipeline_a.dist,
                        schedule=pipeline_a.schedule, seed=42,
                        mode="count_only")
        report = run(cfg)
        report = dataclasses.replace(report, cost_c=report.cost_c + 1,
                                     cost_d=report.cost_d + 1)
        checks = verify_identities(report, problem_a, machine_a, pipeline_a.plan)
        by_name = {c.name: c for c in checks}
        assert not by_name["broadcast_volume_matches"].passed
        assert not by_name["constant_offset"].passed
