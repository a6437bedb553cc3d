"""Command-line interface: plan / verify / simulate / sweep.

Config files are line-oriented ``key = value`` text with ``#`` comments.
Reports start with the header line ``conv-commsynth-report v1``; every
report line begins with a stable tag so runs can be diffed or parsed.
The process exits nonzero when any requested identity or verification
fails.
"""

import argparse
import sys
from dataclasses import dataclass, replace

from .errors import CommSynthError, ParseError, ValidationError
from .model import (ConvProblem, MachineSpec, cost_distributed, cost_global,
                    memory_distributed)
from .optimizer import (OracleLimits, brute_force_oracle, effective_capacity,
                        printed_case1_partition, solve_closed_form)
from .pipeline import synthesize
from .simulator import SimConfig, run, verify_identities

REPORT_HEADER = "conv-commsynth-report v1"

_PROBLEM_KEYS = {
    "Nb": "n_b", "Nk": "n_k", "Nc": "n_c", "Nh": "n_h", "Nw": "n_w",
    "Nr": "n_r", "Ns": "n_s", "sigma_w": "sigma_w", "sigma_h": "sigma_h",
}
_REQUIRED = ("Nb", "Nk", "Nc", "Nh", "Nw", "Nr", "Ns", "P", "M")
_INT_KEYS = set(_PROBLEM_KEYS) | {"P", "M", "MD", "element_width", "seed",
                                  "max_points"}
_BOOL_KEYS = {"strict", "lower_bound"}
_ALL_KEYS = _INT_KEYS | _BOOL_KEYS | {"scope"}


@dataclass(frozen=True)
class RunConfig:
    problem: ConvProblem
    p: int
    m: int
    m_d: int | None = None
    scope: str = "c_innermost"
    strict: bool = False
    lower_bound: bool = False
    element_width: int = 4
    seed: int = 0
    max_points: int = 10_000_000

    def machine(self, need_md: bool = False) -> MachineSpec:
        if need_md and self.m_d is None:
            raise ValidationError("MD", "required for simulate")
        return MachineSpec(p=self.p, m=self.m,
                           m_d=self.m_d if self.m_d is not None else self.m)


def parse_config(text: str) -> RunConfig:
    """Parse ``key = value`` lines into a validated RunConfig."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ParseError(lineno, f"expected key = value, got {stripped!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _ALL_KEYS:
            raise ParseError(lineno, f"unknown key {key!r}")
        if key in raw:
            raise ParseError(lineno, f"duplicate key {key!r}")
        if key in _INT_KEYS:
            try:
                raw[key] = int(value)
            except ValueError:
                raise ParseError(lineno, f"{key} must be an integer, got {value!r}")
        elif key in _BOOL_KEYS:
            if value.lower() in ("1", "true", "yes"):
                raw[key] = True
            elif value.lower() in ("0", "false", "no"):
                raw[key] = False
            else:
                raise ParseError(lineno, f"{key} must be a boolean, got {value!r}")
        else:
            raw[key] = value

    for key in _REQUIRED:
        if key not in raw:
            raise ValidationError(key, "required")
    for key, value in raw.items():
        if key in _INT_KEYS and key not in ("seed",) and value < 1:
            raise ValidationError(key, f"must be >= 1, got {value}")
    scope = raw.get("scope", "c_innermost").replace("-", "_")
    if scope not in ("c_innermost", "all"):
        raise ValidationError("scope", f"must be c_innermost or all, got {scope!r}")

    try:
        problem = ConvProblem(**{field: raw[key] for key, field
                                 in _PROBLEM_KEYS.items() if key in raw})
    except ValueError as exc:
        raise ValidationError("problem", str(exc))
    m_d = raw.get("MD")
    if m_d is not None and m_d < raw["M"]:
        raise ValidationError("MD", f"must be >= M = {raw['M']}")
    return RunConfig(
        problem=problem, p=raw["P"], m=raw["M"], m_d=m_d, scope=scope,
        strict=raw.get("strict", False), lower_bound=raw.get("lower_bound", False),
        element_width=raw.get("element_width", 4), seed=raw.get("seed", 0),
        max_points=raw.get("max_points", 10_000_000))


def render_config(cfg: RunConfig) -> str:
    """Emit config text that parses back to the same RunConfig."""
    prob = cfg.problem
    lines = [f"Nb = {prob.n_b}", f"Nk = {prob.n_k}", f"Nc = {prob.n_c}",
             f"Nh = {prob.n_h}", f"Nw = {prob.n_w}", f"Nr = {prob.n_r}",
             f"Ns = {prob.n_s}", f"sigma_w = {prob.sigma_w}",
             f"sigma_h = {prob.sigma_h}", f"P = {cfg.p}", f"M = {cfg.m}"]
    if cfg.m_d is not None:
        lines.append(f"MD = {cfg.m_d}")
    lines += [f"scope = {cfg.scope}", f"strict = {str(cfg.strict).lower()}",
              f"lower_bound = {str(cfg.lower_bound).lower()}",
              f"element_width = {cfg.element_width}", f"seed = {cfg.seed}",
              f"max_points = {cfg.max_points}"]
    return "\n".join(lines) + "\n"


def _problem_line(cfg: RunConfig) -> str:
    p = cfg.problem
    return (f"problem Nb={p.n_b} Nk={p.n_k} Nc={p.n_c} Nh={p.n_h} Nw={p.n_w} "
            f"Nr={p.n_r} Ns={p.n_s} sigma_w={p.sigma_w} sigma_h={p.sigma_h}")


def _machine_line(cfg: RunConfig) -> str:
    md = cfg.m_d if cfg.m_d is not None else "-"
    return f"machine P={cfg.p} M={cfg.m} MD={md}"


def _plan_lines(result, cfg: RunConfig):
    sol = result.solution
    pp = result.plan.partition
    t = pp.tile
    grid = result.grid
    machine = cfg.machine()
    lines = [
        f"capacity mode={'lower_bound' if cfg.lower_bound else 'adjusted'} "
        f"M_L={result.m_l:.4f}",
        f"closed_form row={sol.table_row} case={sol.case_label} "
        f"Tk={sol.t_k:.4f} Tbhw={sol.t_bhw:.4f} Wk={sol.w_k:.4f} "
        f"Wbhw={sol.w_bhw:.4f} Wc={sol.w_c:.4f} cost={sol.predicted_cost:.4f}",
    ]
    if sol.alt_permutation_cheaper:
        lines.append("note a non-channel-innermost loop order attains this bound")
    lines.append(
        f"integer_plan Wb={pp.w_b} Wk={pp.w_k} Wc={pp.w_c} Wh={pp.w_h} "
        f"Ww={pp.w_w} Tb={t.t_b} Tk={t.t_k} Tc={t.t_c} Th={t.t_h} Tw={t.t_w} "
        f"cost={result.plan.achieved_cost} gap={result.plan.gap_vs_closed_form:.4f}")
    if result.adjustment_delta:
        lines.append(f"adjusted_for_distribution cost_delta={result.adjustment_delta}")
    lines.append(f"grid Pb={grid.p_b} Pk={grid.p_k} Pc={grid.p_c} "
                 f"Ph={grid.p_h} Pw={grid.p_w}")
    dc = cost_distributed(pp, cfg.problem, machine)
    g_d = memory_distributed(pp, cfg.problem, machine)
    width = cfg.element_width
    lines.append(f"predicted cost_I={dc.cost_i} cost_C={dc.cost_c} "
                 f"cost_D={dc.cost_d} g_D={g_d}")
    lines.append(f"bytes element_width={width} cost_D={dc.cost_d * width} "
                 f"g_D={g_d * width}")
    if cfg.strict:
        printed = cost_global(pp, cfg.problem, machine, printed_ker=True)
        wk_p, wbhw_p = printed_case1_partition(cfg.problem)
        lines.append(f"strict_printed cost_total={printed.total} "
                     f"ker_term={printed.ker_term}")
        lines.append(f"strict_printed case1 Wk={wk_p:.4f} Wbhw={wbhw_p:.4f}")
    return lines


def cmd_plan(cfg: RunConfig):
    result = synthesize(cfg.problem, cfg.machine(), scope=cfg.scope,
                        lower_bound=cfg.lower_bound)
    lines = [REPORT_HEADER, "command plan", _problem_line(cfg),
             _machine_line(cfg)]
    lines += _plan_lines(result, cfg)
    return 0, "\n".join(lines) + "\n"


def cmd_verify(cfg: RunConfig):
    machine = cfg.machine()
    bound = solve_closed_form(cfg.problem, machine, float(machine.m),
                              permutation_scope=cfg.scope)
    oracle = brute_force_oracle(cfg.problem, machine,
                                OracleLimits(max_points=cfg.max_points))
    result = synthesize(cfg.problem, machine, scope=cfg.scope,
                        lower_bound=cfg.lower_bound)
    sound = bound.predicted_cost <= oracle.achieved_cost + 1
    rel_gap = result.plan.achieved_cost / oracle.achieved_cost - 1.0
    within = rel_gap <= 0.15
    opp = oracle.partition
    ot = opp.tile
    lines = [
        REPORT_HEADER, "command verify", _problem_line(cfg), _machine_line(cfg),
        f"lower_bound cost={bound.predicted_cost:.4f} case={bound.case_label}",
        f"oracle cost={oracle.achieved_cost} Wb={opp.w_b} Wk={opp.w_k} "
        f"Wc={opp.w_c} Wh={opp.w_h} Ww={opp.w_w} Tb={ot.t_b} Tk={ot.t_k} "
        f"Th={ot.t_h} Tw={ot.t_w}",
        f"synthesized cost={result.plan.achieved_cost} "
        f"gap_vs_oracle={rel_gap:.4f}",
        f"check lower_bound_sound {'pass' if sound else 'fail'}",
        f"check within_15pct_of_oracle {'pass' if within else 'fail'}",
    ]
    return (0 if sound and within else 1), "\n".join(lines) + "\n"


def cmd_simulate(cfg: RunConfig):
    machine = cfg.machine(need_md=True)
    result = synthesize(cfg.problem, machine, scope=cfg.scope,
                        lower_bound=cfg.lower_bound, for_simulation=True)
    sim_cfg = SimConfig(prob=cfg.problem, machine=machine, plan=result.plan,
                        grid=result.grid, dist=result.dist,
                        schedule=result.schedule, seed=cfg.seed,
                        mode="full_compute")
    report = run(sim_cfg)
    checks = verify_identities(report, cfg.problem, machine, result.plan)
    lines = [REPORT_HEADER, "command simulate", _problem_line(cfg),
             _machine_line(cfg)]
    lines += _plan_lines(result, cfg)
    for rank in range(machine.p):
        lines.append(
            f"sim_processor rank={rank} received_in={report.received_in[rank]} "
            f"received_ker={report.received_ker[rank]} "
            f"initial={report.initial_footprint[rank]} "
            f"peak={report.peak_memory[rank]} "
            f"reduction={report.reduction_volume[rank]}")
    lines.append(f"sim_totals cost_I={report.cost_i} cost_C={report.cost_c} "
                 f"cost_D={report.cost_d} steps={report.steps} seed={report.seed}")
    ok = True
    for check in checks:
        ok &= check.passed
        lines.append(f"identity {check.name} "
                     f"{'pass' if check.passed else 'fail'} "
                     f"lhs={check.lhs} rhs={check.rhs}")
    return (0 if ok else 1), "\n".join(lines) + "\n"


def cmd_sweep(cfg: RunConfig, axis: str, values, fmt: str = "text"):
    if axis not in ("M", "P"):
        raise ValidationError("axis", f"must be M or P, got {axis!r}")
    rows = []
    for value in values:
        swept = replace(cfg, **{axis.lower(): value})
        if swept.m_d is not None and swept.m_d < swept.m:
            swept = replace(swept, m_d=swept.m)
        machine = swept.machine()
        m_l = effective_capacity(machine.m, swept.problem,
                                 lower_bound=swept.lower_bound)
        sol = solve_closed_form(swept.problem, machine, m_l,
                                permutation_scope=swept.scope)
        rows.append((value, m_l, sol.table_row, sol.case_label,
                     sol.predicted_cost))
    if fmt == "csv":
        out = [f"{axis},M_L,row,case,cost"]
        out += [f"{v},{m_l:.4f},{row},{case},{cost:.4f}"
                for v, m_l, row, case, cost in rows]
        return 0, "\n".join(out) + "\n"
    lines = [REPORT_HEADER, f"command sweep axis={axis}", _problem_line(cfg)]
    lines += [f"sweep_row {axis}={v} M_L={m_l:.4f} row={row} case={case} "
              f"cost={cost:.4f}" for v, m_l, row, case, cost in rows]
    return 0, "\n".join(lines) + "\n"


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="conv-commsynth",
        description="Plan, verify and simulate communication-efficient "
                    "distributed CNN forward convolution")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("plan", "verify", "simulate", "sweep"):
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, help="config file path")
        cmd.add_argument("--seed", type=int, default=None)
        cmd.add_argument("--format", choices=("text", "csv"), default="text")
        cmd.add_argument("--strict", action="store_true",
                         help="additionally report the as-printed cost variants")
        cmd.add_argument("--lower-bound", action="store_true",
                         help="use the raw capacity instead of the halo-adjusted one")
        cmd.add_argument("--scope", choices=("c-innermost", "all"), default=None)
        if name == "sweep":
            cmd.add_argument("--axis", default="M")
            cmd.add_argument("--values", required=True,
                             help="comma-separated axis values")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        with open(args.config, encoding="utf-8") as handle:
            cfg = parse_config(handle.read())
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.strict:
            cfg = replace(cfg, strict=True)
        if args.lower_bound:
            cfg = replace(cfg, lower_bound=True)
        if args.scope is not None:
            cfg = replace(cfg, scope=args.scope.replace("-", "_"))
        if args.command == "plan":
            code, text = cmd_plan(cfg)
        elif args.command == "verify":
            code, text = cmd_verify(cfg)
        elif args.command == "simulate":
            code, text = cmd_simulate(cfg)
        else:
            values = [int(v) for v in args.values.split(",") if v.strip()]
            code, text = cmd_sweep(cfg, args.axis, values, fmt=args.format)
    except CommSynthError as exc:
        print(f"error {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(text)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
