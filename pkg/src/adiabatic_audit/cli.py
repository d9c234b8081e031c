"""
Command-line front end.

Commands: ``audit``, ``evolve``, ``sweep``, ``constant-case`` and
``counterexample``. Exit codes: 0 pass, 1 operational error, 2 criterion
failure, 3 bound-dominance violation.
"""

import argparse
import csv
import io
import itertools
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .criteria import (CONDITIONS, DEFAULT_EPSILON, audit, check_integral_bounds, condition_A,
                       condition_B, condition_C,
                       constant_case_solve, report_to_csv, report_to_json)
from .dynamics import evolution_to_csv, evolve_state, verify_bound
from .errors import AuditError, ParameterError, ResolutionError
from .hamiltonians import (SpinHalfParams, TimeGrid, build_counterexample_b, build_smooth_random,
                           build_spin_half, load_sample_table, rescale)
from .spectral import couplings_finite_difference, eigen_flow

log = logging.getLogger("adiabatic_audit")

EXIT_OK, EXIT_ERROR, EXIT_CRITERION, EXIT_DOMINANCE = 0, 1, 2, 3
MAX_REFINED_STEPS = 1 << 22

CONFIG_KEYS = {
    "model": str, "omega0": float, "omega": float, "theta": float, "tmax": float,
    "steps": int, "n_index": int, "epsilon": float, "T": float,
    "table": str, "base": str, "dim": int, "seed": int,
}
MODELS = ("spin", "table", "counterexample-b", "random")


@dataclass
class AuditConfig:
    """Model selection, grid and thresholds for one run."""

    model: str = "spin"
    omega0: float = 10.0
    omega: float = 0.1
    theta: float = math.pi / 3
    tmax: float = 100.0
    steps: Optional[int] = None
    n_index: int = 0
    epsilon: float = DEFAULT_EPSILON
    T: Optional[float] = None
    table: Optional[str] = None
    base: str = "spin"
    dim: int = 3
    seed: int = 0
    conditions: tuple = CONDITIONS

    def validate(self) -> None:
        if self.model not in MODELS:
            raise ParameterError(f"unknown model {self.model!r}; choose from {', '.join(MODELS)}")
        if not self.epsilon > 0:
            raise ParameterError(f"epsilon must be positive, got {self.epsilon}")
        if self.n_index < 0:
            raise ParameterError("n_index must be non-negative")
        needs_table = self.model == "table" or (self.model == "counterexample-b"
                                                and self.base == "table")
        if needs_table and self.table is None:
            raise ParameterError("a sample table file is required (--table)")
        if self.table is not None and not Path(self.table).is_file():
            raise ParameterError(f"sample table {self.table!r} does not exist")
        if self.steps is not None and self.steps < 2:
            raise ParameterError("steps must be >= 2")
        if self.T is not None and not self.T > 0:
            raise ParameterError("T must be positive")

    @property
    def t_end(self) -> float:
        return float(self.T) if self.T is not None else float(self.tmax)


def parse_config_text(text: str) -> Dict[str, object]:
    """Flat ``key=value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"config line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ParameterError(f"config line {lineno}: unknown key {key!r}")
        try:
            values[key] = CONFIG_KEYS[key](value)
        except ValueError:
            raise ParameterError(f"config line {lineno}: bad value {value!r} for {key}") from None
    return values


def _spin_params(cfg: AuditConfig) -> SpinHalfParams:
    return SpinHalfParams(cfg.omega0, cfg.omega, cfg.theta)


def _base_model(cfg: AuditConfig, kind: str):
    if kind == "spin":
        if cfg.T is not None:
            return rescale(build_spin_half(_spin_params(cfg), 1.0), cfg.T)
        return build_spin_half(_spin_params(cfg), cfg.tmax)
    if kind == "table":
        return load_sample_table(cfg.table)
    if kind == "random":
        return build_smooth_random(cfg.dim, cfg.seed, cfg.t_end)
    raise ParameterError(f"unknown base model {kind!r}")


def _default_steps(model, t_end: float) -> int:
    """Step count with ``max|E| h = 0.0125``, enough for the integrator's norm tolerance."""
    scale = float(np.max(np.abs(np.linalg.eigvalsh(model.evaluate(0.0)))))
    return int(min(MAX_REFINED_STEPS, max(2000, math.ceil(t_end * scale / 0.0125))))


def _flow_on(cfg: AuditConfig, base, t_end: float, steps: int, refine: bool):
    """Model, grid and flow on ``steps`` intervals, doubled on resolution errors."""
    while True:
        grid = TimeGrid(t_end, steps)
        try:
            model = build_counterexample_b(base, grid) if cfg.model == "counterexample-b" else base
            return model, grid, eigen_flow(model, grid)
        except ResolutionError as exc:
            if not refine or steps * 2 > MAX_REFINED_STEPS:
                raise
            log.warning("%s; retrying with %d steps", exc, steps * 2)
            steps *= 2


def _summary(flow, n: int) -> np.ndarray:
    return np.array([condition_A(flow, n)[1], condition_B(flow, n)[:, -1].max(),
                     condition_C(flow, n)[1][:, -1].max()])


def _resolved(flow) -> bool:
    """Couplings from dH/dt agree with differences of the sampled eigenvectors.

    A rotation that aliases between samples fools overlap tracking and
    survives grid doubling, but not this comparison.
    """
    if flow.coupling_method != "hellmann-feynman":
        return True
    fd = couplings_finite_difference(flow)
    scale = max(float(np.max(np.abs(flow.couplings))), 1e-300)
    return float(np.max(np.abs(fd - flow.couplings))) <= 1e-2 * scale


def _converged_flow(cfg: AuditConfig, base, t_end: float):
    """Double the grid until the flow is resolved and A_max, B, C agree to 1% with the previous grid."""
    n = cfg.n_index
    model, grid, flow = _flow_on(cfg, base, t_end, 2000, True)
    if n >= model.dimension:
        return model, grid, flow
    prev = _summary(flow, n)
    while 2 * grid.n_steps <= MAX_REFINED_STEPS:
        model, grid, flow = _flow_on(cfg, base, t_end, 2 * grid.n_steps, True)
        cur = _summary(flow, n)
        if _resolved(flow) and np.all(np.abs(cur - prev) <= 1e-2 * np.maximum(np.abs(cur), 1e-12)):
            return model, grid, flow
        prev = cur
    log.warning("conditions not converged at %d steps", grid.n_steps)
    return model, grid, flow


def build_model_and_flow(cfg: AuditConfig, refine: bool = True, dynamics: bool = True):
    """Model, grid and spectral flow.

    With ``--steps`` the grid is only doubled on resolution errors. Without
    it, runs that integrate start from the integrator's step size, and pure
    audits refine until the conditions converge.
    """
    kind = cfg.base if cfg.model == "counterexample-b" else cfg.model
    base = _base_model(cfg, kind)
    t_end = min(cfg.t_end, base.t_max)
    if cfg.steps:
        model, grid, flow = _flow_on(cfg, base, t_end, cfg.steps, refine)
    elif dynamics or cfg.model == "counterexample-b":
        model, grid, flow = _flow_on(cfg, base, t_end, _default_steps(base, t_end), refine)
    else:
        model, grid, flow = _converged_flow(cfg, base, t_end)
    if cfg.n_index >= model.dimension:
        raise ParameterError(f"n_index {cfg.n_index} out of range for dimension {model.dimension}")
    return model, grid, flow


def _emit(text: str, args, path: Optional[str]) -> None:
    if args.stdout or path is None:
        sys.stdout.write(text)
    if path is not None:
        Path(path).write_text(text)
        log.info("wrote %s", path)


def _sibling(path: Optional[str], suffix: str) -> Optional[str]:
    if path is None:
        return None
    p = Path(path)
    return str(p.with_name(p.stem + suffix))


def _model_info(cfg: AuditConfig, model, grid) -> dict:
    return {"model": cfg.model, "kind": model.kind, "dimension": model.dimension,
            "parameters": {k: v for k, v in model.parameters.items()},
            "t_end": grid.t_end, "steps": grid.n_steps}


def cmd_audit(cfg: AuditConfig, args) -> int:
    model, grid, flow = build_model_and_flow(cfg, dynamics=False)
    report = audit(flow, cfg.n_index, epsilon=cfg.epsilon, enabled=cfg.conditions)
    if args.format == "csv":
        _emit(report_to_csv(report), args, args.out)
    else:
        _emit(report_to_json(report, extra={"model": _model_info(cfg, model, grid)}), args, args.out)
        if args.out is not None:
            Path(_sibling(args.out, ".curves.csv")).write_text(report_to_csv(report))
    failed = [k for k in report.enabled if not report.verdicts[k]]
    log.info("A_max=%r B=%r C=%r tau_admissible=%r", report.A_max, report.B_value,
             report.C_value, report.tau_admissible)
    if failed:
        log.warning("conditions failing at eps=%r: %s", cfg.epsilon, ", ".join(failed))
        return EXIT_CRITERION
    return EXIT_OK


def negative_fixture_bound(evolution, report) -> np.ndarray:
    """Bound curve rescaled to half the observed infidelity at its tightest point.

    Any correct checker must reject it wherever the infidelity is nonzero.
    """
    bound = np.asarray(report.bound_curve)
    infid = evolution.infidelity
    safe = np.where(bound > 0, bound, np.inf)
    tight = float(np.max(infid / safe))
    return 0.5 * tight * bound


def cmd_evolve(cfg: AuditConfig, args) -> int:
    model, grid, flow = build_model_and_flow(cfg)
    report = audit(flow, cfg.n_index, epsilon=cfg.epsilon, enabled=cfg.conditions)
    evo = evolve_state(model, grid, cfg.n_index, flow=flow)
    slack = 5e-6
    if args.self_test_negative:
        report = replace(report, bound=replace(report.bound, boundary=negative_fixture_bound(
            evo, report), drift=np.zeros_like(report.bound.drift),
            leakage=np.zeros_like(report.bound.leakage)))
        slack = 0.0
    verdict = verify_bound(evo, report, slack=slack)
    if args.format == "json":
        doc = {"model": _model_info(cfg, model, grid), "final_fidelity": float(evo.fidelity[-1]),
               "norm_drift": evo.norm_drift, "error_estimate": evo.error_estimate,
               "dominance": {"passed": verdict.passed, "worst_margin": verdict.worst_margin,
                             "worst_time": verdict.worst_time,
                             "max_violation": verdict.max_violation, "slack": verdict.slack}}
        _emit(json.dumps(doc, sort_keys=True, indent=1) + "\n", args, args.out)
    else:
        _emit(evolution_to_csv(evo, report.bound_curve), args, args.out)
    log.info("final F=%r worst margin=%r", float(evo.fidelity[-1]), verdict.worst_margin)
    return EXIT_OK if verdict.passed else EXIT_DOMINANCE


def _parse_vary(items: List[str]) -> Dict[str, List[float]]:
    ranges = {}
    for item in items or []:
        if "=" not in item:
            raise ParameterError(f"--vary expects key=v1,v2,..., got {item!r}")
        key, values = item.split("=", 1)
        key = key.strip()
        if key not in ("omega0", "omega", "theta", "tmax", "T", "seed", "n_index", "epsilon"):
            raise ParameterError(f"cannot vary {key!r}")
        vals = [float(v) for v in values.split(",") if v.strip()]
        if not vals:
            raise ParameterError(f"empty range for {key!r}")
        ranges[key] = vals
    if not ranges:
        raise ParameterError("sweep needs at least one --vary range")
    return ranges


SWEEP_COLUMNS = ["A_max", "B", "C", "tau_admissible", "final_F", "bound", "error"]


def _sweep_point(cfg: AuditConfig, evolve: bool) -> dict:
    try:
        cfg.validate()
        model, grid, flow = build_model_and_flow(cfg, dynamics=evolve)
        report = audit(flow, cfg.n_index, epsilon=cfg.epsilon, enabled=cfg.conditions)
        final_f = math.nan
        if evolve:
            final_f = float(evolve_state(model, grid, cfg.n_index, flow=flow,
                                         estimate_error=False).fidelity[-1])
        return {"A_max": report.A_max, "B": report.B_value, "C": report.C_value,
                "tau_admissible": report.tau_admissible, "final_F": final_f,
                "bound": float(report.bound_curve[-1]), "error": ""}
    except AuditError as exc:
        out = {k: math.nan for k in SWEEP_COLUMNS}
        out["error"] = f"{type(exc).__name__}: {exc}"
        return out


def cmd_sweep(cfg: AuditConfig, args) -> int:
    ranges = _parse_vary(args.vary)
    keys = list(ranges)
    points = []
    for combo in itertools.product(*(ranges[k] for k in keys)):
        changes = {k: (int(v) if k in ("seed", "n_index") else v) for k, v in zip(keys, combo)}
        points.append((combo, replace(cfg, **changes)))
    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        rows = list(pool.map(lambda p: _sweep_point(p[1], not args.no_evolve), points))
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(keys + SWEEP_COLUMNS)
    for (combo, _), row in zip(points, rows):
        writer.writerow([repr(float(v)) for v in combo]
                        + [repr(float(row[k])) for k in SWEEP_COLUMNS[:-1]] + [row["error"]])
    _emit(out.getvalue(), args, args.out)
    return EXIT_OK


def cmd_constant_case(cfg: AuditConfig, args) -> int:
    model, grid, flow = build_model_and_flow(cfg)
    solution = constant_case_solve(flow, cfg.n_index)
    doc = {"model": _model_info(cfg, model, grid), "solution": solution.to_dict()}
    if solution.decoupled:
        log.info("decoupled levels: F = 1 exactly, integral bounds not needed")
    else:
        evo = evolve_state(model, grid, cfg.n_index, flow=flow, estimate_error=False)
        check = check_integral_bounds(solution, flow, evo.coefficients)
        doc["integral_check"] = {"passed": check["passed"], "max_ratio": check["max_ratio"]}
    _emit(json.dumps(doc, sort_keys=True, indent=1) + "\n", args, args.out)
    return EXIT_OK


def cmd_counterexample(cfg: AuditConfig, args) -> int:
    base_cfg = replace(cfg, model=cfg.base)
    model_a, grid, flow_a = build_model_and_flow(base_cfg)
    model_b = build_counterexample_b(model_a, grid)
    flow_b = eigen_flow(model_b, grid)
    doc = {"model": _model_info(base_cfg, model_a, grid),
           "coupling_modulus_difference": float(np.max(np.abs(
               np.abs(flow_a.couplings) - np.abs(flow_b.couplings))))}
    for label, model, flow in (("a", model_a, flow_a), ("b", model_b, flow_b)):
        rep = audit(flow, cfg.n_index, epsilon=cfg.epsilon, enabled=cfg.conditions)
        evo = evolve_state(model, grid, cfg.n_index, flow=flow, estimate_error=False)
        doc[f"H_{label}"] = {"A_max": rep.A_max, "B": rep.B_value, "C": rep.C_value,
                             "verdicts": rep.verdicts, "tau_admissible": rep.tau_admissible,
                             "final_F": float(evo.fidelity[-1]),
                             "bound_final": float(rep.bound_curve[-1])}
    _emit(json.dumps(doc, sort_keys=True, indent=1) + "\n", args, args.out)
    return EXIT_OK


COMMANDS = {"audit": cmd_audit, "evolve": cmd_evolve, "sweep": cmd_sweep,
            "constant-case": cmd_constant_case, "counterexample": cmd_counterexample}

_FLAG_TO_KEY = {"model": "model", "omega0": "omega0", "omega": "omega", "theta": "theta",
                "tmax": "tmax", "steps": "steps", "n": "n_index", "eps": "epsilon", "T": "T",
                "table": "table", "base": "base", "dim": "dim", "seed": "seed"}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file; flags override it")
    common.add_argument("--model", choices=MODELS)
    common.add_argument("--base", choices=("spin", "table", "random"),
                        help="base model for counterexample studies")
    common.add_argument("--omega0", type=float)
    common.add_argument("--omega", type=float)
    common.add_argument("--theta", type=float)
    common.add_argument("--tmax", type=float)
    common.add_argument("--T", type=float, help="run H(t/T) on [0, T] with the spin base on [0, 1]")
    common.add_argument("--steps", type=int)
    common.add_argument("--n", type=int, help="initial level index (ascending energies)")
    common.add_argument("--eps", type=float)
    common.add_argument("--table", help="sampled-Hamiltonian file")
    common.add_argument("--dim", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--conditions", default="A,B,C", help="enabled conditions")
    common.add_argument("--out", help="output file")
    common.add_argument("--format", choices=("json", "csv"))
    common.add_argument("--stdout", action="store_true", help="also write the data to stdout")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="adiabatic-audit",
                                     description="Audit the adiabatic approximation.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("audit", parents=[common], help="evaluate the sufficiency conditions")
    ev = sub.add_parser("evolve", parents=[common], help="integrate and check bound dominance")
    ev.add_argument("--self-test-negative", action="store_true",
                    help="check against a deliberately broken bound (must exit 3)")
    sw = sub.add_parser("sweep", parents=[common], help="audit a grid of parameter points")
    sw.add_argument("--vary", action="append", metavar="KEY=V1,V2,...")
    sw.add_argument("--jobs", type=int, default=1)
    sw.add_argument("--no-evolve", action="store_true")
    sub.add_parser("constant-case", parents=[common], help="solve the constant-coefficient case")
    sub.add_parser("counterexample", parents=[common], help="compare H^a with its partner H^b")
    return parser


def config_from_args(args) -> AuditConfig:
    values = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ParameterError(f"config file {args.config!r} does not exist")
        values.update(parse_config_text(path.read_text()))
    for flag, key in _FLAG_TO_KEY.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[key] = v
    if "model" in values:
        values["model"] = {"counterexample_b": "counterexample-b"}.get(values["model"],
                                                                       values["model"])
    conds = tuple(c.strip() for c in args.conditions.split(",") if c.strip())
    cfg = AuditConfig(**values, conditions=conds)
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    if args.format is None:
        args.format = "csv" if args.command in ("evolve", "sweep") else "json"
    try:
        cfg = config_from_args(args)
        return COMMANDS[args.command](cfg, args)
    except AuditError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
