"""Command-line entry point: analyze | construct | verify | simulate.

Reports are JSON documents validating against ``report_schema.json``;
every tolerance in force is echoed so numerical verdicts are auditable.
Exit codes: 0 success/saturable, 1 error (bad files, invalid inputs),
2 negative verdict (conditions failed, verification failed, singular
Fisher matrix), 3 undetermined.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, blocks, linalg
from .conditions import SATURABLE_PROJECTIVE, UNDETERMINED, ConditionReport, evaluate_conditions
from .config import DEFAULT, Tolerances, parse_overrides
from .errors import ConditionFailed, QcrbError, SingularFisher
from .estimate import SimConfig, fc_convergence_study, run_trials, study_csv
from .model import StateModel, eval_bundle, load_model
from .povm import (
    Povm,
    construct_optimal,
    effects_from_json,
    effects_to_json,
    make_povm,
    outcome_probabilities,
    saturation_check,
    verify_optimality,
)
from .sld import compute_slds, qfim

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FAILED = 2
EXIT_UNDETERMINED = 3

_ERROR_EXIT = {ConditionFailed: EXIT_FAILED, SingularFisher: EXIT_FAILED}


def report_schema() -> dict:
    text = resources.files("qcrb").joinpath("report_schema.json").read_text(encoding="utf-8")
    return json.loads(text)


class _Parser(argparse.ArgumentParser):
    # usage problems map to the generic error exit, keeping the code lattice total
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _real_matrix(a) -> list:
    return [[float(x) for x in row] for row in np.asarray(a, dtype=float)]


def _real_vector(a) -> list:
    return [float(x) for x in np.asarray(a, dtype=float)]


def _nan_to_none(value: float):
    return None if math.isnan(value) else float(value)


def _verdict_json(v) -> dict:
    return {"passed": bool(v.passed), "residual": float(v.residual)}


def _conditions_json(report: ConditionReport) -> dict:
    c4 = report.c4
    lam = None
    if c4.lam is not None:
        lam = [[[_nan_to_none(x) for x in col] for col in row] for row in c4.lam]
    if c4.W is None:
        w_payload = None
    elif c4.W.size == 0:
        w_payload = []
    else:
        w_payload = linalg.matrix_to_json(c4.W)
    return {
        "c1": _verdict_json(report.c1),
        "c3": _verdict_json(report.c3),
        "partial_commutativity": _verdict_json(report.partial_comm),
        "c2": None if report.c2 is None else _verdict_json(report.c2),
        "c4": {
            "certified": bool(c4.certified),
            "residual": float(c4.residual),
            "W": w_payload,
            "lambda": lam,
            "zero_columns": list(c4.zero_columns),
            "note": c4.note,
        },
        "classification": report.classification,
    }


def _effect_check_json(check) -> dict:
    constants = np.asarray(check.constants)
    if constants.ndim == 1:
        consts = [_nan_to_none(x) for x in constants]
    else:
        consts = [[_nan_to_none(x) for x in row] for row in constants]
    return {
        "index": int(check.index),
        "label": check.label,
        "constants": consts,
        "residual": float(check.residual),
        "imag_defect": float(check.imag_defect),
        "ok": bool(check.ok),
    }


def _optimality_json(report) -> dict:
    return {
        "passed": bool(report.passed),
        "regular": [_effect_check_json(c) for c in report.regular],
        "null": [_effect_check_json(c) for c in report.null],
        "block_offdiag": [float(x) for x in report.block_offdiag],
        "null_sum_residual": float(report.null_sum_residual),
    }


def _saturation_json(report) -> dict:
    return {
        "passed": bool(report.passed),
        "F": _real_matrix(report.F),
        "F_reg": _real_matrix(report.F_reg),
        "F_null": _real_matrix(report.F_null),
        "F_c": _real_matrix(report.F_c),
        "null_sum": _real_matrix(report.null_sum),
        "res_regular": float(report.res_regular),
        "res_null": float(report.res_null),
    }


def _model_json(model: StateModel) -> dict:
    constants = {}
    for key, value in model.constants.items():
        if isinstance(value, complex):
            constants[key] = [value.real, value.imag]
        else:
            constants[key] = value
    return {
        "name": model.name,
        "n_s": model.n_s,
        "p": model.p,
        "constants": constants,
        "box": [list(b) for b in model.box],
    }


def _factorization_order(model: StateModel, theta, dec) -> Optional[list]:
    """Map the descending eigenvalues back to the model's own weight order."""
    if model.factorization is None:
        return None
    try:
        _, _, q_model = model.factorization(np.asarray(theta, dtype=float))
    except QcrbError:
        return None
    if len(q_model) != dec.r_plus:
        return None
    return [float(x) for x in q_model]


def _resolve_theta(model: StateModel, override) -> np.ndarray:
    if override is not None:
        return np.asarray(override, dtype=float)
    if model.default_theta is not None:
        return np.asarray(model.default_theta, dtype=float)
    raise QcrbError("no theta: pass --theta or put a 'theta' entry in the model file")


def _analysis(model: StateModel, theta, h: float, tol: Tolerances, seed: int,
              warnings: list[str]):
    bundle = eval_bundle(model, theta, h=h, tol=tol)
    dec = blocks.decompose(bundle.rho, tol)
    for l, drho in enumerate(bundle.drho):
        mass = blocks.null_block_residual(drho, dec)
        if mass > tol.nullblock * (1.0 + linalg.fro(drho)):
            warnings.append(
                f"RankDriftWarning: derivative {l} has null-null mass {mass:.3e}"
            )
    slds = compute_slds(bundle, dec, tol)
    fim = qfim(slds)
    conditions = evaluate_conditions(slds, tol, seed=seed)
    return bundle, dec, slds, fim, conditions


def _analysis_sections(model, theta, bundle, dec, slds, fim, conditions, tol) -> dict:
    return {
        "model": _model_json(model),
        "theta": _real_vector(theta),
        "decomposition": {
            "r_plus": dec.r_plus,
            "r_zero": dec.r_zero,
            "q": _real_vector(dec.q),
            "q_factorization_order": _factorization_order(model, theta, dec),
            "inverse_weight_condition": float(1.0 / dec.q[-1]),
            "null_block_residuals": [
                float(blocks.null_block_residual(d, dec)) for d in bundle.drho
            ],
        },
        "qfim": {
            "F": _real_matrix(fim.F),
            "F_reg": _real_matrix(fim.F_reg),
            "F_null": _real_matrix(fim.F_null),
        },
        "conditions": _conditions_json(conditions),
    }


def _emit(report: dict, out_path: Optional[str]) -> None:
    payload = json.dumps(report, indent=2)
    if out_path:
        Path(out_path).write_text(payload + "\n", encoding="utf-8")
    else:
        print(payload)


def _load_povm_file(path: str, rho, dec, tol: Tolerances) -> tuple[Povm, list[str]]:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise QcrbError(f"cannot read POVM file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise QcrbError(f"POVM file {path} is not valid JSON: {exc}") from exc
    effects = effects_from_json(obj)
    return make_povm(effects, rho, dec, tol)


def _cmd_analyze(args, tol: Tolerances, seed: int, warnings: list[str]) -> tuple[dict, int]:
    model = load_model(args.model, tol)
    theta = _resolve_theta(model, args.theta)
    bundle, dec, slds, fim, conditions = _analysis(model, theta, args.h, tol, seed, warnings)
    report = _analysis_sections(model, theta, bundle, dec, slds, fim, conditions, tol)
    if conditions.classification == SATURABLE_PROJECTIVE:
        code = EXIT_OK
    elif conditions.classification == UNDETERMINED:
        code = EXIT_UNDETERMINED
    else:
        code = EXIT_FAILED
    return report, code


def _cmd_construct(args, tol: Tolerances, seed: int, warnings: list[str]) -> tuple[dict, int]:
    model = load_model(args.model, tol)
    theta = _resolve_theta(model, args.theta)
    bundle, dec, slds, fim, conditions = _analysis(model, theta, args.h, tol, seed, warnings)
    report = _analysis_sections(model, theta, bundle, dec, slds, fim, conditions, tol)
    if conditions.classification != SATURABLE_PROJECTIVE:
        raise ConditionFailed(f"classification is {conditions.classification}; nothing to construct")
    povm = construct_optimal(slds, conditions.c4, tol, seed=seed)
    optimality = verify_optimality(povm, slds, dec, tol)
    saturation = saturation_check(povm, slds, bundle, tol)
    report["povm"] = {
        "n_effects": len(povm),
        "labels": list(povm.labels),
        "projective": povm.projective,
        "probabilities": _real_vector(outcome_probabilities(povm, bundle.rho)),
        "effects": [linalg.matrix_to_json(e) for e in povm.effects],
    }
    report["optimality"] = _optimality_json(optimality)
    report["saturation"] = _saturation_json(saturation)
    if args.out:
        Path(args.out).write_text(json.dumps(effects_to_json(povm), indent=2) + "\n", encoding="utf-8")
    code = EXIT_OK if (optimality.passed and saturation.passed) else EXIT_FAILED
    return report, code


def _cmd_verify(args, tol: Tolerances, seed: int, warnings: list[str]) -> tuple[dict, int]:
    model = load_model(args.model, tol)
    theta = _resolve_theta(model, args.theta)
    bundle, dec, slds, fim, conditions = _analysis(model, theta, args.h, tol, seed, warnings)
    report = _analysis_sections(model, theta, bundle, dec, slds, fim, conditions, tol)
    povm, flags = _load_povm_file(args.povm, bundle.rho, dec, tol)
    optimality = verify_optimality(povm, slds, dec, tol)
    saturation = saturation_check(povm, slds, bundle, tol)
    report["povm"] = {
        "n_effects": len(povm),
        "labels": list(povm.labels),
        "projective": povm.projective,
        "probabilities": _real_vector(outcome_probabilities(povm, bundle.rho)),
    }
    report["optimality"] = _optimality_json(optimality)
    report["saturation"] = _saturation_json(saturation)
    warnings.extend(flags)
    code = EXIT_OK if (optimality.passed and saturation.passed) else EXIT_FAILED
    return report, code


def _cmd_simulate(args, tol: Tolerances, seed: int, warnings: list[str]) -> tuple[dict, int]:
    model = load_model(args.model, tol)
    theta = _resolve_theta(model, args.theta)
    bundle = eval_bundle(model, theta, h=args.h, tol=tol)
    dec = blocks.decompose(bundle.rho, tol)
    povm, flags = _load_povm_file(args.povm, bundle.rho, dec, tol)
    report: dict = {
        "model": _model_json(model),
        "theta": _real_vector(theta),
    }
    warnings.extend(flags)
    if args.study:
        direction = np.ones(model.p) / math.sqrt(model.p)
        if args.direction is not None:
            direction = np.asarray(args.direction, dtype=float)
            norm = float(np.linalg.norm(direction))
            if norm == 0.0:
                raise QcrbError("--direction must be non-zero")
            direction = direction / norm
        magnitudes = [float(x) for x in args.study.split(",") if x]
        rows = fc_convergence_study(
            model, povm, theta, [m * direction for m in magnitudes], h=args.h, tol=tol
        )
        csv_path = args.csv or "fc_study.csv"
        Path(csv_path).write_text(study_csv(rows), encoding="utf-8")
        report["study"] = {
            "direction": _real_vector(direction),
            "rows": rows,
            "csv_path": csv_path,
        }
        return report, EXIT_OK
    delta = tuple(float(x) for x in (args.delta if args.delta is not None else []))
    config = SimConfig(seed=seed, N=args.N, R=args.R, delta=delta)
    result = run_trials(model, povm, theta, config, h=args.h, tol=tol)
    report["simulation"] = {
        "theta_sim": _real_vector(result.theta_sim),
        "N": result.N,
        "R": result.R,
        "seed": result.seed,
        "rel_err": result.rel_err,
        "emp_cov": _real_matrix(result.emp_cov),
        "pred_cov": _real_matrix(result.pred_cov),
        "mean_shift": _real_vector(result.mean_shift),
        "excluded_outcome_mass": result.excluded_outcome_mass,
    }
    return report, EXIT_OK


_COMMANDS = {
    "analyze": _cmd_analyze,
    "construct": _cmd_construct,
    "verify": _cmd_verify,
    "simulate": _cmd_simulate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qcrb", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, povm_file: bool = False):
        p.add_argument("model", help="model config JSON file")
        if povm_file:
            p.add_argument("povm", help="POVM JSON file")
        p.add_argument("--theta", type=float, nargs="+", help="working point (overrides the file)")
        p.add_argument("--h", type=float, default=None, help="finite-difference step")
        p.add_argument("--tol", action="append", default=[], metavar="NAME=VALUE",
                       help="tolerance override (repeatable)")
        p.add_argument("--seed", type=int, default=None,
                       help="seed (falls back to QCRB_SEED, then 0)")

    p_analyze = sub.add_parser("analyze", help="decomposition, SLDs, QFIM and condition checks")
    common(p_analyze)
    p_analyze.add_argument("--out", help="write the JSON report here instead of stdout")

    p_construct = sub.add_parser("construct", help="build the optimal projective POVM")
    common(p_construct)
    p_construct.add_argument("--out", help="write the POVM JSON file here")
    p_construct.add_argument("--report", help="write the JSON report here instead of stdout")

    p_verify = sub.add_parser("verify", help="verify a POVM against the optimality identities")
    common(p_verify, povm_file=True)
    p_verify.add_argument("--out", help="write the JSON report here instead of stdout")

    p_sim = sub.add_parser("simulate", help="Monte Carlo covariance versus the predicted bound")
    common(p_sim, povm_file=True)
    p_sim.add_argument("--N", type=int, default=1000, help="copies per trial")
    p_sim.add_argument("--R", type=int, default=2000, help="number of trials")
    p_sim.add_argument("--delta", type=float, nargs="+", help="displacement of the simulated point")
    p_sim.add_argument("--study", help="comma-separated magnitudes for the convergence study")
    p_sim.add_argument("--direction", type=float, nargs="+",
                       help="study displacement direction (default uniform)")
    p_sim.add_argument("--csv", help="CSV output path for the study (default fc_study.csv)")
    p_sim.add_argument("--out", help="write the JSON report here instead of stdout")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR

    try:
        overrides = parse_overrides(args.tol)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    tol = DEFAULT.replace(**overrides)
    seed = args.seed
    if seed is None:
        seed = int(os.environ.get("QCRB_SEED", "0"))

    base: dict = {
        "tool": {"name": "qcrb", "version": __version__},
        "command": args.command,
        "tolerances": tol.as_dict(),
        "warnings": [],
    }
    if args.h is not None:
        base["fd_step"] = float(args.h)

    out_path = getattr(args, "report", None) if args.command == "construct" else args.out
    try:
        sections, code = _COMMANDS[args.command](args, tol, seed, base["warnings"])
    except QcrbError as exc:
        code = _ERROR_EXIT.get(type(exc), EXIT_ERROR)
        base["error"] = {"type": type(exc).__name__, "message": str(exc)}
        base["exit_code"] = code
        _emit(base, out_path)
        return code
    base.update(sections)
    base["exit_code"] = code
    _emit(base, out_path)
    return code


if __name__ == "__main__":
    sys.exit(main())
