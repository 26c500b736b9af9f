"""Structured run reports with a stable serialisation for golden tests.

Every residual is reported together with the sample point that achieved it,
so failures come with a usable witness.  Floats are rounded to eight
significant digits before serialisation to keep golden files stable.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .charts import HKReport, VerificationReport
from .structure import Corollary15Report, Theorem13Report

__all__ = ["REPORT_VERSION", "report_to_dict", "render_report",
           "theorem13_to_dict", "corollary15_to_dict", "hk_to_dict",
           "verification_to_dict"]

REPORT_VERSION = 1


def _round(value):
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if not math.isfinite(v):
            return repr(v)
        if v == 0.0:
            return 0.0
        return float(f"{v:.8g}")
    if isinstance(value, (int, np.integer, bool, str)) or value is None:
        return value if not isinstance(value, np.integer) else int(value)
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_round(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _round(v) for k, v in value.items()}
    return str(value)


def theorem13_to_dict(rep: Theorem13Report) -> dict:
    c1, c2, c3 = rep.condition_flags()
    out = {
        "constant_invariant_factors": {
            "pass": c1,
            "ranks": list(rep.constancy.ranks or ()),
            "multiplicities": list(rep.profile.multiplicities) if rep.profile else None,
            "witness": _round(rep.constancy.witness),
        },
        "nijenhuis_zero": {
            "pass": c2,
            "max_residual": _round(rep.torsion.max_residual),
            "tol": _round(rep.torsion.tol),
            "witness_point": _round(rep.torsion.witness_point),
            "witness_pair": _round(rep.torsion.witness_pair),
        },
        "kernel_involutivity": {
            "pass": c3,
            "per_power": [
                {
                    "p": p,
                    "involutive": bool(r),
                    "max_residual": _round(r.max_residual),
                    "threshold": _round(r.threshold),
                    "witness_point": _round(r.witness_point),
                    "witness_pair": _round(r.witness_pair),
                }
                for p, r in rep.kernel_involutivity
            ],
        },
        "integrable": rep.integrable,
    }
    return out


def corollary15_to_dict(rep: Corollary15Report) -> dict:
    return {
        "factor_ranks": [
            {"coefficients": list(c), "rank": r, "constant": bool(flag)}
            for c, r, flag in rep.factor_ranks
        ],
        "nijenhuis_zero": {
            "pass": rep.torsion.passed,
            "max_residual": _round(rep.torsion.max_residual),
            "tol": _round(rep.torsion.tol),
            "witness_point": _round(rep.torsion.witness_point),
        },
        "factor_involutivity": [
            {
                "coefficients": list(c),
                "involutive": bool(r),
                "max_residual": _round(r.max_residual),
                "threshold": _round(r.threshold),
            }
            for c, r in rep.factor_involutivity
        ],
        "conditions_pass": rep.integrable_conditions,
    }


def hk_to_dict(rep: HKReport) -> dict:
    return {
        "k": rep.k,
        "pass": rep.passed,
        "clauses": {
            c.clause: {
                "max_residual": _round(c.max_residual),
                "tol": _round(c.tol),
                "witness": _round(c.witness),
                "pass": c.passed,
            }
            for c in rep.clauses
        },
    }


def verification_to_dict(rep: VerificationReport) -> dict:
    return {
        "grid": rep.grid,
        "jordan_matrix": _round(rep.jordan),
        "max_deviation": _round(rep.max_deviation),
        "max_frame_bracket": _round(rep.max_bracket),
        "deviation_witness": _round(rep.deviation_witness),
        "pass": rep.passed,
    }


def report_to_dict(kind: str, field_info: dict, settings: dict,
                   conditions: dict | None = None,
                   induction: list | None = None,
                   verification: dict | None = None,
                   overall_pass: bool | None = None,
                   error: str | None = None) -> dict:
    out = {
        "version": REPORT_VERSION,
        "kind": kind,
        "field": _round(field_info),
        "settings": _round(settings),
    }
    if conditions is not None:
        out["conditions"] = conditions
    if induction is not None:
        out["induction"] = induction
    if verification is not None:
        out["verification"] = verification
    if error is not None:
        out["error"] = error
    if overall_pass is not None:
        out["overall"] = {"pass": overall_pass,
                          "exit_code": 0 if overall_pass else 2}
    return out


def render_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)
