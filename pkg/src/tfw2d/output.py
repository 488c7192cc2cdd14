"""Deterministic CSV/JSON writers for solver and study results.

Numbers are written with 17 significant digits and LF line endings; run
timestamps go to a separate ``metadata.json`` so the data files of two runs
with the same configuration are byte-identical.
"""
from __future__ import annotations

import json
import math
import platform
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .homogenization import HomogenizationReport
from .solver import ScfResult, el_residual


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _json_number(x):
    if isinstance(x, (int, np.integer)):
        return int(x)
    x = float(x)
    return x if math.isfinite(x) else str(x)


def write_csv(path: Path, header, rows) -> Path:
    lines = [",".join(header)]
    lines += [",".join(fmt(v) if not isinstance(v, str) else v for v in row) for row in rows]
    path.write_bytes(("\n".join(lines) + "\n").encode("ascii"))
    return path


def write_json(path: Path, obj) -> Path:
    text = json.dumps(obj, indent=2, sort_keys=False)
    path.write_bytes((text + "\n").encode("ascii"))
    return path


def scf_quantities(result: ScfResult, residual: float) -> dict:
    return {
        "energy": {k: float(v) for k, v in result.energy.as_dict().items()},
        "lambda": float(result.lam),
        "iterations": int(result.iterations),
        "el_residual": float(residual),
        "total_charge": float(result.total_charge),
        "max_charge_drift": float(max(result.charge_drift, default=0.0)),
        "residual_trace": [float(r) for r in result.residual_trace],
    }


def write_scf_result(out_dir: Path, result: ScfResult, residual: float, fmt_name: str = "csv",
                     dump_density: bool = False) -> list[Path]:
    """scf_result.{csv,json}, density.csv and optionally density.npy."""
    out_dir.mkdir(parents=True, exist_ok=True)
    q = scf_quantities(result, residual)
    written = []
    if fmt_name == "json":
        obj = {k: (v if k != "residual_trace" else [_json_number(r) for r in v]) for k, v in q.items()}
        written.append(write_json(out_dir / "scf_result.json", obj))
    else:
        rows = [(f"energy_{k}", v) for k, v in q["energy"].items()]
        rows += [(k, q[k]) for k in ("lambda", "iterations", "el_residual", "total_charge",
                                     "max_charge_drift")]
        rows += [(f"residual_trace.{i}", r) for i, r in enumerate(q["residual_trace"], start=1)]
        written.append(write_csv(out_dir / "scf_result.csv", ("quantity", "value"), rows))
    x3 = result.grid.axes[2]
    profile = result.rho.x3_profile()
    written.append(write_csv(out_dir / "density.csv", ("x3", "rho_mean"), zip(x3, profile)))
    if dump_density:
        path = out_dir / "density.npy"
        np.save(path, np.ascontiguousarray(result.rho.values))
        written.append(path)
    return written


REPORT_HEADER = ("N", "I_N", "err_L1", "err_L2", "err_Linf", "err_grad_L2", "iterations", "residual")
RATES_HEADER = ("quantity", "slope", "intercept", "r_squared")


def report_rows(report: HomogenizationReport) -> list[tuple]:
    rows = []
    for pt in report.per_n:
        rows.append((pt.n, pt.energy, pt.errors.get("L1", math.nan), pt.errors.get("L2", math.nan),
                     pt.errors.get("Linf", math.nan), pt.grad_error, pt.iterations, pt.el_residual))
    ref = report.reference
    ref_res = el_residual(ref) if ref is not None else math.nan
    ref_it = ref.iterations if ref is not None else 0
    rows.append((0, report.i0, 0.0, 0.0, 0.0, 0.0, ref_it, ref_res))
    return rows


def write_homogenization(out_dir: Path, report: HomogenizationReport,
                         fmt_name: str = "csv") -> list[Path]:
    """homog_report and rates files; the trailing N = 0 row is the 1D reference."""
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = report_rows(report)
    rates = [(name, r.slope, r.intercept, r.r_squared) for name, r in report.fitted_rates.items()]
    if fmt_name == "json":
        report_obj = {
            "rows": [dict(zip(REPORT_HEADER, map(_json_number, row))) for row in rows],
            "complete": report.complete,
            "failure": report.failure,
        }
        rates_obj = {
            name: dict(zip(RATES_HEADER[1:], map(_json_number, vals)))
            for name, *vals in rates
        }
        return [write_json(out_dir / "homog_report.json", report_obj),
                write_json(out_dir / "rates.json", rates_obj)]
    return [write_csv(out_dir / "homog_report.csv", REPORT_HEADER, rows),
            write_csv(out_dir / "rates.csv", RATES_HEADER, rates)]


def write_metadata(out_dir: Path, command: str, config: dict, status: str) -> Path:
    """Sidecar with the run timestamp, environment and resolved configuration."""
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = {
        "command": command,
        "status": status,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "config": config,
    }
    return write_json(out_dir / "metadata.json", meta)
