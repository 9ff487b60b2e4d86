"""Command-line front end.

    kelly-riskcal solve    --input market.json --lambda 2
    kelly-riskcal sweep    --input market.json --lambda-grid 1,2,3 --format csv
    kelly-riskcal classify --input market.json

Market files are JSON objects ``{"p": [...], "q": [...]}`` with an optional
``"labels"`` list.  ``audit`` additionally reads an ``"allocation"`` object
with ``"c"`` and ``"x"``, so the JSON written by ``solve`` can be fed back in.

Exit status: 0 success, 1 unreadable input, 2 model error, 3 convergence failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import crra, fairbench, logcal, oracle
from .errors import ConvergenceFailure, KellyError, ModelError, NonUniquePrefix, NoPrefix
from .market import Allocation, Market, Regime, SortedMarket, sort_market, validate

log = logging.getLogger("kelly_riskcal")

COMMANDS = ("solve", "kelly", "crra", "sweep", "oracle", "audit", "classify")
EXIT_OK, EXIT_PARSE, EXIT_MODEL, EXIT_CONVERGENCE = 0, 1, 2, 3
SUBFAIR_NOTE = "regime: Subfair — solver not applicable; see documentation"


class ParseError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    input_path: str
    gamma: Optional[float] = None
    lam: Optional[float] = None
    lambda_grid: Optional[list] = None
    format: str = "text"
    tol_outer: float = logcal.TOL_OUTER
    tol_inner: float = logcal.TOL_INNER
    resolution: int = 50
    output: Optional[str] = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ParseError(f"unknown command {self.command!r}")
        if self.format not in ("text", "json", "csv"):
            raise ParseError(f"unknown format {self.format!r}")
        for name in ("gamma", "lam", "tol_outer", "tol_inner"):
            v = getattr(self, name)
            if v is not None and not (math.isfinite(v) and v > 0):
                raise ParseError(f"{name} must be positive, got {v!r}")
        if self.lambda_grid is not None:
            if not self.lambda_grid or any(not (math.isfinite(v) and v > 0) for v in self.lambda_grid):
                raise ParseError("lambda grid needs positive entries")
        if self.command == "sweep" and not self.lambda_grid:
            raise ParseError("sweep requires --lambda-grid")


def _num(v):
    """Ten significant digits for machine-readable output."""
    if v is None:
        return None
    v = float(v)
    if not math.isfinite(v):
        return str(v)
    return float(f"{v:.10g}")


def _fmt(v) -> str:
    return f"{v:.4f}"


def load_input(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("market file must hold a JSON object")
    src = doc.get("market", doc)
    for key in ("p", "q"):
        vals = src.get(key)
        if not isinstance(vals, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals
        ):
            raise ParseError(f"key {key!r} must be an array of numbers")
    labels = doc.get("labels", src.get("labels"))
    if labels is not None and (not isinstance(labels, list) or len(labels) != len(src["p"])):
        raise ParseError("labels must be an array with one entry per outcome")
    return {"p": src["p"], "q": src["q"], "labels": labels, "doc": doc}


def _alloc_dict(a: Allocation) -> dict:
    return {
        "c": _num(a.c),
        "x": [_num(v) for v in a.x],
        "W": [_num(v) for v in a.W],
        "objective": _num(a.objective),
        "risk": _num(a.risk),
    }


def _vector_text(values, labels) -> str:
    if labels:
        return ", ".join(f"{lab}={_fmt(v)}" for lab, v in zip(labels, values))
    return " ".join(_fmt(v) for v in values)


# residual sizes read better in scientific notation
_SCI_KEYS = ("max_residual", "budget_residual", "grid_gap")


def _text_lines(rec: dict, labels) -> list:
    lines = []
    for key, value in rec.items():
        if key in ("p", "q", "labels", "command", "market"):
            continue
        if key == "allocation":
            a = value
            lines.append(f"c*: {_fmt(a['c'])}")
            lines.append(f"x*: {_vector_text(a['x'], labels)}")
            lines.append(f"W*: {_vector_text(a['W'], labels)}")
            lines.append(f"objective: {_fmt(a['objective'])}")
            if a["risk"] is not None:
                lines.append(f"risk: {_fmt(a['risk'])}")
        elif isinstance(value, bool):
            lines.append(f"{key}: {'true' if value else 'false'}")
        elif key in _SCI_KEYS and isinstance(value, float):
            lines.append(f"{key}: {value:.3e}")
        elif isinstance(value, float):
            lines.append(f"{key}: {_fmt(value)}")
        elif isinstance(value, list):
            lines.append(f"{key}: {_vector_text(value, None) if value and isinstance(value[0], float) else value}")
        elif value is not None:
            lines.append(f"{key}: {value}")
    return lines


def csv_header(n: int) -> list:
    return ["lambda", "binding", "s_star", "c", "risk", "objective"] + [f"x_{i + 1}" for i in range(n)]


def _csv_row(lam, res: Optional[logcal.CalibrationResult], n: int) -> list:
    if res is None:
        return [_num(lam), "error"] + [""] * (4 + n)
    a = res.allocation
    return [
        _num(lam),
        "true" if res.binding else "false",
        _num(res.s_star),
        _num(a.c),
        _num(a.risk),
        _num(a.objective),
    ] + [_num(v) for v in a.x]


def _render_csv(rows, n) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(csv_header(n))
    w.writerows(rows)
    return buf.getvalue()


def _base_record(cfg: RunConfig, m: Market, sm: SortedMarket, labels) -> dict:
    rec = {"command": cfg.command, "p": [_num(v) for v in m.p], "q": [_num(v) for v in m.q]}
    if labels:
        rec["labels"] = labels
    rec["regime"] = sm.regime.value
    return rec


def _calibration_record(res: logcal.CalibrationResult, gamma: float = 1.0) -> dict:
    sel = res.selection
    return {
        "gamma": gamma,
        "lambda": _num(res.lam),
        "k*": sel.k_star if sel else 0,
        "tau*": _num(sel.tau_star) if sel else None,
        "R(0)": _num(res.R0),
        "all_cash": res.all_cash,
        "binding": res.binding,
        "s*": _num(res.s_star),
        "z*": [_num(v) for v in res.z_star] if sel else [],
        "eta*": _num(res.eta_star),
        "nu*": _num(res.nu_star),
        "allocation": _alloc_dict(res.allocation),
    }


def _solve(cfg, m, sm, rec):
    lam = cfg.lam if cfg.lam is not None else 1.0
    if sm.regime is Regime.SUBFAIR:
        raise ModelError("Subfair regime: solver not applicable; see documentation")
    if sm.regime is Regime.FAIR:
        if lam <= 1.0:
            sol = fairbench.FairSolution(W=fairbench.fair_kelly(sm), eta=0.0, nu=1.0, feasible_at_kelly=True)
        else:
            sol = fairbench.fair_constrained_solve(sm, lam)
        rec.update(
            {
                "gamma": 1.0,
                "lambda": _num(lam),
                "binding": not sol.feasible_at_kelly,
                "eta*": _num(sol.eta),
                "nu*": _num(sol.nu),
                "allocation": _alloc_dict(sol.to_allocation(sm, lam)),
            }
        )
        return rec, None
    res = logcal.solve(sm, lam, tol_inner=cfg.tol_inner, tol_outer=cfg.tol_outer)
    rec.update(_calibration_record(res))
    return rec, [_csv_row(lam, res, m.n)]


def _unconstrained(cfg, m, sm, rec, gamma):
    if sm.regime is not Regime.OVERROUND:
        raise ModelError(f"{sm.regime.value} regime: prefix formulas need an overround market")
    lam = cfg.lam
    sol = crra.optimal_unconstrained(sm, gamma, lam)
    rec.update(
        {
            "gamma": _num(gamma),
            "lambda": _num(lam),
            "all_cash": sol.all_cash,
            "k*": sol.selection.k_star if sol.selection else 0,
            "tau*": _num(sol.selection.tau_star) if sol.selection else None,
            "allocation": _alloc_dict(sol.allocation),
        }
    )
    return rec, None


def _sweep(cfg, m, sm, rec):
    if sm.regime is not Regime.OVERROUND:
        raise ModelError(f"{sm.regime.value} regime: sweep needs an overround market")
    tols = {"tol_inner": cfg.tol_inner, "tol_outer": cfg.tol_outer}
    try:
        sel = crra.find_prefix(sm)
        entries = logcal.sweep(sel, sm, cfg.lambda_grid, **tols)
    except NoPrefix as exc:
        if not exc.all_cash:
            raise
        entries = []
        for lam in cfg.lambda_grid:
            try:
                entries.append(logcal.SweepEntry(lam, logcal.solve(sm, lam, **tols)))
            except KellyError as err:
                entries.append(logcal.SweepEntry(lam, None, err))
    rows, items, worst = [], [], EXIT_OK
    for e in entries:
        rows.append(_csv_row(e.lam, e.result, m.n))
        if e.error is not None:
            worst = max(worst, EXIT_CONVERGENCE if isinstance(e.error, ConvergenceFailure) else EXIT_MODEL)
            items.append({"lambda": _num(e.lam), "error": str(e.error)})
        else:
            items.append(_calibration_record(e.result))
    rec["entries"] = items
    rec["_exit"] = worst
    return rec, rows


def _oracle(cfg, m, sm, rec):
    gamma = cfg.gamma if cfg.gamma is not None else 1.0
    res = oracle.brute_force_solve(m, gamma, cfg.lam if cfg.lam is not None else 1.0, cfg.resolution)
    rec.update(
        {
            "gamma": _num(gamma),
            "lambda": _num(cfg.lam if cfg.lam is not None else 1.0),
            "support": [i + 1 for i in res.support],
            "eta": _num(res.eta),
            "nu": _num(res.nu),
            "grid_gap": _num(res.grid_best_gap),
            "allocation": _alloc_dict(res.allocation),
        }
    )
    return rec, None


def _audit(cfg, m, sm, rec, doc):
    a = doc.get("allocation")
    if not isinstance(a, dict) or "c" not in a or "x" not in a:
        raise ParseError("audit input needs an 'allocation' object with 'c' and 'x'")
    try:
        c = float(a["c"])
        x = np.array([float(v) for v in a["x"]])
    except (TypeError, ValueError) as exc:
        raise ParseError(f"allocation entries must be numbers: {exc}") from exc
    if x.size != m.n:
        raise ParseError("allocation stake vector has the wrong length")
    gamma = cfg.gamma if cfg.gamma is not None else float(doc.get("gamma", 1.0))
    lam = cfg.lam if cfg.lam is not None else float(doc.get("lambda", 1.0))
    from .market import make_allocation

    alloc = make_allocation(m, c, x, gamma=gamma, lam=lam)
    if np.any(alloc.W <= 0):
        raise ModelError("allocation has non-positive wealth in some outcome")
    rep = oracle.audit_kkt(m, gamma, lam, alloc)
    rec.update(
        {
            "gamma": _num(gamma),
            "lambda": _num(lam),
            "status": "PASS" if rep.passed else "FAIL",
            "feasible": rep.feasible,
            "max_residual": float(f"{rep.max_residual:.3e}"),
            "nu": _num(rep.nu),
            "eta": _num(rep.eta),
            "rho": _num(rep.rho),
            "risk": _num(alloc.risk),
            "budget_residual": float(f"{rep.primal_residuals['budget']:.3e}"),
        }
    )
    return rec, None


def _classify(cfg, m, sm, rec):
    rec["Q_n"] = _num(sm.Q[-1])
    rec["L"] = [_num(v) for v in sm.L]
    if sm.regime is Regime.SUBFAIR:
        rec["note"] = "solver not applicable; see documentation"
        return rec, None
    if sm.regime is Regime.FAIR:
        rec["prefix"] = "not applicable (fair market: full-support Kelly benchmark)"
        return rec, None
    try:
        sel = crra.find_prefix(sm)
        rec["prefix"] = "unique"
        rec["k*"] = sel.k_star
        rec["tau*"] = _num(sel.tau_star)
        rec["active"] = [int(i) + 1 for i in sm.perm[: sel.k_star]]
    except NoPrefix as exc:
        rec["prefix"] = "none (all cash is optimal)" if exc.all_cash else "none"
    except NonUniquePrefix as exc:
        rec["prefix"] = f"non-unique {list(exc.candidates)}"
    return rec, None


def run(cfg: RunConfig) -> tuple:
    """Execute one command; returns (exit status, rendered output)."""
    try:
        data = load_input(cfg.input_path)
    except ParseError as exc:
        return EXIT_PARSE, f"error: {exc}\n"
    labels = data["labels"]
    try:
        m = validate(data["p"], data["q"])
        sm = sort_market(m)
        rec = _base_record(cfg, m, sm, labels)
        if cfg.command == "solve":
            rec, rows = _solve(cfg, m, sm, rec)
        elif cfg.command == "kelly":
            rec, rows = _unconstrained(cfg, m, sm, rec, 1.0)
        elif cfg.command == "crra":
            rec, rows = _unconstrained(cfg, m, sm, rec, cfg.gamma if cfg.gamma is not None else 1.0)
        elif cfg.command == "sweep":
            rec, rows = _sweep(cfg, m, sm, rec)
        elif cfg.command == "oracle":
            rec, rows = _oracle(cfg, m, sm, rec)
        elif cfg.command == "audit":
            rec, rows = _audit(cfg, m, sm, rec, data["doc"])
        else:
            rec, rows = _classify(cfg, m, sm, rec)
    except ParseError as exc:
        return EXIT_PARSE, f"error: {exc}\n"
    except ConvergenceFailure as exc:
        return EXIT_CONVERGENCE, f"error: ConvergenceFailure: {exc}\n"
    except ModelError as exc:
        return EXIT_MODEL, f"error: {type(exc).__name__}: {exc}\n"

    status = rec.pop("_exit", EXIT_OK)
    if cfg.format == "json":
        return status, json.dumps(rec, indent=2, ensure_ascii=False) + "\n"
    if cfg.format == "csv":
        if rows is None:
            return EXIT_PARSE, "error: --format csv is only available for solve and sweep\n"
        return status, _render_csv(rows, m.n)
    if cfg.command == "classify" and sm.regime is Regime.SUBFAIR:
        return status, SUBFAIR_NOTE + "\n"
    if cfg.command == "sweep":
        out = [f"regime: {rec['regime']}"]
        out.append("  ".join(f"{h:>10}" for h in csv_header(m.n)))
        for r in rows:
            out.append("  ".join(f"{_fmt(v) if isinstance(v, float) else v:>10}" for v in r))
        for e in rec["entries"]:
            if "error" in e:
                out.append(f"lambda={e['lambda']}: {e['error']}")
        return status, "\n".join(out) + "\n"
    return status, "\n".join(_text_lines(rec, labels)) + "\n"


def _grid(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad lambda grid {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kelly-riskcal", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--input", required=True, metavar="PATH")
        p.add_argument("--gamma", type=float)
        p.add_argument("--lambda", dest="lam", type=float)
        p.add_argument("--lambda-grid", type=_grid)
        p.add_argument("--format", choices=("text", "json", "csv"), default="text")
        p.add_argument("--tol-outer", type=float, default=logcal.TOL_OUTER)
        p.add_argument("--tol-inner", type=float, default=logcal.TOL_INNER)
        p.add_argument("--resolution", type=int, default=50)
        p.add_argument("--output", metavar="PATH", help="write results here instead of stdout")
    return parser


def _setup_logging() -> None:
    level = os.environ.get("KELLY_RISKCAL_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    try:
        cfg = RunConfig(
            command=args.command,
            input_path=args.input,
            gamma=args.gamma,
            lam=args.lam,
            lambda_grid=args.lambda_grid,
            format=args.format,
            tol_outer=args.tol_outer,
            tol_inner=args.tol_inner,
            resolution=args.resolution,
            output=args.output,
        )
    except ParseError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_PARSE
    status, text = run(cfg)
    stream = sys.stderr if status not in (EXIT_OK,) and text.startswith("error:") else sys.stdout
    if cfg.output and stream is sys.stdout:
        with open(cfg.output, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        stream.write(text)
    return status


if __name__ == "__main__":
    sys.exit(main())
