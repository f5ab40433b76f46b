"""Scene sweeps and result files.

File formats (UTF-8, comma-separated, header row, ``.`` as decimal point,
no thousands separators; floats written with ``repr`` so they read back
bit-for-bit):

* ``outcome.json``: structured result of a run, a sweep or a comparison.
* ``trace.csv``: one row per player per ADMM iteration with columns
  ``phase, m, n, k, player_id, quantity, shadow_price, weight,
  primal_res, dual_res``.
* ``comparison.csv``: ``mechanism, energy, cost, value, sw,
  budget_surplus``.
* ``audit.log``: one line per flow violation; empty on a clean run.
* ``messages.jsonl``: the bus log, one message per line.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .atc_coordinator import TRACE_COLUMNS, DadpParams, MarketOutcome, run_dadp
from .bus import write_log
from .errors import DadpError

logger = logging.getLogger(__name__)

COMPARISON_COLUMNS = ("mechanism", "energy", "cost", "value", "sw", "budget_surplus")
_TRACE_TYPES = (str, int, int, int, str, float, float, float, float, float)


@dataclass
class SweepReport:
    """Per-scene outcomes plus per-player series across scenes.

    ``series[player_id]`` maps ``"quote"``, ``"quantity"`` and ``"weight"``
    to lists aligned with ``scene_ids``; entries are None where the player
    is absent or the scene failed.
    """

    scene_ids: list
    outcomes: list
    errors: list
    series: dict


@dataclass
class RunArtifacts:
    outcomes: list = field(default_factory=list)
    comparison: Optional[list] = None
    violations: Optional[list] = None
    messages: Optional[list] = None
    sweep: Optional[SweepReport] = None


def run_scene_sweep(scenarios, params: DadpParams = DadpParams()) -> SweepReport:
    """Clear each scene independently; a failing scene is recorded and skipped."""
    scene_ids, outcomes, errors = [], [], []
    for sc in scenarios:
        scene_ids.append(sc.scene_id)
        try:
            outcomes.append(run_dadp(sc, params))
            errors.append(None)
        except DadpError as exc:
            logger.error("scene %s failed: %s", sc.scene_id, exc)
            outcomes.append(None)
            errors.append(f"{type(exc).__name__}: {exc}")
    players = []
    for sc in scenarios:
        for pid in [la.id for la in sc.las] + [e.id for e in sc.esps]:
            if pid not in players:
                players.append(pid)
    series = {pid: {"quote": [], "quantity": [], "weight": []} for pid in players}
    for out in outcomes:
        rows = {}
        if out is not None:
            for i, pid in enumerate(out.la_ids):
                rows[pid] = (out.bids[i], out.demands[i], out.p[i])
            for j, pid in enumerate(out.esp_ids):
                rows[pid] = (out.offers[j], out.supplies[j], out.q[j])
        for pid in players:
            quote, qty, weight = rows.get(pid, (None, None, None))
            series[pid]["quote"].append(None if quote is None else float(quote))
            series[pid]["quantity"].append(None if qty is None else float(qty))
            series[pid]["weight"].append(None if weight is None else float(weight))
    return SweepReport(scene_ids, outcomes, errors, series)


def _clean(val):
    if isinstance(val, np.ndarray):
        return [_clean(v) for v in val.tolist()]
    if isinstance(val, (list, tuple)):
        return [_clean(v) for v in val]
    if isinstance(val, dict):
        return {k: _clean(v) for k, v in val.items()}
    if isinstance(val, (np.floating, float)):
        f = float(val)
        return f if math.isfinite(f) else None
    if isinstance(val, np.integer):
        return int(val)
    return val


def outcome_to_dict(out: MarketOutcome) -> dict:
    las = [{"id": pid, "demand": out.demands[i], "bid": out.bids[i], "weight": out.p[i],
            "shadow_price": out.demand_prices[i], "payment": out.la_payments[i],
            "utility": out.la_utilities[i]} for i, pid in enumerate(out.la_ids)]
    esps = [{"id": pid, "supply": out.supplies[j], "offer": out.offers[j], "weight": out.q[j],
             "shadow_price": out.supply_prices[j], "revenue": out.esp_revenues[j],
             "utility": out.esp_utilities[j]} for j, pid in enumerate(out.esp_ids)]
    return _clean({
        "scene_id": out.scene_id, "market_kind": out.market_kind, "converged": out.converged,
        "iterations": {"outer": out.outer_iterations, "weight_rounds": out.weight_rounds,
                       "inner": out.inner_iterations,
                       "max_inner_per_run": out.max_inner_iterations},
        "totals": {"demand": out.total_demand, "supply": out.total_supply,
                   "mismatch": out.mismatch, "value": out.value, "cost": out.cost,
                   "sw": out.sw, "la_payments": math.fsum(out.la_payments),
                   "esp_revenues": math.fsum(out.esp_revenues),
                   "budget_surplus": out.budget_surplus},
        "clearing": {"mu": out.mu, "omega": out.omega,
                     "total_supply_target": out.total_supply_target,
                     "total_demand_target": out.total_demand_target},
        "las": las, "esps": esps, "atc_history": out.atc_history,
    })


def report_to_dict(rep) -> dict:
    return _clean({
        "mechanism": rep.mechanism, "energy": rep.energy, "cost": rep.cost,
        "value": rep.value, "sw": rep.sw, "budget_surplus": rep.budget_surplus,
        "price": rep.price, "converged": rep.converged, "notes": rep.notes,
        "error": rep.error,
        "las": [{"id": pid, "demand": rep.demands[i], "payment": rep.la_payments[i]}
                for i, pid in enumerate(rep.la_ids)],
        "esps": [{"id": pid, "supply": rep.supplies[j], "revenue": rep.esp_revenues[j]}
                 for j, pid in enumerate(rep.esp_ids)],
    })


def _cell(val):
    return repr(float(val)) if isinstance(val, (float, np.floating)) else str(val)


def write_trace_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def read_trace_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != TRACE_COLUMNS:
            raise ValueError(f"{path}: unexpected header {header}")
        return [tuple(t(v) for t, v in zip(_TRACE_TYPES, row)) for row in reader]


def write_comparison_csv(reports, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(COMPARISON_COLUMNS)
        for rep in reports:
            writer.writerow([rep.mechanism] + [_cell(getattr(rep, c)) for c in COMPARISON_COLUMNS[1:]])


def read_comparison_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return [{k: (v if k == "mechanism" else float(v)) for k, v in row.items()}
                for row in reader]


def write_audit_log(violations, path):
    with open(path, "w", encoding="utf-8") as fh:
        for v in violations:
            fh.write(str(v) + "\n")


def _safe_name(text):
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in str(text)) or "scene"


def emit_outputs(results: RunArtifacts, out_dir) -> dict:
    """Write every artifact present in ``results``; returns name -> path.

    Raises:
        OSError: with the offending path in its message.
    """
    written = {}

    def target(name):
        return os.path.join(out_dir, name)

    try:
        os.makedirs(out_dir, exist_ok=True)
        doc = {}
        if results.sweep is not None:
            sw = results.sweep
            doc["scenes"] = [
                {"scene_id": sid, "error": err,
                 "outcome": None if out is None else outcome_to_dict(out)}
                for sid, out, err in zip(sw.scene_ids, sw.outcomes, sw.errors)]
            doc["series"] = _clean(sw.series)
            for sid, out in zip(sw.scene_ids, sw.outcomes):
                if out is not None and out.trace:
                    path = target(f"trace_{_safe_name(sid)}.csv")
                    write_trace_csv(out.trace, path)
                    written[f"trace_{sid}"] = path
        elif len(results.outcomes) == 1:
            doc = outcome_to_dict(results.outcomes[0])
        elif results.outcomes:
            doc["outcomes"] = [outcome_to_dict(o) for o in results.outcomes]
        if results.comparison is not None:
            doc["comparison"] = [report_to_dict(r) for r in results.comparison]
            path = target("comparison.csv")
            write_comparison_csv(results.comparison, path)
            written["comparison"] = path
        if results.sweep is None:
            rows = [row for o in results.outcomes for row in o.trace]
            if results.outcomes:
                path = target("trace.csv")
                write_trace_csv(rows, path)
                written["trace"] = path
        path = target("outcome.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
        written["outcome"] = path
        if results.violations is not None:
            path = target("audit.log")
            write_audit_log(results.violations, path)
            written["audit"] = path
        if results.messages is not None:
            path = target("messages.jsonl")
            write_log(results.messages, path)
            written["messages"] = path
    except OSError as exc:
        raise OSError(f"cannot write outputs to {exc.filename or out_dir}: {exc.strerror}") from exc
    return written
