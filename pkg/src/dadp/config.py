"""TOML scenario files.

Layout::

    [market]
    kind = "electricity"        # or "heat" ("power" is accepted too)
    scene_id = "S1"

    [[las]]
    id = "LA1"
    alpha = 30.0
    beta = 0.5
    d_min = 0.0                 # optional
    [las.thermal]               # required in heat markets
    R = 2.0
    C = 1.0
    T_in_min = 19.0
    T_in_max = 23.0
    T_in_current = 20.0
    T_out = 5.0
    dt = 1.0

    [[esps]]
    id = "ESP1"
    m = 0.2
    n = 2.0
    s_max = 30.0

    [algorithm]                 # every key optional
    rho = 1.0

A sweep file has the same ``[market]``, ``[[las]]``, ``[[esps]]`` and
``[algorithm]`` tables holding the full player pool, plus ``[[scenes]]``
entries with ``id``, ``las`` and ``esps`` lists of player ids.
"""
from __future__ import annotations

import math
import re
import sys
from dataclasses import fields as dc_fields

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .admm_bidding import AdmmParams
from .atc_coordinator import DadpParams
from .errors import ConfigError, DomainError, ScenarioValidationError
from .market_model import (
    EnergyServiceProvider,
    LoadAggregator,
    MarketKind,
    Scenario,
    ThermalEnvelope,
)

ADMM_KEYS = {f.name for f in dc_fields(AdmmParams)}
DADP_KEYS = {f.name for f in dc_fields(DadpParams)} - {"admm"}
THERMAL_KEYS = {f.name for f in dc_fields(ThermalEnvelope)}


def _read(path):
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read file: {exc}", path=path) from exc
    except tomllib.TOMLDecodeError as exc:
        match = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"{path}: parse error: {exc}", path=path,
                          line=int(match.group(1)) if match else None) from exc


def _number(table, key, where, path, default=None):
    if key not in table:
        if default is not None:
            return default
        raise ConfigError(f"{path}: {where}.{key} is missing", path=path, field=f"{where}.{key}")
    val = table[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{path}: {where}.{key} must be a number, got {val!r}",
                          path=path, field=f"{where}.{key}")
    return float(val)


def _check_keys(table, allowed, where, path):
    extra = set(table) - set(allowed)
    if extra:
        name = sorted(extra)[0]
        raise ConfigError(f"{path}: unknown field {where}.{name}", path=path,
                          field=f"{where}.{name}")


def _parse_la(entry, idx, path):
    where = f"las[{idx}]"
    _check_keys(entry, {"id", "alpha", "beta", "d_min", "thermal"}, where, path)
    if "id" not in entry:
        raise ConfigError(f"{path}: {where}.id is missing", path=path, field=f"{where}.id")
    thermal = None
    if "thermal" in entry:
        tab = entry["thermal"]
        _check_keys(tab, THERMAL_KEYS, f"{where}.thermal", path)
        kwargs = {k: _number(tab, k, f"{where}.thermal", path,
                             default=1.0 if k == "dt" else None) for k in THERMAL_KEYS}
        thermal = ThermalEnvelope(**kwargs)
    return LoadAggregator(str(entry["id"]), _number(entry, "alpha", where, path),
                          _number(entry, "beta", where, path),
                          _number(entry, "d_min", where, path, default=0.0), thermal)


def _parse_esp(entry, idx, path):
    where = f"esps[{idx}]"
    _check_keys(entry, {"id", "m", "n", "s_max"}, where, path)
    if "id" not in entry:
        raise ConfigError(f"{path}: {where}.id is missing", path=path, field=f"{where}.id")
    return EnergyServiceProvider(str(entry["id"]), _number(entry, "m", where, path),
                                 _number(entry, "n", where, path),
                                 _number(entry, "s_max", where, path))


def parse_params(table, path="<config>") -> DadpParams:
    """Algorithm settings; absent keys keep their defaults."""
    _check_keys(table, ADMM_KEYS | DADP_KEYS, "algorithm", path)
    admm_kw = {k: table[k] for k in ADMM_KEYS if k in table}
    dadp_kw = {k: table[k] for k in DADP_KEYS if k in table}
    try:
        return DadpParams(admm=AdmmParams(**admm_kw), **dadp_kw)
    except (DomainError, TypeError) as exc:
        raise ConfigError(f"{path}: algorithm: {exc}", path=path, field="algorithm") from exc


def _players(data, path):
    las = [_parse_la(e, i, path) for i, e in enumerate(data.get("las", []))]
    esps = [_parse_esp(e, j, path) for j, e in enumerate(data.get("esps", []))]
    return las, esps


def _market(data, path, market=None):
    table = data.get("market", {})
    try:
        kind = MarketKind.parse(market or table.get("kind", "electricity"))
    except ValueError as exc:
        raise ConfigError(f"{path}: market.kind: {exc}", path=path, field="market.kind") from exc
    return kind, str(table.get("scene_id", ""))


def load_scenario(path, market=None):
    """Read and validate one scenario.

    Args:
        path: TOML file.
        market: optional override of ``market.kind``.

    Returns:
        ``(Scenario, DadpParams)``.

    Raises:
        ConfigError: unreadable file, TOML syntax error (with line) or a bad
            field (with its dotted path).
        ScenarioValidationError: a structural invariant fails; the
            ``constraint`` attribute names it.
    """
    data = _read(path)
    kind, scene_id = _market(data, path, market)
    las, esps = _players(data, path)
    scenario = Scenario(kind, las, esps, scene_id).validate()
    return scenario, parse_params(data.get("algorithm", {}), path)


def load_sweep(path, market=None):
    """Read a player pool and its scene list; returns ``(scenes, params)``."""
    data = _read(path)
    kind, _ = _market(data, path, market)
    las, esps = _players(data, path)
    by_la = {la.id: la for la in las}
    by_esp = {e.id: e for e in esps}
    scenes = []
    for idx, entry in enumerate(data.get("scenes", [])):
        where = f"scenes[{idx}]"
        try:
            chosen_las = [by_la[i] for i in entry.get("las", by_la)]
            chosen_esps = [by_esp[j] for j in entry.get("esps", by_esp)]
        except KeyError as exc:
            raise ConfigError(f"{path}: {where} names unknown player {exc}", path=path,
                              field=where) from exc
        scenes.append(Scenario(kind, chosen_las, chosen_esps, str(entry.get("id", idx + 1))))
    if not scenes:
        raise ConfigError(f"{path}: no [[scenes]] entries", path=path, field="scenes")
    return scenes, parse_params(data.get("algorithm", {}), path)


def _fmt(val):
    if isinstance(val, str):
        return '"' + val.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, float) and not math.isfinite(val):
        return "inf" if val > 0 else "-inf"
    return repr(val)


def scenario_to_toml(scenario: Scenario) -> str:
    """Serialise a scenario in the layout ``load_scenario`` reads."""
    lines = ["[market]", f"kind = {_fmt(scenario.market_kind.value)}",
             f"scene_id = {_fmt(scenario.scene_id)}", ""]
    for la in scenario.las:
        lines += ["[[las]]", f"id = {_fmt(la.id)}", f"alpha = {_fmt(la.alpha)}",
                  f"beta = {_fmt(la.beta)}", f"d_min = {_fmt(la.d_min)}"]
        if la.thermal is not None:
            lines.append("[las.thermal]")
            for name in ("R", "C", "T_in_min", "T_in_max", "T_in_current", "T_out", "dt"):
                lines.append(f"{name} = {_fmt(getattr(la.thermal, name))}")
        lines.append("")
    for e in scenario.esps:
        lines += ["[[esps]]", f"id = {_fmt(e.id)}", f"m = {_fmt(e.m)}", f"n = {_fmt(e.n)}",
                  f"s_max = {_fmt(e.s_max)}", ""]
    return "\n".join(lines)


__all__ = ["load_scenario", "load_sweep", "parse_params", "scenario_to_toml",
           "ScenarioValidationError"]
