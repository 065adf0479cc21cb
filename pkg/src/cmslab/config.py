"""TOML system configs (schema 1) and preset lookup.

Layout::

    schema = 1
    name = "my-system"
    dim = 1

    [run]            # optional defaults for the CLI
    seed = 0
    particles = 100000

    [[vertices]]
    id = "I"
    region = "x1 >= 0 and x1 <= 1"
    lower = [0.0]
    upper = [1.0]
    anchor = [0.0]

    [[edges]]
    id = "0"
    from = "I"
    to = "I"
    map = ["x1/10"]
    prob = "1/10"
"""
from __future__ import annotations

import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .expr import ExprSyntaxError, parse
from .presets import PRESETS, load_preset
from .system import MarkovSystem, build_system

__all__ = ["ConfigError", "load_config", "load_system", "SCHEMA_VERSION", "RUN_KEYS"]

SCHEMA_VERSION = 1
RUN_KEYS = {"seed": int, "particles": int, "samples": int, "depth": int, "tol": float,
            "burn_in": int}


class ConfigError(ValueError):
    def __init__(self, message: str, path: str = "", file: str | None = None,
                 line: int | None = None, offset: int | None = None):
        self.path, self.file, self.line, self.offset = path, file, line, offset
        where = ""
        if file is not None:
            where = f"{file}"
            if line is not None:
                where += f":{line}"
                if offset is not None:
                    where += f":{offset}"
            where += ": "
        field_part = f"{path}: " if path else ""
        super().__init__(f"{where}{field_part}{message}")


def _require(table: dict, key: str, kind, path: str, file: str):
    if key not in table:
        raise ConfigError("missing required field", f"{path}.{key}".lstrip("."), file)
    val = table[key]
    if kind is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if not isinstance(val, kind) or isinstance(val, bool):
        raise ConfigError(f"expected {kind.__name__}, got {type(val).__name__}",
                          f"{path}.{key}".lstrip("."), file)
    return val


def _numbers(table, key, dim, path, file):
    vals = _require(table, key, list, path, file)
    if len(vals) != dim or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                                   for v in vals):
        raise ConfigError(f"expected a list of {dim} numbers", f"{path}.{key}", file)
    return [float(v) for v in vals]


def _locate(text: str, source: str) -> tuple[int | None, int]:
    """1-based line and column of the quoted expression *source* in *text*."""
    for quote in ('"', "'"):
        i = text.find(quote + source + quote)
        if i >= 0:
            line = text.count("\n", 0, i) + 1
            col = i - (text.rfind("\n", 0, i) + 1) + 2
            return line, col
    return None, 0


def _check_expr(source, dim, path, file, text):
    if not isinstance(source, str):
        raise ConfigError("expected an expression string", path, file)
    try:
        parse(source, dim)
    except ExprSyntaxError as exc:
        line, col = _locate(text, source)
        raise ConfigError(f"expression error: {exc}", path, file, line,
                          None if line is None else col + exc.offset) from None
    return source


def parse_config(data: dict, file: str = "<config>", text: str = "") -> tuple[MarkovSystem, dict]:
    schema = data.get("schema")
    if schema != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema {schema!r} (expected {SCHEMA_VERSION})",
                          "schema", file)
    dim = _require(data, "dim", int, "", file)
    if dim < 1:
        raise ConfigError("dimension must be >= 1", "dim", file)
    name = data.get("name", Path(file).stem)
    vertices_raw = _require(data, "vertices", list, "", file)
    edges_raw = _require(data, "edges", list, "", file)
    vertices, ids = [], set()
    for k, v in enumerate(vertices_raw):
        p = f"vertices[{k}]"
        if not isinstance(v, dict):
            raise ConfigError("expected a table", p, file)
        vid = str(_require(v, "id", str, p, file))
        if vid in ids:
            raise ConfigError(f"duplicate vertex id {vid!r}", f"{p}.id", file)
        ids.add(vid)
        vertices.append({"id": vid,
                         "region": _check_expr(_require(v, "region", str, p, file), dim,
                                               f"{p}.region", file, text),
                         "lower": _numbers(v, "lower", dim, p, file),
                         "upper": _numbers(v, "upper", dim, p, file),
                         "anchor": _numbers(v, "anchor", dim, p, file)})
    edges = []
    for k, e in enumerate(edges_raw):
        p = f"edges[{k}]"
        if not isinstance(e, dict):
            raise ConfigError("expected a table", p, file)
        rec = {"id": str(_require(e, "id", str, p, file))}
        for end in ("from", "to"):
            ref = _require(e, end, str, p, file)
            if ref not in ids:
                raise ConfigError(f"dangling reference to undefined vertex {ref!r}",
                                  f"{p}.{end}", file)
            rec[end] = ref
        maps = _require(e, "map", list, p, file)
        if len(maps) != dim:
            raise ConfigError(f"expected {dim} map components, got {len(maps)}", f"{p}.map", file)
        rec["map"] = [_check_expr(m, dim, f"{p}.map[{j}]", file, text) for j, m in enumerate(maps)]
        rec["prob"] = _check_expr(_require(e, "prob", str, p, file), dim, f"{p}.prob", file, text)
        edges.append(rec)
    run = dict(data.get("run", {}))
    for key, val in run.items():
        if key not in RUN_KEYS:
            raise ConfigError("unknown run default", f"run.{key}", file)
        if not isinstance(val, (int, float)) or isinstance(val, bool):
            raise ConfigError("expected a number", f"run.{key}", file)
        run[key] = RUN_KEYS[key](val)
    try:
        sys_ = build_system(name=str(name), vertices=vertices, edges=edges, dim=dim)
    except ValueError as exc:
        raise ConfigError(str(exc), "", file) from None
    return sys_, run


def load_config(path) -> tuple[MarkovSystem, dict]:
    """Read a TOML config; returns the system and its ``[run]`` defaults."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax error: {exc}", "", str(path),
                          getattr(exc, "lineno", None), getattr(exc, "colno", None)) from None
    return parse_config(data, str(path), text)


def load_system(config=None, preset=None) -> tuple[MarkovSystem, dict]:
    if (config is None) == (preset is None):
        raise ConfigError("give exactly one of a config file or a preset name")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}", "preset")
        return load_preset(preset), {}
    return load_config(config)
