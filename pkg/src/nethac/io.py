"""CSV/JSON serialization of networks, panels and results, plus the INI config schema."""

from __future__ import annotations

import configparser
import csv
import hashlib
import json
import os
import re
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Panel, SpatialGraph


class BundleError(ValueError):
    """Malformed input files; ``code`` is a machine-readable tag."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def fmt_float(v) -> str:
    # shortest decimal that round-trips
    return repr(float(v))


# ---------------------------------------------------------------------------
# node / edge files


@dataclass(frozen=True)
class DataBundle:
    """Positions, optional network and optional panel read from disk."""

    positions: np.ndarray
    edges: Optional[np.ndarray]
    panel: Optional[Panel]

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    def graph(self) -> SpatialGraph:
        edges = self.edges if self.edges is not None else np.empty((0, 2), dtype=np.int64)
        return SpatialGraph.from_edges(self.positions, edges)


def covariate_columns(k: int, T: int) -> list:
    if k == 1:
        return [f"x_{t}" for t in range(T + 1)]
    return [f"x{j}_{t}" for j in range(1, k + 1) for t in range(T + 1)]


def write_nodes(path: str, positions, panel: Optional[Panel] = None) -> None:
    """One row per agent: ``id, pos_1..pos_d`` then covariates and outcomes by period."""
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    n, d = positions.shape
    header = ["id"] + [f"pos_{c}" for c in range(1, d + 1)]
    if panel is not None:
        if panel.n != n:
            raise ValueError("panel and positions disagree on n")
        header += covariate_columns(panel.k, panel.T) + [f"y_{t}" for t in range(panel.T + 1)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(n):
            row = [str(i)] + [fmt_float(v) for v in positions[i]]
            if panel is not None:
                if panel.k == 1:
                    row += [fmt_float(v) for v in panel.covariates[i, :, 0]]
                else:
                    row += [fmt_float(v) for v in panel.covariates[i].T.ravel()]
                row += [str(int(v)) for v in panel.outcomes[i]]
            w.writerow(row)


def write_edges(path: str, graph: SpatialGraph) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j"])
        for i, j in graph.edges():
            w.writerow([int(i), int(j)])


_COV = re.compile(r"^x(\d*)_(\d+)$")
_OUT = re.compile(r"^y_(\d+)$")
_POS = re.compile(r"^pos_(\d+)$")


def _read_table(path: str):
    if not os.path.exists(path):
        raise BundleError("missing_file", f"file not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise BundleError("invalid_input", f"{path} is empty")
    return [h.strip() for h in rows[0]], rows[1:]


def read_nodes(path: str):
    """Read a node file. Returns ``(positions, panel or None)`` ordered by id."""
    header, rows = _read_table(path)
    if not header or header[0] != "id":
        raise BundleError("invalid_input", f"{path}: first column must be 'id'")
    try:
        data = np.array([[float(v) for v in r] for r in rows], dtype=float).reshape(len(rows), len(header))
    except ValueError as err:
        raise BundleError("invalid_input", f"{path}: non-numeric or ragged rows") from err
    if len(rows) == 0:
        raise BundleError("invalid_input", f"{path} has no agents")
    ids = data[:, 0]
    n = len(ids)
    if not np.array_equal(np.sort(ids), np.arange(n)):
        raise BundleError("invalid_input", f"{path}: ids must be 0..n-1 without gaps or repeats")
    data = data[np.argsort(ids)]
    cols = {name: c for c, name in enumerate(header)}
    pos_idx = sorted((int(m.group(1)), c) for name, c in cols.items() if (m := _POS.match(name)))
    if not pos_idx or [p for p, _ in pos_idx] != list(range(1, len(pos_idx) + 1)):
        raise BundleError("invalid_input", f"{path}: need position columns pos_1..pos_d")
    positions = data[:, [c for _, c in pos_idx]]
    cov = {}
    for name, c in cols.items():
        m = _COV.match(name)
        if m:
            cov[(int(m.group(1) or 1), int(m.group(2)))] = c
    out = {int(m.group(1)): c for name, c in cols.items() if (m := _OUT.match(name))}
    unknown = [h for h in header[1:] if not (_POS.match(h) or _COV.match(h) or _OUT.match(h))]
    if unknown:
        raise BundleError("invalid_input", f"{path}: unrecognised columns {unknown}")
    if not out:
        return positions, None
    T = max(out)
    if sorted(out) != list(range(T + 1)):
        raise BundleError("invalid_input", f"{path}: outcome columns must be y_0..y_T")
    k = max((j for j, _ in cov), default=0)
    if k == 0 or set(cov) != {(j, t) for j in range(1, k + 1) for t in range(T + 1)}:
        raise BundleError("invalid_input", f"{path}: covariate columns must cover every period")
    x = np.empty((n, T + 1, k))
    for (j, t), c in cov.items():
        x[:, t, j - 1] = data[:, c]
    y = data[:, [out[t] for t in range(T + 1)]]
    try:
        panel = Panel(y, x)
    except ValueError as err:
        raise BundleError("invalid_input", f"{path}: {err}") from err
    return positions, panel


def read_edges(path: str, n: int) -> np.ndarray:
    """Read an ``i,j`` edge list; rejects self-links, unknown endpoints and duplicates."""
    header, rows = _read_table(path)
    if header[:2] != ["i", "j"] or len(header) != 2:
        raise BundleError("invalid_input", f"{path}: header must be 'i,j'")
    try:
        e = np.array([[int(a), int(b)] for a, b in rows], dtype=np.int64).reshape(-1, 2)
    except ValueError as err:
        raise BundleError("invalid_input", f"{path}: edges must be integer pairs") from err
    if e.size and (e.min() < 0 or e.max() >= n):
        raise BundleError("invalid_input", f"{path}: edge endpoint outside 0..{n - 1}")
    if (e[:, 0] == e[:, 1]).any():
        raise BundleError("invalid_input", f"{path}: self-links are not allowed")
    canon = np.sort(e, axis=1)
    if len(np.unique(canon, axis=0)) != len(canon):
        raise BundleError("invalid_input", f"{path}: duplicate edges")
    return canon


def read_bundle(nodes: str, edges: Optional[str] = None) -> DataBundle:
    positions, panel = read_nodes(nodes)
    e = read_edges(edges, positions.shape[0]) if edges else None
    return DataBundle(positions, e, panel)


def write_json(path: str, obj) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path == "-":
        print(text, end="")
        return
    with open(path, "w") as fh:
        fh.write(text)


def config_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# config file

# section -> key -> parser
_LIST = lambda s: [v.strip() for v in s.split(",") if v.strip()]  # noqa: E731
_BOOL = lambda s: configparser.ConfigParser.BOOLEAN_STATES[s.strip().lower()]  # noqa: E731
_OPT_FLOAT = lambda s: None if s.strip().lower() in ("", "none") else float(s)  # noqa: E731

CONFIG_SCHEMA = {
    "run": {"seed": int},
    "network": {"n": int, "d": int, "kappa": float, "threshold": float},
    "model": {"beta": lambda s: [float(v) for v in _LIST(s)], "link": str, "errors": str, "T": int,
              "static": _BOOL},
    "hac": {"methods": _LIST, "kernel": str, "bandwidth": _OPT_FLOAT, "bandwidth_grid":
            lambda s: [float(v) for v in _LIST(s)], "center": str, "psd_floor": _OPT_FLOAT,
            "theta_kernel": str, "theta_bandwidth": _OPT_FLOAT},
    "mc": {"n_list": lambda s: [int(v) for v in _LIST(s)], "reps": int, "oracle_reps": int,
           "level": float, "fixed_network": _BOOL, "workers": int, "moment_center": str,
           "methods": _LIST, "chunk_size": int},
}


def read_config(path: Optional[str]) -> dict:
    """Parse an INI file into ``{"section.key": value}``; unknown keys are errors."""
    if not path:
        return {}
    if not os.path.exists(path):
        raise BundleError("missing_file", f"config not found: {path}")
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        cp.read(path)
    except configparser.Error as err:
        raise BundleError("invalid_config", f"{path}: {err}") from err
    out = {}
    for section in cp.sections():
        schema = CONFIG_SCHEMA.get(section)
        if schema is None:
            raise BundleError("invalid_config", f"unknown config section [{section}]")
        for key, raw in cp.items(section):
            if key not in schema:
                raise BundleError("invalid_config", f"unknown config key {section}.{key}")
            try:
                out[f"{section}.{key}"] = schema[key](raw)
            except (ValueError, KeyError) as err:
                raise BundleError("invalid_config", f"bad value for {section}.{key}: {raw!r}") from err
    return out
