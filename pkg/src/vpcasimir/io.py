"""
Plain-text persistence for steady states, grid densities, particle snapshots
and diagnostic tables.

Every file opens with ``key=value`` header lines (format tag, package
version, config hash, payload metadata) followed by CSV data. Floats are
written with 17 significant digits, which round-trips binary64 exactly.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .casimir import CasimirModel
from .dynamics import ParticleEnsemble
from .errors import DomainError
from .functional import CSV_COLUMNS, DiagnosticRecord, GridDensity
from .steady import SteadyState

__all__ = [
    "fmt",
    "config_hash",
    "write_steady",
    "read_steady",
    "write_grid",
    "read_grid",
    "write_snapshot",
    "read_snapshot",
    "write_table",
    "read_table",
    "write_diagnostics",
]

STEADY_FORMAT = "vpcasimir-steady/1"
GRID_FORMAT = "vpcasimir-grid/1"
SNAPSHOT_FORMAT = "vpcasimir-snapshot/1"
TABLE_FORMAT = "vpcasimir-table/1"


def fmt(x) -> str:
    return format(float(x), ".17g")


def config_hash(cfg: Mapping) -> str:
    """Short SHA-256 of the canonical JSON form of ``cfg``."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _model_json(model: CasimirModel) -> str:
    return json.dumps(model.to_dict(), sort_keys=True, separators=(",", ":"))


def _write(path, fmt_tag: str, header: Sequence[Tuple[str, str]], lines: Iterable[str],
           cfg_hash: str = ""):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # newline="\n" keeps the bytes identical across platforms
    with open(path, "w", newline="\n") as fh:
        fh.write(f"format={fmt_tag}\n")
        fh.write(f"version={__version__}\n")
        fh.write(f"config_hash={cfg_hash}\n")
        for k, v in header:
            fh.write(f"{k}={v}\n")
        for line in lines:
            fh.write(line)
            fh.write("\n")
    return path


def _read(path, fmt_tag: str) -> Tuple[Dict[str, str], List[str]]:
    """Header dict and remaining lines; the first non ``key=value`` line starts the body."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    head: Dict[str, str] = {}
    i = 0
    while i < len(lines) and "=" in lines[i] and "," not in lines[i].split("=", 1)[0]:
        k, v = lines[i].split("=", 1)
        head[k] = v
        i += 1
    if head.get("format") != fmt_tag:
        raise DomainError(f"{path}: expected format {fmt_tag}, found {head.get('format')!r}")
    return head, lines[i:]


def _csv_block(lines: List[str], columns: Sequence[str], path) -> np.ndarray:
    if not lines or lines[0].split(",") != list(columns):
        raise DomainError(f"{path}: expected columns {','.join(columns)}")
    body = [ln for ln in lines[1:] if ln]
    try:
        data = np.array([[float(x) for x in ln.split(",")] for ln in body], dtype=float)
    except ValueError as exc:
        raise DomainError(f"{path}: malformed number ({exc})") from None
    if data.size == 0:
        return np.empty((0, len(columns)))
    if data.ndim != 2 or data.shape[1] != len(columns):
        raise DomainError(f"{path}: ragged rows")
    return data


def _rows(data: np.ndarray) -> Iterable[str]:
    for row in data:
        yield ",".join(fmt(x) for x in row)


def _float(head, key, path) -> float:
    try:
        return float(head[key])
    except (KeyError, ValueError):
        raise DomainError(f"{path}: header {key!r} missing or malformed") from None


# ---------------------------------------------------------------------------
# steady states


def write_steady(path, state: SteadyState, cfg_hash: str = "") -> Path:
    header = [("model", _model_json(state.model)), ("kappa", fmt(state.kappa)),
              ("M", fmt(state.M)), ("R", fmt(state.R)), ("E0", fmt(state.E0)),
              ("D", fmt(state.D_value)), ("casimir", fmt(state.casimir)),
              ("kinetic", fmt(state.kinetic)), ("field_energy", fmt(state.field_energy))]
    data = np.column_stack([state.r_grid, state.y_profile, state.rho_profile, state.m_profile])
    return _write(path, STEADY_FORMAT, header, ["r,y,rho,m", *_rows(data)], cfg_hash)


def read_steady(path) -> SteadyState:
    head, body = _read(path, STEADY_FORMAT)
    try:
        model = CasimirModel.from_dict(json.loads(head["model"]))
    except (KeyError, json.JSONDecodeError) as exc:
        raise DomainError(f"{path}: bad model header ({exc})") from None
    data = _csv_block(body, ("r", "y", "rho", "m"), path)
    if not np.all(np.isfinite(data)):
        raise DomainError(f"{path}: non-finite profile values")
    vals = {k: _float(head, k, path) for k in
            ("kappa", "E0", "M", "R", "D", "casimir", "kinetic", "field_energy")}
    return SteadyState(model, vals["kappa"], data[:, 0], data[:, 1], data[:, 2], data[:, 3],
                       vals["E0"], vals["M"], vals["R"], vals["D"], vals["casimir"],
                       vals["kinetic"], vals["field_energy"])


# ---------------------------------------------------------------------------
# grid densities


def write_grid(path, g: GridDensity, model: Optional[CasimirModel] = None, M: float = None,
               cfg_hash: str = "") -> Path:
    """Edges as three one-line blocks, then one line of ``L`` values per ``(r, v_r)`` cell."""
    header = [("shape", ",".join(str(n) for n in g.values.shape))]
    if model is not None:
        header.append(("model", _model_json(model)))
    if M is not None:
        header.append(("M", fmt(M)))

    def lines():
        yield "[r_edges]"
        yield ",".join(fmt(x) for x in g.r_edges)
        yield "[vr_edges]"
        yield ",".join(fmt(x) for x in g.vr_edges)
        yield "[L_edges]"
        yield ",".join(fmt(x) for x in g.L_edges)
        yield "[values]"
        yield from _rows(g.values.reshape(-1, g.values.shape[2]))

    return _write(path, GRID_FORMAT, header, lines(), cfg_hash)


def read_grid(path) -> Tuple[GridDensity, Dict[str, object]]:
    """Grid density plus header metadata (``model`` parsed when present).

    Raises :class:`DomainError` for malformed files and for densities that
    fail validation (negative or non-finite cells).
    """
    head, body = _read(path, GRID_FORMAT)
    sections: Dict[str, List[str]] = {}
    cur = None
    for ln in body:
        if ln.startswith("[") and ln.endswith("]"):
            cur = ln[1:-1]
            sections[cur] = []
        elif cur is not None and ln:
            sections[cur].append(ln)
    try:
        shape = tuple(int(n) for n in head["shape"].split(","))
        edges = [np.array([float(x) for x in sections[k][0].split(",")])
                 for k in ("r_edges", "vr_edges", "L_edges")]
        vals = np.array([[float(x) for x in ln.split(",")] for ln in sections["values"]])
        vals = vals.reshape(shape)
    except (KeyError, IndexError, ValueError) as exc:
        raise DomainError(f"{path}: malformed grid file ({exc})") from None
    meta: Dict[str, object] = dict(head)
    if "model" in head:
        meta["model"] = CasimirModel.from_dict(json.loads(head["model"]))
    if "M" in head:
        meta["M"] = float(head["M"])
    return GridDensity(*edges, vals), meta


# ---------------------------------------------------------------------------
# particle snapshots


def write_snapshot(path, ens: ParticleEnsemble, cfg_hash: str = "") -> Path:
    data = np.column_stack([ens.r, ens.vr, ens.L, ens.w, ens.f_val])
    return _write(path, SNAPSHOT_FORMAT, [("time", fmt(ens.time)), ("N", str(ens.N))],
                  ["r,vr,L,w,f_val", *_rows(data)], cfg_hash)


def read_snapshot(path) -> ParticleEnsemble:
    """Particle ensemble; each particle's phase-space volume is recovered as ``w / f_val``."""
    head, body = _read(path, SNAPSHOT_FORMAT)
    data = _csv_block(body, ("r", "vr", "L", "w", "f_val"), path)
    r, vr, L, w, f = data.T
    if np.any(r < 0) or np.any(L < 0) or np.any(w < 0) or np.any(f <= 0):
        raise DomainError(f"{path}: invalid particle data")
    return ParticleEnsemble(r, vr, L, w, f, w / f, _float(head, "time", path))


# ---------------------------------------------------------------------------
# tables


def write_table(path, columns: Sequence[str], rows, cfg_hash: str = "",
                header: Sequence[Tuple[str, str]] = ()) -> Path:
    """CSV table; floats at 17 significant digits, other cells via ``str``."""
    def cell(x):
        if isinstance(x, (bool, np.bool_, str)):
            return str(x)
        if isinstance(x, (int, np.integer)):
            return str(int(x))
        return fmt(x)

    lines = [",".join(columns)] + [",".join(cell(x) for x in row) for row in rows]
    return _write(path, TABLE_FORMAT, header, lines, cfg_hash)


def read_table(path) -> Tuple[Dict[str, str], List[str], List[List[str]]]:
    """Header, column names and raw string cells of a table file."""
    head, body = _read(path, TABLE_FORMAT)
    if not body:
        raise DomainError(f"{path}: missing column line")
    cols = body[0].split(",")
    return head, cols, [ln.split(",") for ln in body[1:] if ln]


def write_diagnostics(path, records: Sequence[DiagnosticRecord], cfg_hash: str = "") -> Path:
    return write_table(path, CSV_COLUMNS, [r.as_row() for r in records], cfg_hash)
