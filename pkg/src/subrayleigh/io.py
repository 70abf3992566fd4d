"""CSV and key-value config I/O with '#' manifest headers."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import datetime, timezone
import io
import math
import os

import numpy as np

from .diffraction import CovMatrix, HERMITE_GAUSS
from .errors import DomainError

OUTPUT_DIR_ENV = "SUBRAYLEIGH_OUTPUT_DIR"
BASIS_ALIASES = {"hg": HERMITE_GAUSS}


class ParseError(DomainError):
    """Malformed input file; message carries the row and column."""


@dataclass(frozen=True)
class RunManifest:
    command: str
    params: dict
    seed: int | None = None
    version: str = ""
    timestamp: str = ""

    def header_lines(self):
        stamp = self.timestamp or datetime.now(timezone.utc).isoformat(timespec="seconds")
        lines = [f"# command: {self.command}", f"# version: {self.version}", f"# timestamp: {stamp}"]
        if self.seed is not None:
            lines.append(f"# seed: {self.seed}")
        for k in sorted(self.params):
            lines.append(f"# param {k}: {self.params[k]}")
        return lines


def fmt(x) -> str:
    """Reals with 17 significant digits; everything else via str."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        return format(x, ".17g")
    return str(x)


def render_csv(columns, rows, manifest: RunManifest | None = None) -> str:
    buf = io.StringIO()
    if manifest is not None:
        for line in manifest.header_lines():
            buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, columns, rows, manifest: RunManifest | None = None) -> str:
    text = render_csv(columns, rows, manifest)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return text


def output_dir(default: str = ".") -> str:
    return os.environ.get(OUTPUT_DIR_ENV, default)


def _data_lines(text):
    """(line_number, line) for non-empty, non-comment lines."""
    out = []
    for i, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if s and not s.startswith("#"):
            out.append((i, s))
    return out


def read_csv_rows(path):
    """Header comments as a dict plus data rows (strings) with their file line numbers."""
    with open(path) as fh:
        text = fh.read()
    meta = {}
    for line in text.splitlines():
        s = line.strip()
        if s.startswith("#") and ":" in s:
            key, _, val = s[1:].partition(":")
            meta[key.strip()] = val.strip()
    rows = [(i, next(csv.reader([s]))) for i, s in _data_lines(text)]
    return meta, rows


def _to_float(cell, row, col):
    try:
        v = float(cell)
    except ValueError:
        raise ParseError(f"row {row}, column {col}: cannot parse {cell!r} as a number") from None
    if not math.isfinite(v):
        raise ParseError(f"row {row}, column {col}: non-finite value {cell!r}")
    return v


def parse_matrix(rows):
    mat = []
    width = None
    for line_no, cells in rows:
        vals = [_to_float(c.strip(), line_no, k + 1) for k, c in enumerate(cells)]
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise ParseError(f"row {line_no}: expected {width} columns, found {len(vals)}")
        mat.append(vals)
    if not mat:
        raise ParseError("no matrix rows found")
    return np.array(mat)


def read_cov_csv(path) -> CovMatrix:
    """Square covariance from a headerless numeric CSV; '# basis:' and '# I0:' comments are honored."""
    meta, rows = read_csv_rows(path)
    a = parse_matrix(rows)
    if a.shape[0] != a.shape[1]:
        raise ParseError(f"covariance must be square, got {a.shape[0]} rows and {a.shape[1]} columns")
    basis = meta.get("basis", HERMITE_GAUSS)
    basis = BASIS_ALIASES.get(basis, basis)
    I0 = float(meta["I0"]) if "I0" in meta else float("nan")
    return CovMatrix(a, basis, (), I0)


def write_cov_csv(path, cov: CovMatrix):
    lines = [f"# basis: {cov.basis}", f"# I0: {fmt(cov.I0)}"]
    lines += [",".join(fmt(v) for v in row) for row in cov.entries]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_pixel_csv(path):
    """Pixel intensities as a 2D array; rows index x, columns index y."""
    _, rows = read_csv_rows(path)
    return parse_matrix(rows)


def read_config(path) -> dict:
    """``key = value`` (or ``key: value``) lines; '#' starts a comment; keys use '_' or '-'."""
    out = {}
    with open(path) as fh:
        for i, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            for sep in ("=", ":"):
                if sep in line:
                    key, _, val = line.partition(sep)
                    break
            else:
                raise ParseError(f"config line {i}: expected 'key = value', got {raw.strip()!r}")
            key = key.strip().replace("-", "_")
            if not key:
                raise ParseError(f"config line {i}: empty key")
            out[key] = val.strip()
    return out
