"""File formats: curves/design CSVs, the binary draws file and summary CSVs.

Binary draws file (little-endian)::

    header  "<4sIIIId"   magic b"FQRD", version, G, p, T, tau
    b_draws G*p*T float64 in (g, a, l) order
    sigma   G*T   float64 in (g, l) order
    trailer optional: b"HASH" + 32-byte SHA-256 run-manifest digest

Numbers in CSV files are written with 17 significant digits so that values
round-trip exactly. Lines starting with ``#`` are comments.
"""
from __future__ import annotations

import csv
import hashlib
import json
import struct

import numpy as np

from .data import FunctionalDataset, check_curves, check_design, check_grid
from .exceptions import DataError
from .gibbs import PosteriorDraws

__all__ = [
    "DRAWS_MAGIC",
    "DRAWS_VERSION",
    "write_draws",
    "read_draws",
    "export_draws_csv",
    "read_curves_csv",
    "read_design_csv",
    "ingest",
    "write_curves_csv",
    "write_design_csv",
    "write_matrix_csv",
    "write_summary_csv",
    "write_flags_csv",
    "write_bands_csv",
    "write_geweke_csv",
    "canonical_json",
    "digest",
]

DRAWS_MAGIC = b"FQRD"
DRAWS_VERSION = 1
HEADER = struct.Struct("<4sIIIId")
TRAILER_MAGIC = b"HASH"
FLOAT_FMT = "%.17g"


def fmt(x):
    return FLOAT_FMT % x


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_jsonable)


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def digest(obj):
    """Hex SHA-256 of the canonical JSON form of ``obj``."""
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


# -- binary draws -------------------------------------------------------------

def write_draws(path, draws, manifest_hash=None):
    b = np.ascontiguousarray(draws.b_draws, dtype="<f8")
    s = np.ascontiguousarray(draws.sigma_draws, dtype="<f8")
    G, p, T = b.shape
    if s.shape != (G, T):
        raise ValueError("sigma draws do not match coefficient draws")
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(DRAWS_MAGIC, DRAWS_VERSION, G, p, T, float(draws.tau)))
        fh.write(b.tobytes())
        fh.write(s.tobytes())
        if manifest_hash is not None:
            fh.write(TRAILER_MAGIC + bytes.fromhex(manifest_hash))


def read_draws(path):
    """Read a draws file; ``meta["manifest_hash"]`` holds the trailer if any."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER.size:
        raise DataError(f"{path}: too short for a draws file")
    magic, version, G, p, T, tau = HEADER.unpack_from(raw)
    if magic != DRAWS_MAGIC:
        raise DataError(f"{path}: not a draws file (bad magic {magic!r})")
    if version != DRAWS_VERSION:
        raise DataError(f"{path}: unsupported draws format version {version}")
    nb, ns = G * p * T, G * T
    end = HEADER.size + 8 * (nb + ns)
    if len(raw) < end:
        raise DataError(f"{path}: truncated ({len(raw)} bytes, expected {end})")
    body = np.frombuffer(raw, dtype="<f8", count=nb + ns, offset=HEADER.size)
    meta = {"format_version": version}
    rest = raw[end:]
    if rest:
        if len(rest) != 36 or not rest.startswith(TRAILER_MAGIC):
            raise DataError(f"{path}: unrecognized trailing bytes")
        meta["manifest_hash"] = rest[4:].hex()
    return PosteriorDraws(body[:nb].reshape(G, p, T).astype(float),
                          body[nb:].reshape(G, T).astype(float), float(tau), meta)


def export_draws_csv(path, draws, header_lines=()):
    """CSV mirror of a draws file: ``block, draw, covariate, location, value``.

    ``block`` is ``B`` or ``sigma``; sigma rows leave ``covariate`` empty.
    """
    G, p, T = draws.b_draws.shape
    with open(path, "w", newline="") as fh:
        _comments(fh, header_lines)
        fh.write(f"# tau={fmt(draws.tau)} G={G} p={p} T={T}\n")
        fh.write("block,draw,covariate,location,value\n")
        for g in range(G):
            for a in range(p):
                fh.writelines(f"B,{g},{a},{l},{fmt(v)}\n"
                              for l, v in enumerate(draws.b_draws[g, a]))
        for g in range(G):
            fh.writelines(f"sigma,{g},,{l},{fmt(v)}\n"
                          for l, v in enumerate(draws.sigma_draws[g]))


# -- curves and design ----------------------------------------------------------

def _read_numeric_csv(path):
    rows = []
    try:
        with open(path, newline="") as fh:
            for lineno, rec in enumerate(csv.reader(fh), start=1):
                if not rec or rec[0].lstrip().startswith("#"):
                    continue
                try:
                    rows.append((lineno, [float(c) for c in rec]))
                except ValueError:
                    bad = next(i for i, c in enumerate(rec) if not _is_float(c))
                    raise DataError(f"{path}: line {lineno}, column {bad + 1}: "
                                    f"non-numeric cell {rec[bad]!r}") from None
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    width = len(rows[0][1])
    for lineno, vals in rows:
        if len(vals) != width:
            raise DataError(f"{path}: line {lineno} has {len(vals)} fields, "
                            f"expected {width} (ragged rows)")
    return np.array([v for _, v in rows]), [n for n, _ in rows]


def _is_float(c):
    try:
        float(c)
        return True
    except ValueError:
        return False


def _check_finite(a, lines, path, first_row=0):
    bad = np.argwhere(~np.isfinite(a))
    if bad.size:
        r, c = (int(i) for i in bad[0])
        raise DataError(f"{path}: non-finite value at row {r + first_row}, "
                        f"column {c + 1} (line {lines[r]})")


def read_curves_csv(path):
    """First row holds the grid values, each further row one subject's curve.

    Returns a validated :class:`FunctionalDataset`. Error messages give
    1-based subject rows and columns.
    """
    a, lines = _read_numeric_csv(path)
    if a.shape[0] < 2:
        raise DataError(f"{path}: need a grid row and at least one curve")
    _check_finite(a[:1], lines, path + " (grid row)", first_row=1)
    _check_finite(a[1:], lines[1:], path, first_row=1)
    try:
        grid = check_grid(a[0], a.shape[1])
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None
    return FunctionalDataset(check_curves(a[1:]), grid)


def read_design_csv(path):
    a, lines = _read_numeric_csv(path)
    _check_finite(a, lines, path, first_row=1)
    return a


def ingest(curves_path, design_path):
    """Load and cross-check a curves CSV and a design CSV."""
    data = read_curves_csv(curves_path)
    X = read_design_csv(design_path)
    if X.shape[0] != data.n_curves:
        raise DataError(f"{curves_path} has {data.n_curves} curves but "
                        f"{design_path} has {X.shape[0]} design rows")
    try:
        X = check_design(X, name=str(design_path))
    except DataError as exc:
        raise DataError(str(exc)) from None
    return data, X


def _comments(fh, lines):
    for line in lines:
        fh.write(f"# {line}\n")


def write_matrix_csv(path, rows, header=None, header_lines=()):
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    with open(path, "w", newline="") as fh:
        _comments(fh, header_lines)
        if header is not None:
            fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(fmt(v) for v in r) + "\n")


def write_curves_csv(path, data, header_lines=()):
    write_matrix_csv(path, np.vstack([data.grid, data.y]), header_lines=header_lines)


def write_design_csv(path, X, header_lines=()):
    write_matrix_csv(path, X, header_lines=header_lines)


# -- summaries ------------------------------------------------------------------

def _level(alpha):
    return f"{100 * (1 - alpha):g}".replace(".", "_")


def write_summary_csv(path, result, grid, header_lines=()):
    """One row per (covariate, location) of an :class:`InferenceResult`."""
    lvl = _level(result.alpha)
    mask = result.flagged_mask()
    p, T = result.mean.shape
    with open(path, "w", newline="") as fh:
        _comments(fh, header_lines)
        fh.write(f"covariate,grid_value,mean,sd,lo{lvl},hi{lvl},simbas,flagged,"
                 f"pointwise_lo{lvl},pointwise_hi{lvl}\n")
        for a in range(p):
            for l in range(T):
                vals = (result.mean[a, l], result.sd[a, l], result.band_lo[a, l],
                        result.band_hi[a, l], result.simbas[a, l])
                fh.write(f"{a},{fmt(grid[l])}," + ",".join(fmt(v) for v in vals)
                         + f",{int(mask[a, l])},{fmt(result.pointwise_lo[a, l])},"
                         f"{fmt(result.pointwise_hi[a, l])}\n")


def write_flags_csv(path, result, grid, header_lines=()):
    with open(path, "w", newline="") as fh:
        _comments(fh, header_lines)
        fh.write("covariate,start_index,end_index,start_grid,end_grid,length,"
                 "max_abs_mean\n")
        for a, runs in enumerate(result.flags):
            for r in runs:
                fh.write(f"{a},{r.start},{r.end},{fmt(grid[r.start])},"
                         f"{fmt(grid[r.end])},{r.length},{fmt(r.max_abs_mean)}\n")


def write_bands_csv(path, rows, header_lines=()):
    """Plot data: ``rows`` of (covariate, alpha, grid_value, mean, band_lo,
    band_hi, pointwise_lo, pointwise_hi, band_width)."""
    with open(path, "w", newline="") as fh:
        _comments(fh, header_lines)
        fh.write("covariate,alpha,grid_value,mean,band_lo,band_hi,pointwise_lo,"
                 "pointwise_hi,band_width\n")
        for r in rows:
            fh.write(f"{r[0]}," + ",".join(fmt(v) for v in r[1:]) + "\n")


def write_geweke_csv(path, draws, grid, header_lines=()):
    z = draws.geweke()
    with open(path, "w", newline="") as fh:
        _comments(fh, header_lines)
        fh.write("quantity,index,grid_value,z\n")
        for l, v in enumerate(z["log_sigma"]):
            fh.write(f"log_sigma,{l},{fmt(grid[l])},{fmt(v)}\n")
        for a, v in enumerate(z["b_norm"]):
            fh.write(f"b_norm,{a},,{fmt(v)}\n")
