"""Field files, report serialization and ROC rendering.

Field file layout (all integers and floats little-endian)::

    offset 0   4 bytes  magic b"CSF1"
    offset 4   u32      N, cells per face edge
    offset 8   u32      T, time steps
    offset 12  u32      C, channels
    offset 16  f32[T, C, 6, N, N]  payload, time-major then channel, face, row, col

There is no padding, so a file is exactly ``16 + 4 * T * C * 6 * N * N``
bytes long.  Metadata, when given, lives in a JSON sidecar next to the file
(``<path>.json``).

Report schemas (CSV headers are frozen):

* sweep CSV: ``q,p,auc``
* lead CSV: ``method,lead,auc``
* ROC CSV: ``threshold,fpr,tpr``
* summary JSON: ``{"quantiles": [{"q", "p_opt", "auc_opt", "auc_mean_pred",
  "ri_opt"}, ...], "fit": {"a", "b", "r_squared"}}``

Floats are written with ``repr``, the shortest string that reads back to
the identical double, so every report round-trips bit-exactly.
"""

import csv
import json
import math
import struct
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .climatology import DAYS_PER_YEAR, Climatology
from .errors import FieldFormatError
from .grid import GridSpec, apply_regrid, cell_centers, knn_weights_from_points

MAGIC = b"CSF1"
_HEADER = struct.Struct("<4sIII")
HEADER_BYTES = _HEADER.size
_DTYPE = np.dtype("<f4")

SWEEP_COLUMNS = ("q", "p", "auc")
LEAD_COLUMNS = ("method", "lead", "auc")
ROC_COLUMNS = ("threshold", "fpr", "tpr")


def sidecar_path(path):
    return Path(str(path) + ".json")


def _open_for_write(path, overwrite, binary=False):
    mode = ("w" if overwrite else "x") + ("b" if binary else "")
    if binary:
        return open(path, mode)
    return open(path, mode, encoding="utf-8", newline="")


def _as_field_stack(fields):
    x = np.asarray(fields)
    if x.ndim == 3:
        x = x[None, None]
    elif x.ndim == 4:
        x = x[:, None]
    if x.ndim != 5 or x.shape[2] != 6 or x.shape[3] != x.shape[4]:
        raise ValueError(f"expected fields shaped (T, C, 6, N, N), got {np.shape(fields)}")
    if not np.issubdtype(x.dtype, np.floating):
        raise ValueError(f"fields must be floating point, got {x.dtype}")
    return x


def field_file_size(n, t, c):
    return HEADER_BYTES + _DTYPE.itemsize * t * c * 6 * n * n


def write_field_file(path, fields, metadata=None, overwrite=False):
    """Write fields shaped ``(T, C, 6, N, N)`` (or ``(T, 6, N, N)``, or one ``(6, N, N)`` field).

    Values are stored as float32.  Existing files are not replaced unless
    ``overwrite`` is set.
    """
    x = _as_field_stack(fields)
    t, c, _, n, _ = x.shape
    with _open_for_write(path, overwrite, binary=True) as fh:
        fh.write(_HEADER.pack(MAGIC, n, t, c))
        fh.write(np.ascontiguousarray(x, dtype=_DTYPE).tobytes())
    if metadata is not None:
        write_json(sidecar_path(path), metadata, overwrite=overwrite)


def read_field_file(path):
    """Read a field file as a float32 array shaped ``(T, C, 6, N, N)``."""
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) or data[: len(MAGIC)] != MAGIC:
        raise FieldFormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}", 0)
    if len(data) < HEADER_BYTES:
        raise FieldFormatError(
            f"truncated header: expected {HEADER_BYTES} bytes, found {len(data)}", len(data)
        )
    _, n, t, c = _HEADER.unpack_from(data)
    if n < 1:
        raise FieldFormatError("header declares N = 0", 4)
    expected = field_file_size(n, t, c)
    if len(data) < expected:
        raise FieldFormatError(
            f"truncated payload: expected {expected - HEADER_BYTES} bytes, "
            f"found {len(data) - HEADER_BYTES}",
            len(data),
        )
    if len(data) > expected:
        raise FieldFormatError(
            f"header/payload mismatch: header implies a {expected}-byte file, "
            f"found {len(data)} bytes",
            expected,
        )
    payload = np.frombuffer(data, dtype=_DTYPE, offset=HEADER_BYTES)
    return payload.reshape(t, c, 6, n, n).astype(np.float32)


def read_metadata(path):
    """Sidecar metadata of a field file, or ``None`` when there is no sidecar."""
    side = sidecar_path(path)
    if not side.exists():
        return None
    return read_json(side)


def write_climatology(path, clim, overwrite=False):
    """Store a climatology as a two-channel (mean, std), 365-step field file."""
    stack = np.stack([clim.mean, clim.std], axis=1)
    meta = {"window_days": clim.window_days, "source_years": list(clim.source_years)}
    write_field_file(path, stack, meta, overwrite=overwrite)


def read_climatology(path):
    x = read_field_file(path).astype(float)
    if x.shape[0] != DAYS_PER_YEAR or x.shape[1] != 2:
        raise ValueError(f"{path}: expected 365 steps and 2 channels, got {x.shape[:2]}")
    meta = read_metadata(path) or {}
    return Climatology(
        mean=x[:, 0],
        std=x[:, 1],
        window_days=int(meta.get("window_days", 0)),
        source_years=tuple(meta.get("source_years", ())),
    )


def _check_finite(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        raise ValueError(f"non-finite number {obj} cannot be written to JSON")
    if isinstance(obj, dict):
        for v in obj.values():
            _check_finite(v)
    elif isinstance(obj, (list, tuple)):
        for v in obj:
            _check_finite(v)


def _plain(obj):
    """Convert numpy scalars and arrays to built-in types for ``json``."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dumps_json(obj):
    obj = _plain(obj)
    _check_finite(obj)
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_json(path, obj, overwrite=False):
    text = dumps_json(obj)
    with _open_for_write(path, overwrite) as fh:
        fh.write(text)


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _cell(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def write_csv(path, columns, rows, overwrite=False):
    with _open_for_write(path, overwrite) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def read_csv(path):
    """Rows of a report CSV as dicts; numeric-looking cells become ints or floats."""

    def convert(cell):
        for kind in (int, float):
            try:
                return kind(cell)
            except ValueError:
                pass
        return cell

    with open(path, encoding="utf-8", newline="") as fh:
        return [{k: convert(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def sweep_rows(reports):
    return [(r.q, p, a) for r in reports for p, a in zip(r.p_values, r.auc_by_p)]


def lead_rows(curve):
    return [(method, lead, a) for method, pts in curve.curves.items() for lead, a in pts]


def roc_rows(curve):
    return list(zip(curve.thresholds.tolist(), curve.fpr.tolist(), curve.tpr.tolist()))


def summary_dict(reports, fit=None):
    out = {
        "quantiles": [
            {
                "q": r.q,
                "p_opt": r.p_opt,
                "auc_opt": r.auc_opt,
                "auc_mean_pred": r.auc_mean_pred,
                "ri_opt": r.ri_opt,
            }
            for r in reports
        ]
    }
    if fit is not None:
        out["fit"] = {"a": fit.slope, "b": fit.intercept, "r_squared": fit.r_squared}
    return out


SVG_SIZE = 400.0
SVG_MARGIN = 40.0


def roc_to_pixels(fpr, tpr, size=SVG_SIZE, margin=SVG_MARGIN):
    """Map ROC coordinates to SVG pixels; y grows downward in SVG."""
    side = size - 2 * margin
    x = margin + np.asarray(fpr, dtype=float) * side
    y = margin + (1.0 - np.asarray(tpr, dtype=float)) * side
    return x, y


def _thin(x, y, resolution=0.5):
    """Drop vertices that land on the same half-pixel as their predecessor."""
    key = np.stack([np.round(x / resolution), np.round(y / resolution)], axis=1)
    keep = np.r_[True, np.any(key[1:] != key[:-1], axis=1)]
    keep[-1] = True
    return x[keep], y[keep]


def render_roc_svg(curve, path, title=None, overwrite=False):
    """Standalone SVG of an ROC curve with the chance diagonal and the AUC.

    Vertices closer than half a pixel to the previous one are dropped, so
    the file size stays bounded however many distinct scores there are.
    """
    lo, hi = SVG_MARGIN, SVG_SIZE - SVG_MARGIN
    x, y = _thin(*roc_to_pixels(curve.fpr, curve.tpr))
    points = " ".join(f"{a:.3f},{b:.3f}" for a, b in zip(x, y))
    label = f"AUC = {curve.auc:.4f}"
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_SIZE:g}" height="{SVG_SIZE:g}" '
        f'viewBox="0 0 {SVG_SIZE:g} {SVG_SIZE:g}">',
        f'  <rect x="{lo:g}" y="{lo:g}" width="{hi - lo:g}" height="{hi - lo:g}" '
        'fill="none" stroke="black" stroke-width="1"/>',
        f'  <line x1="{lo:g}" y1="{hi:g}" x2="{hi:g}" y2="{lo:g}" '
        'stroke="gray" stroke-dasharray="4 4" stroke-width="1"/>',
        f'  <polyline fill="none" stroke="steelblue" stroke-width="2" points="{points}"/>',
        f'  <text x="{hi - 10:g}" y="{hi - 10:g}" text-anchor="end" '
        f'font-family="sans-serif" font-size="14">{escape(label)}</text>',
        f'  <text x="{SVG_SIZE / 2:g}" y="{SVG_SIZE - 12:g}" text-anchor="middle" '
        'font-family="sans-serif" font-size="12">false positive rate</text>',
        f'  <text x="14" y="{SVG_SIZE / 2:g}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="12" transform="rotate(-90 14 {SVG_SIZE / 2:g})">true positive rate</text>',
    ]
    if title:
        lines.append(
            f'  <text x="{SVG_SIZE / 2:g}" y="24" text-anchor="middle" '
            f'font-family="sans-serif" font-size="14">{escape(title)}</text>'
        )
    lines.append("</svg>")
    with _open_for_write(path, overwrite) as fh:
        fh.write("\n".join(lines) + "\n")


def read_latlon_csv(path):
    """Read ``lat,lon,value`` rows (degrees); returns ``(latlon (M, 2), values (M,))``."""
    rows = read_csv(path)
    missing = {"lat", "lon", "value"} - set(rows[0] if rows else ())
    if not rows or missing:
        raise ValueError(f"{path}: expected columns lat, lon, value")
    latlon = np.array([[float(r["lat"]), float(r["lon"])] for r in rows])
    values = np.array([float(r["value"]) for r in rows])
    return latlon, values


def import_latlon_csv(path, grid, k=4):
    """Regrid scattered lat-lon values onto the cube sphere with inverse-distance k-NN."""
    latlon, values = read_latlon_csv(path)
    lat, lon = cell_centers(grid)
    targets = np.stack([lat.ravel(), lon.ravel()], axis=1)
    weights = knn_weights_from_points(latlon, targets, k=k)
    return apply_regrid(weights, values).reshape(GridSpec(grid.resolution).shape)
