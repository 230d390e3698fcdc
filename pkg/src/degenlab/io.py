"""Deterministic file output: CSV, JSON and two-column plot data."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile

__all__ = ["fmt", "write_atomic", "write_csv", "write_json", "emit_plot_data", "PRNG_NAME"]

PRNG_NAME = "numpy.random.PCG64 via default_rng(seed)"


def fmt(x) -> str:
    """17 significant digits for floats; other values via str."""
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.17g}"
    if hasattr(x, "dtype"):
        return fmt(x.item())
    return str(x)


def write_atomic(path, text: str) -> None:
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(header)
    for row in rows:
        out.writerow([fmt(v) for v in row])
    write_atomic(path, buf.getvalue())


def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return fmt(obj)
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "dtype"):
        return _clean(obj.item())
    return obj


def write_json(path, obj) -> str:
    """Strict JSON (non-finite floats become strings), sorted keys."""
    text = json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"
    if path is not None:
        write_atomic(path, text)
    return text


def emit_plot_data(rows, path, header: str | None = None) -> None:
    """Two-column whitespace-separated data; a header-only file for empty input."""
    lines = [] if header is None else [f"# {header}"]
    lines += [f"{fmt(float(a))} {fmt(float(b))}" for a, b in rows]
    write_atomic(path, "\n".join(lines) + "\n")
