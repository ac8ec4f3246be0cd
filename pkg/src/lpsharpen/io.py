"""Counts ingestion, model-spec loading, bundled fixtures and deterministic report emission."""
from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import math
import sys
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

from . import __version__
from .base_measure import EmpiricalCounts, make_empirical

SIG_DIGITS = 12
TOOL = "lp-sharpen"
FIXTURES = (
    "gambler_die.csv",
    "sparse_dice.csv",
    "sparse_dice_model.json",
    "spiegel.csv",
    "rutherford.csv",
    "jaynes.json",
    "earthquakes.txt",
    "earthquakes_model.json",
)


class InputError(ValueError):
    """Malformed user input; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
        self.line = line


# ---------------------------------------------------------------------------
# ingestion


def _number(tok: str, line: int, path: str, what: str) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise InputError(f"cannot parse {what} {tok!r}", line, path) from None
    if not math.isfinite(v):
        raise InputError(f"non-finite {what} {tok!r}", line, path)
    return v


def _as_values(vals: list[float]) -> np.ndarray:
    arr = np.asarray(vals, dtype=float)
    if np.all(arr == np.round(arr)):
        return arr.astype(np.int64)
    return arr


def parse_counts(path) -> EmpiricalCounts:
    """Read a ``value,count`` CSV or a one-value-per-line sample file.

    The format is detected from the first data line: a comma means counts.
    Blank lines and lines starting with ``#`` are skipped; duplicate values
    are merged.
    """
    path = str(path)
    try:
        with open(path, newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read counts file: {exc.strerror}", path=path) from None
    lines = [(i + 1, ln.strip()) for i, ln in enumerate(text.splitlines())]
    lines = [(i, ln) for i, ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise InputError("empty counts file", path=path)

    first_no, first = lines[0]
    if "," in first:
        head = [t.strip().lower() for t in first.split(",")]
        if head == ["value", "count"]:
            lines = lines[1:]
        elif any(c.isalpha() and c not in "eE" for c in first):
            raise InputError("expected header 'value,count'", first_no, path)
        pairs = []
        for no, ln in lines:
            parts = [t.strip() for t in ln.split(",")]
            if len(parts) != 2:
                raise InputError(f"expected 2 fields, got {len(parts)}", no, path)
            v = _number(parts[0], no, path, "value")
            c = _number(parts[1], no, path, "count")
            if c < 0:
                raise InputError("negative count", no, path)
            if c != round(c):
                raise InputError(f"count must be an integer, got {parts[1]!r}", no, path)
            pairs.append((v, int(c)))
        if not pairs:
            raise InputError("no data rows", path=path)
        values = _as_values([p[0] for p in pairs])
        return make_empirical(pairs=list(zip(values, [p[1] for p in pairs])))

    samples = []
    for no, ln in lines:
        if "," in ln or len(ln.split()) != 1:
            raise InputError("expected a single value per line", no, path)
        samples.append(_number(ln, no, path, "value"))
    return make_empirical(samples=_as_values(samples))


def write_counts(data: EmpiricalCounts, path) -> None:
    with _open_out(path) as fh:
        fh.write("value,count\n")
        for v, c in zip(data.values, data.counts):
            fh.write(f"{_fmt(v)},{int(c)}\n")


def load_json(path) -> dict:
    path = str(path)
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read file: {exc.strerror}", path=path) from None
    except json.JSONDecodeError as exc:
        raise InputError(f"invalid JSON: {exc.msg}", exc.lineno, path) from None


def load_model_spec(path) -> dict:
    """``{family, params, truncation}`` record from a JSON file."""
    spec = load_json(path)
    if not isinstance(spec, dict) or "family" not in spec:
        raise InputError("model spec needs a 'family' field", path=str(path))
    spec.setdefault("params", {})
    spec.setdefault("truncation", None)
    return spec


def fixture_path(name: str) -> Path:
    """Filesystem path of a bundled dataset."""
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; available: {', '.join(FIXTURES)}")
    return Path(str(resources.files("lpsharpen") / "data" / name))


def load_fixture(name: str):
    """Parsed bundled dataset: counts for data files, a dict for JSON specs."""
    p = fixture_path(name)
    if p.suffix == ".json":
        return load_model_spec(p)
    return parse_counts(p)


# ---------------------------------------------------------------------------
# emission


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
        return format(x, f".{SIG_DIGITS}g")
    if x is None:
        return ""
    return str(x)


def canonical(obj: Any) -> Any:
    """Plain JSON-ready structure with floats rounded to 12 significant digits."""
    if isinstance(obj, Mapping):
        return {str(k): canonical(v) for k, v in obj.items()}
    if hasattr(obj, "to_dict"):
        return canonical(obj.to_dict())
    if isinstance(obj, np.ndarray):
        return [canonical(v) for v in obj.tolist()]
    if isinstance(obj, (list, tuple)):
        return [canonical(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return _fmt(x)
        return float(format(x, f".{SIG_DIGITS}g"))
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def config_hash(config: Mapping | None) -> str:
    blob = json.dumps(canonical(config or {}), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def provenance(config: Mapping | None = None, seed=None) -> dict:
    return {
        "tool": TOOL,
        "version": __version__,
        "seed": seed,
        "config": canonical(config or {}),
        "config_hash": config_hash(config),
    }


class _Stdout:
    def __enter__(self):
        return sys.stdout

    def __exit__(self, *exc):
        sys.stdout.flush()
        return False


def _open_out(path):
    if path is None or str(path) == "-":
        return _Stdout()
    p = Path(path)
    try:
        if p.parent and not p.parent.exists():
            p.parent.mkdir(parents=True, exist_ok=True)
        return open(p, "w", newline="")
    except OSError as exc:
        raise InputError(f"cannot write output: {exc.strerror}", path=str(path)) from None


def render_json(report, config: Mapping | None = None, seed=None) -> str:
    payload = canonical(report)
    if not isinstance(payload, dict):
        payload = {"result": payload}
    meta = payload.setdefault("meta", {})
    meta["provenance"] = provenance(config, seed)
    return json.dumps(payload, indent=2) + "\n"


def render_csv(header: Iterable[str], rows: Iterable[Iterable], config: Mapping | None = None, seed=None) -> str:
    buf = _io.StringIO()
    prov = provenance(config, seed)
    buf.write(f"# {prov['tool']} {prov['version']} seed={'none' if seed is None else _fmt(seed)} config_hash={prov['config_hash']}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(header))
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def report_table(report) -> tuple[list[str], list[list]]:
    """Flatten a report into a CSV table."""
    if hasattr(report, "coefficients") and hasattr(report, "p_value"):
        header = ["method", "statistic", "df", "p_value", "order", "lp", "z", "selected"]
        base = [report.method, report.statistic, report.df, report.p_value]
        rows = [base + [j, lp, z, j in report.active] for j, lp, z in report.coefficients]
        return header, rows or [base + [None, None, None, None]]
    d = canonical(report)
    if isinstance(d, dict) and "rows" in d and "header" in d:
        return list(d["header"]), [list(r) for r in d["rows"]]
    if isinstance(d, list) and d and isinstance(d[0], dict):
        header = list(d[0])
        return header, [[r.get(h) for h in header] for r in d]
    if isinstance(d, dict):
        flat = {k: v for k, v in d.items() if not isinstance(v, (dict, list))}
        return ["key", "value"], [[k, v] for k, v in flat.items()]
    raise TypeError(f"cannot render {type(report).__name__} as CSV")


def emit_report(report, format: str = "json", path=None, config: Mapping | None = None, seed=None) -> None:
    """Write ``report`` as JSON or CSV with a provenance block (tool version, seed, config hash).

    Output is a pure function of the inputs, so identical runs give identical bytes.
    """
    if format == "json":
        text = render_json(report, config, seed)
    elif format == "csv":
        header, rows = report_table(report)
        text = render_csv(header, rows, config, seed)
    else:
        raise ValueError(f"unknown report format {format!r}")
    with _open_out(path) as fh:
        fh.write(text)


def emit_table(header, rows, path=None, config: Mapping | None = None, seed=None) -> None:
    with _open_out(path) as fh:
        fh.write(render_csv(header, rows, config, seed))
