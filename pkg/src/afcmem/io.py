"""CSV and JSON persistence with lossless float round-trips."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError


class ParseError(InvalidArgumentError):
    """Malformed input file; ``line`` is 1-based (0 when not line-specific)."""

    def __init__(self, path, line: int, message: str):
        self.path = str(path)
        self.line = line
        where = f"{path}:{line}" if line else str(path)
        super().__init__(f"{where}: {message}")


def fmt(x: float) -> str:
    # repr gives the shortest string that parses back to the same double
    return repr(float(x))


def write_csv(path, columns: dict[str, np.ndarray], comments: list[str] | None = None) -> None:
    path = Path(path)
    names = list(columns)
    arrays = [np.asarray(columns[k], dtype=float).ravel() for k in names]
    if len({a.size for a in arrays}) > 1:
        raise InvalidArgumentError("CSV columns differ in length")
    lines = [f"# {c}" for c in comments or []]
    lines.append(",".join(names))
    for row in zip(*arrays):
        lines.append(",".join(fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def read_csv(path, expected: tuple[str, ...] | None = None) -> dict[str, np.ndarray]:
    """Read a numeric CSV with ``#`` comments and a header row.

    Raises:
        ParseError: empty file, bad header, wrong field count or a
            non-numeric field. The message names the offending line.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(path, 0, f"cannot read file ({exc.strerror or exc})") from exc
    header = None
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = [f.strip() for f in line.split(",")]
        if header is None:
            header = fields
            if expected is not None and tuple(header) != tuple(expected):
                raise ParseError(path, lineno, f"expected header {','.join(expected)!r}, got {line!r}")
            continue
        if len(fields) != len(header):
            raise ParseError(path, lineno, f"expected {len(header)} fields, got {len(fields)}")
        try:
            values = [float(f) for f in fields]
        except ValueError:
            raise ParseError(path, lineno, f"non-numeric field in {line!r}") from None
        if not all(np.isfinite(values)):
            raise ParseError(path, lineno, "non-finite value")
        rows.append(values)
    if header is None:
        raise ParseError(path, 1, "file is empty")
    if not rows:
        raise ParseError(path, 2, "no data rows after header")
    data = np.array(rows)
    return {k: data[:, i] for i, k in enumerate(header)}


TRACE_COLUMNS = ("frequency_hz", "power")
TIME_COLUMNS = ("time_s", "re", "im", "intensity")


def read_trace(path):
    from .fitting import ReflectivityTrace

    cols = read_csv(path, TRACE_COLUMNS)
    try:
        return ReflectivityTrace(cols["frequency_hz"], cols["power"], {"source": str(path)})
    except InvalidArgumentError as exc:
        raise ParseError(path, 0, str(exc)) from None


def write_trace(path, trace, comments=None) -> None:
    write_csv(path, {"frequency_hz": trace.frequencies, "power": trace.power}, comments)


def write_pulse(path, pulse, comments=None) -> None:
    s = pulse.samples
    write_csv(
        path,
        {"time_s": pulse.times, "re": s.real, "im": s.imag, "intensity": np.abs(s) ** 2},
        comments,
    )


def read_pulse(path):
    from .timedomain import Pulse

    cols = read_csv(path, TIME_COLUMNS)
    t = cols["time_s"]
    if t.size < 2:
        raise ParseError(path, 0, "a pulse needs at least 2 samples")
    dt = (t[-1] - t[0]) / (t.size - 1)
    return Pulse(float(t[0]), float(dt), cols["re"] + 1j * cols["im"])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    return obj


def write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=False) + "\n")


def read_json(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(path, 0, f"cannot read file ({exc.strerror or exc})") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.lineno, exc.msg) from None


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
