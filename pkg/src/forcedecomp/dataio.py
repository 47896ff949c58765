"""Trial interchange format (JSON Lines) and CSV/JSON export.

A trial file is UTF-8 JSON Lines. Line 1 is the meta object, every further
line is one sample. See ``docs/format.md`` for the full schema.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .errors import ForceDecompError, ParseError, SamplingError, StreamMissingError, ValidationError, VersionError

SCHEMA_VERSION = 1
JITTER_TOLERANCE = 0.01

_OPTIONAL_VEC = ("velocity", "acceleration")
_OPTIONAL_SCALAR = ("yaw_rate", "yaw_accel")


@dataclass(frozen=True)
class AgentMeta:
    id: str
    grasp_offset: tuple[float, float, float] | None

    def as_dict(self) -> dict:
        offset = None if self.grasp_offset is None else list(self.grasp_offset)
        return {"id": self.id, "grasp_offset": offset}


@dataclass
class TrialMeta:
    study_label: str
    trial_id: str
    sample_rate_hz: float
    agents: list[AgentMeta]
    gravity_axis: tuple[float, float, float] = (0.0, 0.0, 1.0)
    mass_kg: float | None = None
    inertia_z: float | None = None
    frame: str = "world"
    extra: dict = field(default_factory=dict)

    @property
    def agent_ids(self) -> list[str]:
        return [a.id for a in self.agents]

    def agent(self, agent_id: str) -> AgentMeta:
        for a in self.agents:
            if a.id == agent_id:
                return a
        raise ValidationError(f"unknown agent {agent_id!r}; trial has {self.agent_ids}")

    def as_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "kind": "meta",
            "study_label": self.study_label,
            "trial_id": self.trial_id,
            "sample_rate_hz": self.sample_rate_hz,
            "mass_kg": self.mass_kg,
            "inertia_z": self.inertia_z,
            "gravity_axis": list(self.gravity_axis),
            "frame": self.frame,
            "agents": [a.as_dict() for a in self.agents],
            "extra": self.extra,
        }


@dataclass(eq=False)
class TrialRecord:
    """A full co-manipulation trial held as column arrays.

    Per-agent wrench arrays are ``(N, 3)`` in the meta frame; ``true_forces``
    and ``true_torques`` are only present for simulated trials.
    """

    meta: TrialMeta
    t: np.ndarray
    forces: dict[str, np.ndarray]
    torques: dict[str, np.ndarray]
    position: np.ndarray
    yaw: np.ndarray
    velocity: np.ndarray | None = None
    acceleration: np.ndarray | None = None
    yaw_rate: np.ndarray | None = None
    yaw_accel: np.ndarray | None = None
    true_forces: dict[str, np.ndarray] | None = None
    true_torques: dict[str, np.ndarray] | None = None

    def __len__(self) -> int:
        return len(self.t)

    @property
    def dt(self) -> float:
        return 1.0 / self.meta.sample_rate_hz

    def grasp_offset_world(self, agent_id: str) -> np.ndarray:
        """Grasp point relative to the center of mass, rotated into the world frame.

        Assumes yaw is measured about the world z axis.
        """
        offset = self.meta.agent(agent_id).grasp_offset
        if offset is None:
            raise StreamMissingError(f"grasp_offset[{agent_id}]")
        r = np.asarray(offset, dtype=float)
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        out = np.empty((len(self.t), 3))
        out[:, 0] = c * r[0] - s * r[1]
        out[:, 1] = s * r[0] + c * r[1]
        out[:, 2] = r[2]
        return out

    def validate(self) -> "TrialRecord":
        validate_trial(self)
        return self

    def equals(self, other: "TrialRecord") -> bool:
        if self.meta != other.meta:
            return False
        for name in ("t", "position", "yaw") + _OPTIONAL_VEC + _OPTIONAL_SCALAR:
            a, b = getattr(self, name), getattr(other, name)
            if (a is None) != (b is None):
                return False
            if a is not None and not np.array_equal(a, b):
                return False
        for name in ("forces", "torques", "true_forces", "true_torques"):
            a, b = getattr(self, name), getattr(other, name)
            if (a is None) != (b is None):
                return False
            if a is None:
                continue
            if a.keys() != b.keys() or any(not np.array_equal(a[k], b[k]) for k in a):
                return False
        return True


def _first_bad_row(arr: np.ndarray) -> int | None:
    bad = ~np.isfinite(arr)
    if bad.ndim > 1:
        bad = bad.any(axis=tuple(range(1, bad.ndim)))
    idx = np.flatnonzero(bad)
    return int(idx[0]) if len(idx) else None


def validate_trial(record: TrialRecord) -> None:
    """Check every trial invariant; raise on the first violation.

    Row numbers in messages are zero-based sample indices (file line = row + 2).
    """
    meta = record.meta
    if not (isinstance(meta.sample_rate_hz, (int, float)) and meta.sample_rate_hz > 0
            and math.isfinite(meta.sample_rate_hz)):
        raise ValidationError(f"meta.sample_rate_hz must be positive, got {meta.sample_rate_hz!r}")
    for name in ("mass_kg", "inertia_z"):
        value = getattr(meta, name)
        if value is not None and not (math.isfinite(value) and value > 0):
            raise ValidationError(f"meta.{name} must be positive when given, got {value!r}")
    g = np.asarray(meta.gravity_axis, dtype=float)
    if g.shape != (3,) or not np.isfinite(g).all() or abs(np.linalg.norm(g) - 1.0) > 1e-9:
        raise ValidationError(f"meta.gravity_axis must be a unit 3-vector, got {meta.gravity_axis!r}")
    ids = meta.agent_ids
    if not ids:
        raise ValidationError("meta.agents is empty")
    if len(set(ids)) != len(ids):
        raise ValidationError(f"duplicate agent ids in meta: {ids}")
    for a in meta.agents:
        if a.grasp_offset is None:
            continue
        if len(a.grasp_offset) != 3 or not all(math.isfinite(v) for v in a.grasp_offset):
            raise ValidationError(f"agent {a.id!r} grasp_offset must be 3 finite numbers")

    n = len(record.t)
    t = np.asarray(record.t, dtype=float)
    if t.shape != (n,):
        raise ValidationError("t must be one-dimensional")
    row = _first_bad_row(t)
    if row is not None:
        raise ValidationError(f"field 't' is not finite at row {row}")

    def check(name: str, arr, shape):
        if arr.shape != shape:
            raise ValidationError(f"field {name!r} has shape {arr.shape}, expected {shape}")
        bad = _first_bad_row(arr)
        if bad is not None:
            raise ValidationError(f"field {name!r} is not finite at row {bad}")

    for group in ("forces", "torques", "true_forces", "true_torques"):
        streams = getattr(record, group)
        if streams is None:
            if group in ("forces", "torques"):
                raise ValidationError(f"{group} missing")
            continue
        if set(streams) != set(ids):
            extra = sorted(set(streams) - set(ids))
            if extra:
                raise ValidationError(f"{group}: agent(s) {extra} not declared in meta")
            raise ValidationError(f"{group}: agent(s) {sorted(set(ids) - set(streams))} have no samples")
        for aid, arr in streams.items():
            check(f"{group}[{aid}]", arr, (n, 3))
    check("position", record.position, (n, 3))
    check("yaw", record.yaw, (n,))
    for name in _OPTIONAL_VEC:
        arr = getattr(record, name)
        if arr is not None:
            check(name, arr, (n, 3))
    for name in _OPTIONAL_SCALAR:
        arr = getattr(record, name)
        if arr is not None:
            check(name, arr, (n,))
    check_uniform(t, meta.sample_rate_hz)


def check_uniform(t: np.ndarray, sample_rate_hz: float, tolerance: float = JITTER_TOLERANCE) -> None:
    """Raise :class:`SamplingError` unless ``t`` increases at ``1/rate`` within ``tolerance``."""
    if len(t) < 2:
        return
    d = np.diff(t)
    dt = 1.0 / sample_rate_hz
    if np.any(d <= 0):
        row = int(np.flatnonzero(d <= 0)[0]) + 1
        raise SamplingError(f"timestamps not strictly increasing at row {row}")
    rel = np.abs(d - dt) / dt
    if np.any(rel > tolerance):
        row = int(np.argmax(rel > tolerance)) + 1
        raise SamplingError(
            f"sampling jitter {rel[row - 1]:.2%} at row {row} exceeds {tolerance:.0%} of 1/{sample_rate_hz:g} s"
        )


# ---------------------------------------------------------------- writing


def _vec_lists(arr: np.ndarray | None):
    return None if arr is None else arr.tolist()


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=True)


def trial_lines(record: TrialRecord) -> Iterable[str]:
    yield _dumps(record.meta.as_dict())
    ids = record.meta.agent_ids
    cols = {
        "t": record.t.tolist(),
        "position": record.position.tolist(),
        "yaw": record.yaw.tolist(),
    }
    for name in _OPTIONAL_VEC + _OPTIONAL_SCALAR:
        cols[name] = _vec_lists(getattr(record, name))
    agent_cols = {}
    for aid in ids:
        entry = {"force": record.forces[aid].tolist(), "torque": record.torques[aid].tolist()}
        if record.true_forces is not None:
            entry["true_force"] = record.true_forces[aid].tolist()
        if record.true_torques is not None:
            entry["true_torque"] = record.true_torques[aid].tolist()
        agent_cols[aid] = entry
    for i in range(len(record.t)):
        row: dict[str, Any] = {"t": cols["t"][i]}
        row["agents"] = {aid: {k: v[i] for k, v in agent_cols[aid].items()} for aid in ids}
        row["position"] = cols["position"][i]
        row["yaw"] = cols["yaw"][i]
        for name in _OPTIONAL_VEC + _OPTIONAL_SCALAR:
            if cols[name] is not None:
                row[name] = cols[name][i]
        yield _dumps(row)


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temp file in the same directory and rename."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def write_trial(record: TrialRecord, path) -> None:
    """Validate and write ``record``; invalid records are refused, never repaired."""
    validate_trial(record)
    atomic_write_text(path, "\n".join(trial_lines(record)) + "\n")


# ---------------------------------------------------------------- reading


def _parse_meta(obj: Any) -> TrialMeta:
    if not isinstance(obj, dict):
        raise ParseError("meta line must be a JSON object", line=1)
    if "schema" not in obj:
        raise ParseError("meta line has no 'schema' field", line=1)
    if obj["schema"] != SCHEMA_VERSION:
        raise VersionError(f"unsupported schema version {obj['schema']!r} (expected {SCHEMA_VERSION})", line=1)
    try:
        agents = [
            AgentMeta(
                id=str(a["id"]),
                grasp_offset=None if a.get("grasp_offset") is None
                else tuple(float(v) for v in a["grasp_offset"]),
            )
            for a in obj["agents"]
        ]
        return TrialMeta(
            study_label=str(obj.get("study_label", "")),
            trial_id=str(obj.get("trial_id", "")),
            sample_rate_hz=float(obj["sample_rate_hz"]),
            agents=agents,
            gravity_axis=tuple(float(v) for v in obj.get("gravity_axis", (0.0, 0.0, 1.0))),
            mass_kg=None if obj.get("mass_kg") is None else float(obj["mass_kg"]),
            inertia_z=None if obj.get("inertia_z") is None else float(obj["inertia_z"]),
            frame=str(obj.get("frame", "world")),
            extra=dict(obj.get("extra") or {}),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed meta: {exc!r}", line=1) from exc


def _column(rows: list, getter, name: str, shape_tail: tuple, optional: bool = False):
    """Gather one field from every row; locate the first offending row on failure."""
    present = [getter(r) for r in rows] if rows else []
    if optional:
        flags = [v is None for v in present]
        if all(flags):
            return None
        if any(flags):
            row = flags.index(True) if not flags[0] else flags.index(False)
            raise ParseError(f"field {name!r} present in some rows but not others", line=row + 2)
    try:
        arr = np.array(present, dtype=float)
    except (TypeError, ValueError):
        arr = None
    if arr is None or arr.shape != (len(rows),) + shape_tail:
        for i, v in enumerate(present):
            try:
                a = np.asarray(v, dtype=float)
            except (TypeError, ValueError):
                a = None
            if a is None or a.shape != shape_tail:
                raise ParseError(f"field {name!r} malformed: {v!r}", line=i + 2)
        raise ParseError(f"field {name!r} malformed")
    return arr


def _get(*keys):
    def getter(row):
        cur = row
        for k in keys:
            if not isinstance(cur, dict) or k not in cur:
                return None
            cur = cur[k]
        return cur
    return getter


def _read_rows_stdlib(meta: TrialMeta, body: list[str]) -> TrialRecord:
    try:
        rows = json.loads("[" + ",".join(body) + "]")
    except json.JSONDecodeError:
        rows = []
        for i, line in enumerate(body):
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", line=i + 2) from exc
        raise ParseError("blank line inside sample block")
    if len(rows) != len(body):
        raise ParseError("sample lines must each hold exactly one JSON object")
    for i, r in enumerate(rows):
        if not isinstance(r, dict):
            raise ParseError("sample line must be a JSON object", line=i + 2)
        if "t" not in r:
            raise ParseError("sample has no 't' field", line=i + 2)
        agents = r.get("agents")
        if not isinstance(agents, dict):
            raise ParseError("sample has no 'agents' object", line=i + 2)

    ids = meta.agent_ids
    for i, r in enumerate(rows):
        unknown = set(r["agents"]) - set(ids)
        if unknown:
            raise ValidationError(f"row {i}: agent(s) {sorted(unknown)} not declared in meta")

    def agent_group(key: str, optional: bool):
        out = {}
        for aid in ids:
            arr = _column(rows, _get("agents", aid, key), f"agents.{aid}.{key}", (3,), optional=optional)
            if arr is None:
                return None
            out[aid] = arr
        return out

    return TrialRecord(
        meta=meta,
        t=_column(rows, _get("t"), "t", ()),
        forces=agent_group("force", False),
        torques=agent_group("torque", False),
        position=_column(rows, _get("position"), "position", (3,)),
        yaw=_column(rows, _get("yaw"), "yaw", ()),
        velocity=_column(rows, _get("velocity"), "velocity", (3,), optional=True),
        acceleration=_column(rows, _get("acceleration"), "acceleration", (3,), optional=True),
        yaw_rate=_column(rows, _get("yaw_rate"), "yaw_rate", (), optional=True),
        yaw_accel=_column(rows, _get("yaw_accel"), "yaw_accel", (), optional=True),
        true_forces=agent_group("true_force", True),
        true_torques=agent_group("true_torque", True),
    )


class _FastPathMiss(Exception):
    pass


_VEC_FIELDS = ("position", "velocity", "acceleration")
_SCALAR_FIELDS = ("t", "yaw", "yaw_rate", "yaw_accel")
_AGENT_FIELDS = ("force", "torque", "true_force", "true_torque")


def _read_rows_arrow(meta: TrialMeta, body, n_rows: int) -> TrialRecord:
    """Columnar parse via pyarrow; raises _FastPathMiss on anything unusual.

    The schema is fixed from the meta line, so unknown fields or agents
    abort the fast path and the stdlib parser reports them precisely.
    """
    try:
        import pyarrow as pa
        import pyarrow.json as pj
    except ImportError as exc:  # pragma: no cover - pyarrow is a declared dependency
        raise _FastPathMiss from exc
    vec = pa.list_(pa.float64())
    agent_type = pa.struct([(k, vec) for k in _AGENT_FIELDS])
    schema = pa.schema(
        [(k, pa.float64()) for k in _SCALAR_FIELDS]
        + [(k, vec) for k in _VEC_FIELDS]
        + [("agents", pa.struct([(aid, agent_type) for aid in meta.agent_ids]))]
    )
    try:
        table = pj.read_json(
            pa.BufferReader(pa.py_buffer(body)),
            read_options=pj.ReadOptions(block_size=1 << 24),
            parse_options=pj.ParseOptions(explicit_schema=schema, unexpected_field_behavior="error"),
        )
    except (pa.ArrowInvalid, pa.ArrowTypeError, pa.ArrowNotImplementedError) as exc:
        raise _FastPathMiss from exc
    if table.num_rows != n_rows:
        raise _FastPathMiss

    def present(arr, optional):
        # A column is either complete or (when optional) absent from every row.
        if arr.null_count == 0:
            return True
        if optional and arr.null_count == len(arr):
            return False
        raise _FastPathMiss

    def scalar(arr, optional=False):
        if not present(arr, optional):
            return None
        return arr.to_numpy(zero_copy_only=False)

    def vec3(arr, optional=False):
        if not present(arr, optional):
            return None
        if not np.all(np.diff(arr.offsets.to_numpy()) == 3):
            raise _FastPathMiss
        values = arr.flatten()
        if values.null_count:
            raise _FastPathMiss
        return values.to_numpy(zero_copy_only=False).reshape(-1, 3)

    cols = {name: table.column(name).combine_chunks() for name in table.column_names}
    agents = cols["agents"]
    if agents.null_count:
        raise _FastPathMiss
    subs = {aid: agents.field(aid) for aid in meta.agent_ids}
    if any(sub.null_count for sub in subs.values()):
        raise _FastPathMiss

    def group(key, optional):
        out = {aid: vec3(sub.field(key), optional) for aid, sub in subs.items()}
        missing = [v is None for v in out.values()]
        if all(missing):
            return None
        if any(missing):
            raise _FastPathMiss
        return out

    return TrialRecord(
        meta=meta,
        t=scalar(cols["t"]),
        forces=group("force", False),
        torques=group("torque", False),
        position=vec3(cols["position"]),
        yaw=scalar(cols["yaw"]),
        velocity=vec3(cols["velocity"], True),
        acceleration=vec3(cols["acceleration"], True),
        yaw_rate=scalar(cols["yaw_rate"], True),
        yaw_accel=scalar(cols["yaw_accel"], True),
        true_forces=group("true_force", True),
        true_torques=group("true_torque", True),
    )


def _meta_from_line(line) -> TrialMeta:
    try:
        meta_obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line=1) from exc
    return _parse_meta(meta_obj)


def _read_fast(data: bytes) -> TrialRecord | None:
    """Columnar path for well-formed files; returns None to request the slow path."""
    end = len(data)
    while end and data[end - 1 : end].isspace():
        end -= 1
    cut = data.find(b"\n", 0, end)
    if cut < 0 or data.find(b"\r", 0, end) >= 0:
        return None
    try:
        meta = _meta_from_line(data[:cut].decode("utf-8"))
    except (ForceDecompError, UnicodeDecodeError):
        return None
    # Blank lines are skipped by the Arrow reader, so a row-count mismatch flags them.
    n_rows = data.count(b"\n", cut + 1, end) + 1
    try:
        return _read_rows_arrow(meta, memoryview(data)[cut + 1 : end], n_rows)
    except _FastPathMiss:
        return None


def _read_slow(data: bytes) -> TrialRecord:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"not UTF-8: {exc}") from exc
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise ParseError("empty trial file", line=1)
    return _read_rows_stdlib(_meta_from_line(lines[0]), lines[1:])


def parse_trial(data: bytes, fast: bool = True) -> TrialRecord:
    """Parse and fully validate trial file contents.

    Raises:
        ParseError: malformed JSON or missing fields (with line number).
        VersionError: unknown ``schema`` value.
        ValidationError: an invariant fails (names field and row).
    """
    record = _read_fast(data) if fast else None
    if record is None:
        record = _read_slow(data)
    validate_trial(record)
    return record


def read_trial(path, fast: bool = True) -> TrialRecord:
    """Read a trial file; errors as for :func:`parse_trial`."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    return parse_trial(data, fast)


# ---------------------------------------------------------------- export


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return ""
        return repr(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def csv_text(header: list[str], rows: Iterable[Iterable]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def export_csv(table, path) -> None:
    """Write any object exposing ``csv_header()`` and ``csv_rows()``."""
    atomic_write_text(path, csv_text(table.csv_header(), table.csv_rows()))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return None if not math.isfinite(v) else v
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def json_text(obj) -> str:
    if hasattr(obj, "as_dict"):
        obj = obj.as_dict()
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def export_json(obj, path) -> None:
    """Write ``obj`` (or ``obj.as_dict()``) as sorted, indented JSON; NaN becomes null."""
    atomic_write_text(path, json_text(obj))
