"""Line-delimited JSON run records.

Each line is one object with keys

    schema_version   int, currently 1
    kind             "run"
    config_hash      sha256 of the normalised config (output block excluded)
    leg              {"eps": float, "n_reg": int, plus any swept value}
    path             path index within the ensemble
    seed             per-path noise seed
    report           EstimateReport fields
    diagnostics      solver diagnostics (dt, steps, CFL margin, clamp count, ...)
    failed           null or the solver failure message
    wall_clock_s     seconds spent on this path

Only ``wall_clock_s`` and ``diagnostics.wall_clock_s`` vary between reruns.
"""
import json
import math
import os

SCHEMA_VERSION = 1
VOLATILE = ("wall_clock_s",)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "item"):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def _restore(obj):
    if isinstance(obj, dict):
        return {k: _restore(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_restore(v) for v in obj]
    if obj in ("inf", "-inf", "nan"):
        return float(obj)
    return obj


def make_record(config_hash, leg, path, seed, report, diagnostics, failed, wall):
    return {
        "schema_version": SCHEMA_VERSION, "kind": "run", "config_hash": config_hash,
        "leg": dict(leg), "path": int(path), "seed": int(seed), "report": dict(report),
        "diagnostics": dict(diagnostics), "failed": failed, "wall_clock_s": float(wall),
    }


def dumps(record):
    return json.dumps(_clean(record), sort_keys=True, separators=(",", ":"))


class RecordWriter:
    """Single appender for one record file."""

    def __init__(self, path):
        self.path = str(path)
        os.makedirs(os.path.dirname(os.path.abspath(self.path)), exist_ok=True)
        self._fh = open(self.path, "a", encoding="utf-8")

    def write(self, record):
        self._fh.write(dumps(record) + "\n")
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_records(path):
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            rec = _restore(json.loads(line))
            if rec.get("schema_version") != SCHEMA_VERSION:
                raise ValueError(f"{path}:{lineno}: unsupported schema_version {rec.get('schema_version')}")
            out.append(rec)
    return out


def strip_volatile(record):
    rec = {k: v for k, v in record.items() if k not in VOLATILE}
    if "diagnostics" in rec:
        rec["diagnostics"] = {k: v for k, v in rec["diagnostics"].items() if k not in VOLATILE}
    return rec
