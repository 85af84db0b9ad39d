"""JSON and CSV plumbing for scenario reports."""

import csv
import json
import math
from importlib import resources

import numpy as np

SCENARIO_ID = "cpkern.scenario/1"
REPORT_ID = "cpkern.report/1"


def load_schema(name):
    text = resources.files("cpkern").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def _finite_or_none(v, path, bad):
    if math.isfinite(v):
        return v
    bad.append(path)
    return None


def sanitize(obj, path="$", bad=None):
    """Make ``obj`` JSON-ready: complex as ``[re, im]``, non-finite floats as ``None``.

    Returns ``(clean, bad)`` where ``bad`` lists the paths of every non-finite
    value that was replaced.
    """
    if bad is None:
        bad = []
    if isinstance(obj, dict):
        return {str(k): sanitize(v, f"{path}.{k}", bad)[0] for k, v in obj.items()}, bad
    if isinstance(obj, (list, tuple)):
        return [sanitize(v, f"{path}[{i}]", bad)[0] for i, v in enumerate(obj)], bad
    if isinstance(obj, np.ndarray):
        return sanitize(obj.tolist(), path, bad)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj), bad
    if isinstance(obj, (int, np.integer)):
        return int(obj), bad
    if isinstance(obj, (float, np.floating)):
        return _finite_or_none(float(obj), path, bad), bad
    if isinstance(obj, (complex, np.complexfloating)):
        z = complex(obj)
        return [_finite_or_none(z.real, path + ".re", bad), _finite_or_none(z.imag, path + ".im", bad)], bad
    if obj is None or isinstance(obj, str):
        return obj, bad
    raise TypeError(f"cannot serialize {type(obj).__name__} at {path}")


def dumps(report):
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"


def lookup(result, dotted):
    cur = result
    for part in dotted.split("."):
        if isinstance(cur, list):
            cur = cur[int(part)]
        elif isinstance(cur, dict):
            cur = cur[part]
        else:
            raise KeyError(dotted)
    return cur


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _is_pair(v):
    return isinstance(v, list) and len(v) == 2 and all(_is_num(t) for t in v)


def close(actual, expected, tol):
    """Structural comparison; numbers within ``tol``, complex pairs against reals allowed."""
    if isinstance(expected, bool) or expected is None or isinstance(expected, str):
        return actual == expected
    if _is_num(expected):
        if _is_num(actual):
            return abs(actual - expected) <= tol
        if _is_pair(actual):
            return abs(complex(*actual) - expected) <= tol
        return False
    if isinstance(expected, list):
        if _is_pair(expected) and _is_num(actual):
            return abs(complex(*expected) - actual) <= tol
        if not isinstance(actual, list) or len(actual) != len(expected):
            return False
        return all(close(a, e, tol) for a, e in zip(actual, expected))
    if isinstance(expected, dict):
        if not isinstance(actual, dict):
            return False
        return all(k in actual and close(actual[k], v, tol) for k, v in expected.items())
    return False


def check_expectations(result, expect, tol):
    """List of ``{"field", "ok", "expected", "actual"}`` rows."""
    rows = []
    for key, want in expect.items():
        try:
            got = lookup(result, key)
        except (KeyError, IndexError, ValueError):
            rows.append({"field": key, "ok": False, "expected": want, "actual": None})
            continue
        rows.append({"field": key, "ok": bool(close(got, want, tol)), "expected": want, "actual": got})
    return rows


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
