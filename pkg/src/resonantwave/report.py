"""Versioned JSON and CSV output with atomic writes and stable float formatting."""

import csv
import dataclasses
import io
import json
import math
import os
import tempfile

import numpy as np

SCHEMA_VERSION = "1.0"


class SchemaError(ValueError):
    pass


class ReportIOError(OSError):
    pass


def to_jsonable(obj):
    """Plain JSON data; floats keep their shortest round-trip repr, non-finite become strings."""
    if obj is None or isinstance(obj, (bool, str)):
        return obj
    if isinstance(obj, (int, np.integer)) and not isinstance(obj, bool):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(obj, (complex, np.complexfloating)):
        return [to_jsonable(obj.real), to_jsonable(obj.imag)]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    if dataclasses.is_dataclass(obj):
        return to_jsonable({f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)})
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(payload):
    body = dict(to_jsonable(payload))
    body["schema_version"] = SCHEMA_VERSION
    return json.dumps(body, sort_keys=True, indent=1, allow_nan=False) + "\n"


def _atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path)) or "."
    try:
        os.makedirs(d, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise ReportIOError(f"could not write {path}: {exc}") from exc


def write_json(path, payload):
    _atomic_write(path, dumps(payload))
    return path


def check_schema(data, path="<memory>"):
    ver = str(data.get("schema_version", ""))
    major = ver.split(".")[0]
    if major != SCHEMA_VERSION.split(".")[0]:
        raise SchemaError(f"{path}: unsupported schema_version {ver!r}")
    return data


def read_json(path):
    with open(path) as fh:
        data = json.load(fh)
    return check_schema(data, path)


def _cell(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (list, tuple, np.ndarray)):
        return ";".join(_cell(v) for v in x)
    return str(x)


def csv_text(header, rows):
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["# schema_version", SCHEMA_VERSION])
    wr.writerow(header)
    for r in rows:
        wr.writerow([_cell(x) for x in r])
    return buf.getvalue()


def write_csv(path, header, rows):
    _atomic_write(path, csv_text(header, rows))
    return path


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:1] != ["# schema_version"]:
        raise SchemaError(f"{path}: missing schema_version line")
    check_schema({"schema_version": rows[0][1]}, path)
    return rows[1], rows[2:]


@dataclasses.dataclass
class RunResult:
    """Everything one command produces: a JSON document, flat tables and plot series."""

    name: str
    payload: dict
    tables: dict = dataclasses.field(default_factory=dict)   # name -> (header, rows)
    plots: dict = dataclasses.field(default_factory=dict)    # name -> (header, rows)
    ok: bool = True


def emit_report(result, out_dir):
    """Write <name>.json, <table>.csv and plot_<series>.csv; return the written paths."""
    paths = [write_json(os.path.join(out_dir, f"{result.name}.json"),
                        dict(result.payload, ok=result.ok))]
    for tname, (header, rows) in sorted(result.tables.items()):
        paths.append(write_csv(os.path.join(out_dir, f"{tname}.csv"), header, rows))
    for pname, (header, rows) in sorted(result.plots.items()):
        paths.append(write_csv(os.path.join(out_dir, f"plot_{pname}.csv"), header, rows))
    return paths
