"""Table reading and validation.

Input tables are delimited text produced by the simulator: a first line
`# schema=<name>.v1`, then a CSV header that must match the documented
columns exactly, then data rows. Unknown schemas, version mismatches, or
column deviations are rejected rather than guessed at.
"""

import csv

SCHEMAS = {
    "latency_cdf": ("scheme", "mode", "latency_ms", "cdf"),
    "training_rewards": ("scheme", "mode", "frame", "avg_reward"),
    "inference_rewards": ("scheme", "mode", "avg_reward", "std_reward",
                          "replications"),
    "tradeoff": ("scheme", "mode", "b2_fraction", "iot_avg_reward",
                 "throughput_bps", "energy_efficiency_bpj"),
    "deadline_sweep": ("scheme", "mode", "deadline_slots", "avg_reward"),
}

VERSION = "v1"

# per-schema column parsers; "" stays None (e.g. b2_fraction of a
# full-band sharing operating point)
_FLOAT_COLUMNS = {
    "latency_ms", "cdf", "avg_reward", "std_reward", "b2_fraction",
    "iot_avg_reward", "throughput_bps", "energy_efficiency_bpj",
}
_INT_COLUMNS = {"frame", "replications", "deadline_slots"}


class SchemaError(ValueError):
    pass


def read_table(path, expected_schema):
    if expected_schema not in SCHEMAS:
        raise SchemaError(f"unknown schema {expected_schema!r}")
    columns = SCHEMAS[expected_schema]
    with open(path, "r", encoding="utf-8", newline="") as fh:
        header = fh.readline().strip()
        prefix = "# schema="
        if not header.startswith(prefix):
            raise SchemaError(f"{path}: missing schema line")
        tag = header[len(prefix):]
        if tag != f"{expected_schema}.{VERSION}":
            raise SchemaError(
                f"{path}: schema {tag!r}, expected "
                f"{expected_schema}.{VERSION}")
        reader = csv.reader(fh)
        try:
            found = tuple(next(reader))
        except StopIteration:
            raise SchemaError(f"{path}: missing header row") from None
        if found != columns:
            raise SchemaError(
                f"{path}: columns {found} do not match {columns}")
        rows = []
        for line_no, raw in enumerate(reader, start=3):
            if len(raw) != len(columns):
                raise SchemaError(
                    f"{path}:{line_no}: expected {len(columns)} fields, "
                    f"got {len(raw)}")
            row = {}
            for name, value in zip(columns, raw):
                row[name] = _parse(path, line_no, name, value)
            rows.append(row)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows


def _parse(path, line_no, name, value):
    if value == "":
        return None
    try:
        if name in _FLOAT_COLUMNS:
            return float(value)
        if name in _INT_COLUMNS:
            return int(value)
    except ValueError:
        raise SchemaError(
            f"{path}:{line_no}: cannot parse {name}={value!r}") from None
    return value


def series_keys(rows):
    """Distinct (scheme, mode) pairs in first-appearance order."""
    seen = []
    for row in rows:
        key = (row["scheme"], row["mode"])
        if key not in seen:
            seen.append(key)
    return seen
