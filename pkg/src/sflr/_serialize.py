"""Deterministic text output: float formatting, CSV and JSON writers.

Every file starts with '#'-prefixed metadata lines (schema version,
config hash, seed) and carries no timestamps, so reruns with the same
config are byte-identical.  Floats are written with 17 significant
digits and round-trip exactly.
"""

import hashlib
import json

SCHEMA_VERSION = 1


def fmt(value) -> str:
    """Render one cell; floats get 17 significant digits."""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(obj) -> str:
    """sha256 of the canonical JSON rendering of a config mapping."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def meta_lines(meta: dict | None) -> list[str]:
    lines = [f"# schema={SCHEMA_VERSION}"]
    for key, value in (meta or {}).items():
        lines.append(f"# {key}={value}")
    return lines


def write_csv(path, columns, rows, meta: dict | None = None,
              columns_as_comment: bool = False) -> None:
    """Write a CSV with metadata header; cells must already be strings.

    Data files meant to be reloaded as plain numeric CSVs carry their
    column names inside a comment line instead of a header row.
    """
    out = meta_lines(meta)
    header = ",".join(columns)
    out.append(f"# columns={header}" if columns_as_comment else header)
    for row in rows:
        out.append(",".join(row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(out) + "\n")


def write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
