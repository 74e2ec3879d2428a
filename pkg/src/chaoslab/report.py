"""Serializable experiment reports."""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import io
import json
from dataclasses import dataclass, field
from typing import Any, Dict, List

SCHEMA_VERSION = 1


def package_version() -> str:
    from . import __version__

    return __version__


@dataclass
class ExperimentReport:
    """{config, results, provenance}; the timestamp is excluded from equality and fingerprints."""

    config: Dict[str, Any]
    results: List[Dict[str, Any]]
    provenance: Dict[str, Any] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.provenance.setdefault("version", package_version())
        self.provenance.setdefault("schema", SCHEMA_VERSION)
        self.provenance.setdefault("timestamp", _dt.datetime.now(_dt.timezone.utc).isoformat())

    def _payload(self, with_time: bool = True) -> dict:
        prov = dict(self.provenance)
        if not with_time:
            prov.pop("timestamp", None)
        return {"config": self.config, "results": self.results, "warnings": self.warnings,
                "provenance": prov}

    def __eq__(self, other):
        if not isinstance(other, ExperimentReport):
            return NotImplemented
        return self._payload(False) == other._payload(False)

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self._payload(), indent=indent, sort_keys=True, allow_nan=True)

    def content_json(self) -> str:
        """JSON without the timestamp, for bit-identity comparisons."""
        return json.dumps(self._payload(False), sort_keys=True, allow_nan=True)

    def fingerprint(self) -> str:
        return hashlib.sha256(self.content_json().encode("utf-8")).hexdigest()

    @classmethod
    def from_json(cls, text: str) -> "ExperimentReport":
        data = json.loads(text)
        return cls(data["config"], data["results"], data.get("provenance", {}), data.get("warnings", []))

    def to_csv(self) -> str:
        """One row per result record with scalar fields flattened (nested keys joined by '.')."""
        rows = [_flatten(r) for r in self.results]
        cols: List[str] = []
        for r in rows:
            for k in r:
                if k not in cols:
                    cols.append(k)
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) for k, v in r.items()})
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        elif isinstance(v, (list, tuple)):
            out[key] = json.dumps(v)
        else:
            out[key] = v
    return out
