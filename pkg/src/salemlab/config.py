"""Experiment configuration: TOML or JSON in, fully resolved JSON out.

A config has four top-level keys (``kind``, ``seed``, ``trials`` and the
optional ``output_dir``) and a ``[params]`` table checked against the
schema of its kind.  Parameters left out take the schema default; the
resolved values are what the run manifest records and hashes.
"""

from __future__ import annotations

import hashlib
import json
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

REQUIRED = object()


class ConfigError(Exception):
    def __init__(self, message: str, path=None, line: int | None = None):
        self.message, self.path, self.line = message, path, line
        where = f"{path}:{line}: " if path and line else (f"{path}: " if path else "")
        super().__init__(where + message)


# (type, default); types: int, float, bool, str, "ints", "floats", "strs"
SCHEMAS = {
    "sample-certify": {
        "N": (int, REQUIRED), "d": (int, 1), "beta": (float, REQUIRED), "h": (int, 1),
        "ell_max": (int, 2), "atoms": (int, 0), "events": ("strs", ["fourier_decay"]),
        "ells": ("ints", [1, 2]), "epsilon": (float, 0.25), "kappa": (int, 1),
    },
    "transfer": {
        "m": (int, REQUIRED), "k": (int, 3), "beta": (float, REQUIRED), "alpha": (float, REQUIRED),
        "eta": (float, 0.5), "n_max": (int, 3), "R_factor": (int, 1), "cube_sides": (int, 24),
    },
    "approx-step": {
        "ms": ("ints", [5, 7, 11]), "k": (int, 3), "beta": (float, 1.0), "alpha": (float, 0.5),
        "amplitude": (float, 0.3), "R_factor": (int, 2), "n_max": (int, 3), "net_spacing": (float, 0.01),
    },
    "restrict": {
        "N": (int, REQUIRED), "d": (int, 1), "atoms": (int, REQUIRED), "orders": ("ints", [2, 3]),
        "instances": (int, 1), "ap_exponents": ("floats", []),
    },
    "multiplier": {
        "N": (int, REQUIRED), "atoms": (int, REQUIRED), "lam": (float, REQUIRED), "alpha": (float, REQUIRED),
        "Ws": ("ints", [512, 1024, 2048, 4096]), "qs": ("floats", [1.0, 1.25, 1.5, 2.0]),
        "chi": (str, "smooth"), "half_width": (float, 2.0), "annulus_radii": ("floats", []),
        "annulus_p": (float, 4 / 3), "annulus_q": (float, 2.0), "annulus_W": (int, 0),
        "annulus_functions": (int, 50),
    },
    "energy": {
        "N": (int, REQUIRED), "beta": (float, REQUIRED), "gamma": (float, REQUIRED),
        "alpha": (float, 0.5), "rhos": ("ints", []),
    },
    "concentration": {
        "distribution": (str, "rademacher"), "m": (int, REQUIRED), "N": (int, 1009),
        "ts": ("floats", REQUIRED), "u": (int, 1), "h": (int, 1), "summation_m_max": (int, 50),
        "A": (float, 1.0), "delta": (float, 1.0), "chunk": (int, 5000),
    },
}
KINDS = tuple(SCHEMAS)
TOP_LEVEL = {"kind", "seed", "trials", "output_dir", "params"}


@dataclass
class ExperimentConfig:
    kind: str
    seed: int
    trials: int
    params: dict = field(default_factory=dict)
    output_dir: str = "runs"

    def to_dict(self):
        return {"kind": self.kind, "seed": self.seed, "trials": self.trials,
                "output_dir": self.output_dir, "params": dict(self.params)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def canonical(self) -> str:
        # the output directory does not change results, so it stays out of the hash
        d = self.to_dict()
        d.pop("output_dir")
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()

    @classmethod
    def from_dict(cls, data: dict, text: str | None = None, path=None, fmt: str = "toml"):
        return _validate(data, text, path, fmt)

    @classmethod
    def from_json(cls, text: str):
        return _validate(json.loads(text), text, None, "json")


def _key_line(text, key, table, fmt):
    if not text:
        return None
    if fmt == "json":
        pat = re.compile(r'"%s"\s*:' % re.escape(key))
        for i, line in enumerate(text.splitlines(), 1):
            if pat.search(line):
                return i
        return None
    current = None
    pat = re.compile(r'^\s*"?%s"?\s*=' % re.escape(key))
    for i, line in enumerate(text.splitlines(), 1):
        head = re.match(r"^\s*\[+\s*([^\]]+?)\s*\]+", line)
        if head:
            current = head.group(1)
            if current == key and table is None:
                return i
            continue
        if current == table and pat.match(line):
            return i
    return None


def _coerce(name, kind, value):
    def bad():
        return f"parameter {name!r} must be {kind if isinstance(kind, str) else kind.__name__}, got {value!r}"

    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError(bad())
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(bad())
        return float(value)
    if kind is str:
        if not isinstance(value, str):
            raise ValueError(bad())
        return value
    inner = {"ints": int, "floats": float, "strs": str}[kind]
    if not isinstance(value, list):
        raise ValueError(bad())
    return [_coerce(name, inner, v) for v in value]


def _validate(data, text, path, fmt) -> ExperimentConfig:
    def fail(msg, key=None, table=None):
        raise ConfigError(msg, path, _key_line(text, key, table, fmt) if key else None)

    if not isinstance(data, dict):
        fail("config must be a table")
    for key in data:
        if key not in TOP_LEVEL:
            fail(f"unknown key {key!r}; allowed: {sorted(TOP_LEVEL)}", key)
    for key in ("kind", "seed", "trials"):
        if key not in data:
            fail(f"missing required key {key!r}")
    kind = data["kind"]
    if kind not in SCHEMAS:
        fail(f"unknown experiment kind {kind!r}; expected one of {list(KINDS)}", "kind")
    for key in ("seed", "trials"):
        v = data[key]
        if isinstance(v, bool) or not isinstance(v, int) or v < (0 if key == "seed" else 1):
            fail(f"{key} must be a {'nonnegative' if key == 'seed' else 'positive'} integer", key)
    out_dir = data.get("output_dir", "runs")
    if not isinstance(out_dir, str):
        fail("output_dir must be a string", "output_dir")
    raw = data.get("params", {})
    if not isinstance(raw, dict):
        fail("params must be a table", "params")
    schema = SCHEMAS[kind]
    params = {}
    for key, value in raw.items():
        if key not in schema:
            fail(f"unknown parameter {key!r} for kind {kind!r}; allowed: {sorted(schema)}", key, "params")
        try:
            params[key] = _coerce(key, schema[key][0], value)
        except ValueError as exc:
            fail(str(exc), key, "params")
    for key, (_, default) in schema.items():
        if key not in params:
            if default is REQUIRED:
                fail(f"missing required parameter {key!r} for kind {kind!r}", "params" if "params" in data else None)
            params[key] = list(default) if isinstance(default, list) else default
    return ExperimentConfig(kind, data["seed"], data["trials"], params, out_dir)


def load_config(path) -> ExperimentConfig:
    """Read a ``.toml`` or ``.json`` config; raises :class:`ConfigError` with a line when known."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(exc.msg, path, exc.lineno) from None
        return _validate(data, text, path, "json")
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(str(exc), path, int(m.group(1)) if m else None) from None
    return _validate(data, text, path, "toml")


def param_line(path, key) -> int | None:
    """Line of a parameter in a config file, for messages about invalid values."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError:
        return None
    fmt = "json" if Path(path).suffix == ".json" else "toml"
    return _key_line(text, key, "params", fmt) or _key_line(text, "params", None, fmt)
