"""Line-oriented ``key = value`` sweep configs.

``#`` starts a comment, lists are comma separated, unknown keys are errors
reported with their line number.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import ConfigError


def _int(text):
    v = float(text)
    if not v.is_integer():
        raise ValueError(f"expected an integer, got {text!r}")
    return int(v)


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _list(conv):
    def parse(text):
        items = [x.strip() for x in text.split(",") if x.strip()]
        if not items:
            raise ValueError("empty list")
        return [conv(x) for x in items]

    return parse


INT, FLOAT, STR, BOOL = _int, float, str.strip, _bool
INTS, FLOATS, STRS = _list(_int), _list(float), _list(str.strip)

COMMON = {"seed": (INT, 0)}

SCHEMAS = {
    "graph-size": {
        "m_grid": (INTS, [1, 3, 10, 100, 1000, 10000]),
        "methods": (STRS, ["direct", "repar"]),
        "g": (STRS, ["w^2"]),
        "family": (STRS, ["normal"]),
        "direct_style": (STR, "monomial"),
        "theta": (FLOATS, [0.5, 0.1]),
    },
    "kl-error": {
        "mu": (FLOAT, 0.5),
        "sigma_grid": (FLOATS, [0.05, 0.1, 0.5, 1.0]),
        "prior_mu": (FLOAT, 0.0),
        "prior_sigma": (FLOAT, 1.0),
        "m_grid": (INTS, [100, 1000, 10000, 100000]),
        "replications": (INT, 100),
        "d_grid": (INTS, [100, 10000, 1000000]),
        "d_m": (INT, 10),
        "d_sigma": (FLOAT, 0.5),
        "d_replications": (INT, 10),
    },
    "timing": {
        "m_grid": (INTS, [10, 100, 1000, 10000, 100000]),
        "methods": (STRS, ["direct", "repar", "accumulate"]),
        "repeats": (INT, 20),
        "family": (STR, "normal"),
        "g": (STR, "w^2"),
        "theta": (FLOATS, [0.5, 0.1]),
        "max_m_direct": (INT, 100000),
        "max_m_accumulate": (INT, 10000),
    },
    "train-demo": {
        "m_kl": (INTS, [1, 100]),
        "seeds": (INTS, list(range(10))),
        "epochs": (INT, 100),
        "hidden": (INT, 16),
        "n_train": (INT, 300),
        "n_val": (INT, 200),
        "noise": (FLOAT, 0.15),
        "data_seed": (INT, 0),
        "batch_size": (INT, 20),
        "lr": (FLOAT, 0.02),
        "posterior": (STR, "radial"),
        "prior": (STR, "normal"),
        "prior_params": (FLOATS, [0.0, 1.0]),
        "n_predictive": (INT, 100),
        "kl_method": (STR, "repar"),
        "confidence": (STR, "vote"),
    },
}

COMMANDS = tuple(SCHEMAS)


@dataclass
class SweepConfig:
    command: str
    values: dict
    source_lines: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    @property
    def seed(self) -> int:
        return self.values["seed"]

    def echo(self) -> list[str]:
        """Canonical ``key = value`` lines, sorted by key."""
        out = []
        for k in sorted(self.values):
            v = self.values[k]
            text = ", ".join(_fmt(x) for x in v) if isinstance(v, list) else _fmt(v)
            out.append(f"{k} = {text}")
        return out


def _fmt(x):
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def defaults(command: str) -> SweepConfig:
    if command not in SCHEMAS:
        raise ConfigError(f"unknown command {command!r}")
    schema = {**COMMON, **SCHEMAS[command]}
    return SweepConfig(command, {k: (list(d) if isinstance(d, list) else d) for k, (_, d) in schema.items()})


def parse_config(text: str, command: str) -> SweepConfig:
    cfg = defaults(command)
    schema = {**COMMON, **SCHEMAS[command]}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in schema:
            raise ConfigError(f"unknown key {key!r} for {command}", lineno)
        if key in cfg.source_lines:
            raise ConfigError(f"duplicate key {key!r} (first set on line {cfg.source_lines[key]})", lineno)
        conv = schema[key][0]
        try:
            cfg.values[key] = conv(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", lineno) from None
        cfg.source_lines[key] = lineno
    return cfg


def load_config(path, command: str) -> SweepConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, command)
