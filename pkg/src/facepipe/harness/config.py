"""Flat dotted-key experiment configuration.

Config files are plain text, one `section.key = value` per line, blank lines
and full-line '#' comments ignored. Every key has a default; unknown keys are
rejected so typos fail fast. Values stay strings until typed access.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

from ..errors import ValidationError
from ..preprocess import DEFAULT_NORM_EPS, DEFAULT_ZCA_EPS

DEFAULTS: dict[str, str] = {
    "dataset.manifest": "",
    "dataset.image_size": "32",
    "split.train_per_class": "10",
    "split.test_per_class": "rest",
    "patch.side": "6",
    "patch.stride": "1",
    "whiten.norm_eps": repr(DEFAULT_NORM_EPS),
    "whiten.zca_eps": repr(DEFAULT_ZCA_EPS),
    "dict.method": "random",
    "dict.size": "1600",
    "dict.patches": "50000",
    "dict.iters": "30",
    "dict.sparsity": "5",
    "dict.lambda": "1.0",
    "dict.source_manifest": "",
    "encoder.name": "st",
    "encoder.alpha": "0.25",
    "encoder.lambda": "1.0",
    "encoder.knn": "5",
    "encoder.delta": "0.01",
    "encoder.gamma": "0.01",
    "pyramid.levels": "1,2,4,6,8",
    "pyramid.mode": "max",
    "classifier.delta": "0.005",
    "classifier.standardize": "true",
    "channels.raw": "true",
    "channels.lbp": "false",
    "modular.patch_side": "8",
    "modular.stride": "1",
    "modular.gamma": "0.001",
    "run.kind": "pipeline",  # pipeline | modular-sum | modular-voting
    "run.seeds": "0,1,2,3,4",
    "output.dir": "out",
}

_TRUE = {"true", "1", "yes", "on"}
_FALSE = {"false", "0", "no", "off"}


class Config:
    """Immutable-by-convention view over the flat key/value table."""

    def __init__(self, values: dict[str, str] | None = None):
        self.values = dict(DEFAULTS)
        if values:
            unknown = sorted(set(values) - set(DEFAULTS))
            if unknown:
                raise ValidationError(f"unknown config key(s): {', '.join(unknown)}")
            self.values.update({k: str(v) for k, v in values.items()})

    def with_overrides(self, overrides: dict[str, str]) -> "Config":
        merged = dict(self.values)
        merged.update({k: str(v) for k, v in overrides.items()})
        return Config(merged)

    def get(self, key: str) -> str:
        if key not in self.values:
            raise ValidationError(f"unknown config key {key!r}")
        return self.values[key]

    def get_int(self, key: str) -> int:
        raw = self.get(key)
        try:
            return int(raw)
        except ValueError as exc:
            raise ValidationError(f"{key}: expected an integer, got {raw!r}") from exc

    def get_float(self, key: str) -> float:
        raw = self.get(key)
        try:
            return float(raw)
        except ValueError as exc:
            raise ValidationError(f"{key}: expected a number, got {raw!r}") from exc

    def get_bool(self, key: str) -> bool:
        raw = self.get(key).strip().lower()
        if raw in _TRUE:
            return True
        if raw in _FALSE:
            return False
        raise ValidationError(f"{key}: expected a boolean, got {raw!r}")

    def get_int_list(self, key: str) -> list[int]:
        raw = self.get(key)
        try:
            return [int(tok) for tok in raw.split(",") if tok.strip()]
        except ValueError as exc:
            raise ValidationError(f"{key}: expected comma-separated integers, got {raw!r}") from exc

    def to_dict(self) -> dict[str, str]:
        return dict(self.values)

    def canonical(self) -> str:
        return "\n".join(f"{k} = {self.values[k]}" for k in sorted(self.values)) + "\n"

    def fingerprint(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValidationError(f"{source}:{lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        values[key.strip()] = value.strip()
    return values


def load_config(path: str | Path) -> Config:
    text = Path(path).read_text(encoding="utf-8")
    return Config(parse_config_text(text, str(path)))


def parse_overrides(pairs: list[str]) -> dict[str, str]:
    out: dict[str, str] = {}
    for pair in pairs:
        if "=" not in pair:
            raise ValidationError(f"override {pair!r} must look like key=value")
        key, _, value = pair.partition("=")
        out[key.strip()] = value.strip()
    return out
