"""Flat ``key = value`` run configuration."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .model import Hyperparams
from .streaming import GrowthPlan

__all__ = ["ConfigError", "RunConfig", "parse_config_text", "load_config"]


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


def _ints(v: str) -> tuple[int, ...]:
    return tuple(int(x) for x in str(v).replace("x", ",").split(",") if x.strip())


def _floats(v: str) -> tuple[float, ...]:
    return tuple(float(x) for x in str(v).split(",") if x.strip())


def _bool(v: str) -> bool:
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


@dataclass
class RunConfig:
    tensor: str = ""
    shape: tuple[int, ...] = ()
    side: dict[int, str] = field(default_factory=dict)
    regime: str = "multi-aspect"
    start_dims: tuple[int, ...] = ()
    step_increments: tuple[int, ...] = ()
    ranks: tuple[int, ...] = ()
    lambda_g: float = 1e-3
    lambda_i: tuple[float, ...] = (1e-3,)
    gamma: float = 1e-3
    K: int = 1
    nonnegative: bool = False
    stale_core_residual: bool = False
    missing_pct: float = 0.2
    seed: int = 0
    n_splits: int = 1
    output: str = "out"
    threads: int = 1
    deterministic: bool = True
    timing: bool = True
    weighted_average: bool = False
    checkpoint: bool = False
    # cluster subcommand
    labels: str = ""
    w: int = 5
    cluster_mode: int = 1

    _CONVERTERS = {
        "shape": _ints, "start_dims": _ints, "step_increments": _ints, "ranks": _ints,
        "lambda_g": float, "lambda_i": _floats, "gamma": float, "K": int,
        "nonnegative": _bool, "stale_core_residual": _bool, "missing_pct": float,
        "seed": int, "n_splits": int, "threads": int, "deterministic": _bool,
        "timing": _bool, "weighted_average": _bool, "checkpoint": _bool, "w": int,
        "cluster_mode": int, "tensor": str, "regime": str, "output": str, "labels": str,
    }

    def set(self, key: str, value: str) -> None:
        key = key.strip()
        if key.startswith("side."):
            try:
                mode = int(key.split(".", 1)[1])
            except ValueError:
                raise ConfigError(f"side key {key!r} must be side.<mode>") from None
            self.side[mode] = value.strip()
            return
        if key not in self._CONVERTERS:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            setattr(self, key, self._CONVERTERS[key](value.strip() if isinstance(value, str) else value))
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None

    def hyperparams(self) -> Hyperparams:
        try:
            return Hyperparams(lambda_g=self.lambda_g, lambda_i=self.lambda_i, gamma=self.gamma,
                               inner_steps=self.K, nonnegative=self.nonnegative, seed=self.seed,
                               stale_core_residual=self.stale_core_residual)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def plan(self) -> GrowthPlan:
        full = self.shape
        reg = self.regime.strip()
        try:
            if reg == "multi-aspect":
                start = self.start_dims or full
                step = self.step_increments or (0,) * len(full)
                return GrowthPlan.multi_aspect(start, step, full)
            if reg.startswith("streaming"):
                mode = int(reg.split(":", 1)[1]) if ":" in reg else len(full) - 1
                return GrowthPlan.streaming(full, mode)
            if reg.startswith("batch"):
                passes = int(reg.split(":", 1)[1]) if ":" in reg else 1
                return GrowthPlan.batch(full, passes)
        except ValueError as exc:
            raise ConfigError(f"regime: {exc}") from None
        raise ConfigError(f"regime: unknown regime {reg!r} (multi-aspect | streaming:<mode> | batch:<passes>)")

    def validate(self) -> None:
        if not self.tensor:
            raise ConfigError("tensor: a tensor file is required")
        if len(self.shape) < 2 or any(d < 1 for d in self.shape):
            raise ConfigError(f"shape: need >= 2 positive dims, got {self.shape}")
        n = len(self.shape)
        if len(self.ranks) != n or any(r < 1 for r in self.ranks):
            raise ConfigError(f"ranks: need {n} values >= 1, got {self.ranks}")
        if any(m < 0 or m >= n for m in self.side):
            raise ConfigError(f"side: mode out of range in {sorted(self.side)}")
        if len(self.lambda_i) not in (1, n):
            raise ConfigError(f"lambda_i: need 1 or {n} values, got {len(self.lambda_i)}")
        for name, dims in (("start_dims", self.start_dims), ("step_increments", self.step_increments)):
            if dims and len(dims) != n:
                raise ConfigError(f"{name}: need {n} values, got {dims}")
        if not 0.0 < self.missing_pct < 1.0:
            raise ConfigError(f"missing_pct: must be in (0, 1), got {self.missing_pct}")
        if self.n_splits < 1:
            raise ConfigError(f"n_splits: must be >= 1, got {self.n_splits}")
        if self.threads < 1:
            raise ConfigError(f"threads: must be >= 1, got {self.threads}")
        if not 0 <= self.cluster_mode < n:
            raise ConfigError(f"cluster_mode: must be in [0, {n}), got {self.cluster_mode}")
        self.hyperparams()
        self.plan()

    def side_spec(self, mode: int) -> str:
        return self.side.get(mode, f"identity:{self.shape[mode]}")

    def dump(self) -> str:
        """Resolved configuration in the same flat format."""
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "side":
                for m in range(len(self.shape)):
                    lines.append(f"side.{m} = {self.side_spec(m)}")
                continue
            if isinstance(v, tuple):
                v = ",".join(repr(float(x)) if isinstance(x, float) else str(x) for x in v)
            elif isinstance(v, bool):
                v = str(v).lower()
            elif isinstance(v, float):
                v = repr(float(v))
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def parse_config_text(text: str, cfg: RunConfig | None = None, base: Path | None = None) -> RunConfig:
    cfg = cfg or RunConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if base is not None and (key in ("tensor", "labels") or key.startswith("side.")):
            if value and not value.startswith("identity:") and not os.path.isabs(value):
                value = str(base / value)
        try:
            cfg.set(key, value)
        except ConfigError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    return cfg


def load_config(path: str | os.PathLike, cfg: RunConfig | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, cfg, base=path.parent)
