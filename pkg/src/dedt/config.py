"""Tracker configuration and its flat ``key=value`` text form."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields

MODES = ("full", "bag", "art", "aux_first", "aux_short", "aux_isolated")
LOCALIZATION = ("confidence", "vote")


class ConfigError(ValueError):
    pass


@dataclass
class TrackerConfig:
    C: int = 15
    k: int = 23
    n: int = 1000
    m: int = 80
    m_prime: int = 250
    tau_u: float = 0.54
    tau_l: float = -0.41
    delta: int = 10
    member_capacity: int = 2000
    R: int = 10
    search_ratio: float = 0.25  # translation std as a fraction of max(w, h)
    search_sigma_s: float = 0.05  # log-scale std
    mode: str = "full"
    delta_override: float | None = None
    seed: int = 0
    patch_size: int = 32
    cell_size: int = 8
    init_pos_iou: float = 0.7
    init_neg_iou: float = 0.3
    init_member_fraction: float = 0.5
    localization: str = "confidence"
    aux_lambda: float = 1e-3
    aux_epochs: int = 50

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {', '.join(MODES)}")
        if self.localization not in LOCALIZATION:
            raise ConfigError(f"unknown localization {self.localization!r}")
        if self.C < 2:
            raise ConfigError("C must be at least 2")
        if self.k < 1 or self.k % 2 == 0:
            raise ConfigError("k must be a positive odd integer")
        if self.n < 1:
            raise ConfigError("n must be at least 1")
        if self.m < 0 or self.m_prime < 1 or self.R < 1 or self.delta < 1:
            raise ConfigError("m >= 0, m_prime >= 1, R >= 1 and delta >= 1 are required")
        if self.member_capacity < self.k:
            raise ConfigError("member_capacity must be at least k")
        if not -1.0 < self.tau_l < self.tau_u < 1.0:
            raise ConfigError("thresholds must satisfy -1 < tau_l < tau_u < 1")
        if self.delta_override is not None and not 0.0 <= self.delta_override <= 1.0:
            raise ConfigError("delta_override must lie in [0, 1]")
        if self.search_ratio < 0 or self.search_sigma_s < 0:
            raise ConfigError("search deviations must be non-negative")
        if not 0.0 < self.init_member_fraction <= 1.0:
            raise ConfigError("init_member_fraction must lie in (0, 1]")
        if not 0.0 <= self.init_neg_iou < self.init_pos_iou <= 1.0:
            raise ConfigError("initialisation IoU bands must satisfy 0 <= neg < pos <= 1")
        if self.patch_size % self.cell_size or self.patch_size // self.cell_size < 2:
            raise ConfigError("patch_size must be a multiple of cell_size with at least 2 cells")

    @property
    def thresholds(self) -> tuple[float, float]:
        """(tau_l, tau_u), replaced by (-delta, +delta) when overridden."""
        if self.delta_override is not None:
            return -self.delta_override, self.delta_override
        return self.tau_l, self.tau_u

    def replace(self, **changes) -> "TrackerConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            lines.append(f"{f.name}={'none' if value is None else value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, base: "TrackerConfig | None" = None) -> "TrackerConfig":
        values = (base or cls()).to_dict()
        types = {f.name: f.type for f in fields(cls)}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in types:
                raise ConfigError(f"line {lineno}: unknown config key {key!r}")
            values[key] = _coerce(key, value, types[key], lineno)
        try:
            return cls(**values)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path: str, base: "TrackerConfig | None" = None) -> "TrackerConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read(), base)


def _coerce(key: str, value: str, type_name: str, lineno: int):
    try:
        if "None" in type_name:
            if value.lower() in ("none", ""):
                return None
            return float(value)
        if type_name == "int":
            return int(value)
        if type_name == "float":
            return float(value)
        return value
    except ValueError:
        raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from None
