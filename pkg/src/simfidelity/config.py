"""Machine configuration.

Defaults reproduce the base 4-core setup: 10-stage in-order cores at 2 GHz
with a 256-entry BTB, tournament predictor and 64-entry RAS; private 32 KB
4-way L1 I/D caches (1-cycle hit, blocking); a shared 2 MB 8-way MSI L2
(1-cycle tag, 8-cycle data, 8 requests in flight); DRAM with 120-cycle latency,
12 requests in flight and 12.8 GB/s peak bandwidth.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

KiB = 1024
MiB = 1024 * KiB

POLICIES = ("lru", "dip", "drrip")
PREDICTORS = ("tournament", "path_neural", "tage", "perfect", "static")


class ConfigError(ValueError):
    """Validation failure; the message starts with the offending field path."""


def _pow2(x) -> bool:
    return isinstance(x, int) and x > 0 and (x & (x - 1)) == 0


@dataclass
class CacheGeometry:
    size_bytes: int
    ways: int
    line_bytes: int = 64

    @property
    def sets(self) -> int:
        return self.size_bytes // (self.ways * self.line_bytes)

    def validate(self, path: str) -> None:
        for name in ("size_bytes", "ways", "line_bytes"):
            if not _pow2(getattr(self, name)):
                raise ConfigError(f"{path}.{name}: must be a power of two, got {getattr(self, name)!r}")
        if self.sets < 1:
            raise ConfigError(f"{path}: size_bytes too small for {self.ways} ways of {self.line_bytes}B")


@dataclass
class MemoryConfig:
    l1i: CacheGeometry = field(default_factory=lambda: CacheGeometry(32 * KiB, 4))
    l1d: CacheGeometry = field(default_factory=lambda: CacheGeometry(32 * KiB, 4))
    l2: CacheGeometry = field(default_factory=lambda: CacheGeometry(2 * MiB, 8))
    l1_hit_latency: int = 1
    transit_latency: int = 1
    l2_tag_latency: int = 1
    l2_data_latency: int = 8
    l2_mshrs: int = 8
    dram_latency: int = 120
    dram_max_inflight: int = 12
    dram_bandwidth_gbps: float = 12.8
    # extra cycles when the directory must downgrade or invalidate remote copies
    coherence_latency: int = 2
    # all-hit stub: every access completes in l1_hit_latency cycles
    ideal: bool = False

    def dram_slot_cycles(self, freq_ghz: float, line_bytes: int) -> int:
        bytes_per_cycle = self.dram_bandwidth_gbps / freq_ghz
        return max(1, round(line_bytes / bytes_per_cycle))

    def validate(self, path: str) -> None:
        for name in ("l1i", "l1d", "l2"):
            getattr(self, name).validate(f"{path}.{name}")
        if len({self.l1i.line_bytes, self.l1d.line_bytes, self.l2.line_bytes}) != 1:
            raise ConfigError(f"{path}: all caches must share one line size")
        for name in ("l1_hit_latency", "transit_latency", "l2_tag_latency", "l2_data_latency",
                     "l2_mshrs", "dram_latency", "dram_max_inflight"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"{path}.{name}: must be a positive integer, got {v!r}")
        if not isinstance(self.coherence_latency, int) or self.coherence_latency < 0:
            raise ConfigError(f"{path}.coherence_latency: must be a non-negative integer")
        if not self.dram_bandwidth_gbps > 0:
            raise ConfigError(f"{path}.dram_bandwidth_gbps: must be positive")


@dataclass
class ReplacementConfig:
    policy: str = "lru"
    epsilon: float = 1 / 32
    psel_bits: int = 10
    sdms_per_core: int = 2
    sets_per_sdm: int = 32
    leader_scheme: str = "stride"

    def validate(self, path: str) -> None:
        if self.policy not in POLICIES:
            raise ConfigError(f"{path}.policy: must be one of {POLICIES}, got {self.policy!r}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError(f"{path}.epsilon: must lie in [0, 1]")
        if not isinstance(self.psel_bits, int) or not 1 <= self.psel_bits <= 30:
            raise ConfigError(f"{path}.psel_bits: must be an integer in [1, 30]")
        if self.sdms_per_core != 2:
            raise ConfigError(f"{path}.sdms_per_core: only 2 (one per insertion variant) is supported")
        if not isinstance(self.sets_per_sdm, int) or self.sets_per_sdm < 1:
            raise ConfigError(f"{path}.sets_per_sdm: must be a positive integer")
        if self.leader_scheme != "stride":
            raise ConfigError(f"{path}.leader_scheme: only 'stride' is implemented")


@dataclass
class PredictorConfig:
    kind: str = "tournament"
    storage_budget_bytes: int = 4096
    btb_entries: int = 256
    ras_depth: int = 64
    # tournament
    local_history_entries: int = 1024
    local_history_bits: int = 10
    local_counter_bits: int = 3
    global_history_bits: int = 12
    # path-based neural
    neural_history: int = 24
    neural_rows: int = 184
    neural_weight_bits: int = 7
    # TAGE
    tage_base_entries: int = 2048
    tage_entries: int = 512
    tage_tag_bits: int = 8
    tage_histories: tuple = (5, 15, 44, 130)

    def storage_bits(self) -> int:
        """Modeled direction-predictor storage (tables plus history registers)."""
        if self.kind == "tournament":
            g = 1 << self.global_history_bits
            return (self.local_history_entries * self.local_history_bits
                    + (1 << self.local_history_bits) * self.local_counter_bits
                    + g * 2 + g * 2 + self.global_history_bits)
        if self.kind == "path_neural":
            h = self.neural_history
            row_bits = max(1, (self.neural_rows - 1).bit_length())
            return self.neural_rows * (h + 1) * self.neural_weight_bits + h + h * row_bits
        if self.kind == "tage":
            n = len(self.tage_histories)
            entry = self.tage_tag_bits + 3 + 2
            return (self.tage_base_entries * 2 + n * self.tage_entries * entry + max(self.tage_histories)
                    + 4)
        return 0

    def validate(self, path: str) -> None:
        if self.kind not in PREDICTORS:
            raise ConfigError(f"{path}.kind: must be one of {PREDICTORS}, got {self.kind!r}")
        for name in ("btb_entries", "ras_depth", "local_history_entries", "tage_base_entries",
                     "tage_entries"):
            if not _pow2(getattr(self, name)):
                raise ConfigError(f"{path}.{name}: must be a power of two")
        if not 1 <= self.local_history_bits <= 16 or not 1 <= self.global_history_bits <= 20:
            raise ConfigError(f"{path}: history bits out of range")
        if self.neural_history < 1 or self.neural_rows < 1 or not 2 <= self.neural_weight_bits <= 16:
            raise ConfigError(f"{path}: neural geometry out of range")
        hist = tuple(self.tage_histories)
        if not 1 <= len(hist) <= 8 or list(hist) != sorted(hist) or hist[0] < 1 or hist[-1] > 255:
            raise ConfigError(f"{path}.tage_histories: 1 to 8 increasing lengths in [1, 255]")
        if not 4 <= self.tage_tag_bits <= 16:
            raise ConfigError(f"{path}.tage_tag_bits: must lie in [4, 16]")


@dataclass
class MachineConfig:
    n_cores: int = 4
    freq_ghz: float = 2.0
    memory: MemoryConfig = field(default_factory=MemoryConfig)
    replacement: ReplacementConfig = field(default_factory=ReplacementConfig)
    predictor: PredictorConfig = field(default_factory=PredictorConfig)

    def validate(self) -> "MachineConfig":
        if not isinstance(self.n_cores, int) or not 1 <= self.n_cores <= 16:
            raise ConfigError(f"n_cores: must be an integer in [1, 16], got {self.n_cores!r}")
        if not self.freq_ghz > 0:
            raise ConfigError("freq_ghz: must be positive")
        self.memory.validate("memory")
        self.replacement.validate("replacement")
        self.predictor.validate("predictor")
        return self

    @property
    def dram_slot_cycles(self) -> int:
        return self.memory.dram_slot_cycles(self.freq_ghz, self.memory.l2.line_bytes)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "MachineConfig":
        return _build(cls, data, "").validate()

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def with_overrides(self, data: Mapping[str, Any]) -> "MachineConfig":
        merged = _merge(self.to_dict(), data)
        return MachineConfig.from_dict(merged)

    @classmethod
    def load(cls, path) -> "MachineConfig":
        return cls.from_dict(load_mapping(path))


def _merge(base: dict, over: Mapping) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _build(cls, data, path):
    if not isinstance(data, Mapping):
        raise ConfigError(f"{path or '<root>'}: expected a table, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        sub = f"{path}.{key}" if path else key
        if key not in fields:
            raise ConfigError(f"{sub}: unknown field")
        ftype = fields[key].type
        target = {"CacheGeometry": CacheGeometry, "MemoryConfig": MemoryConfig,
                  "ReplacementConfig": ReplacementConfig,
                  "PredictorConfig": PredictorConfig}.get(ftype if isinstance(ftype, str) else ftype.__name__)
        if target is not None:
            kwargs[key] = _build(target, value, sub)
        elif key == "tage_histories":
            kwargs[key] = tuple(value)
        else:
            default = fields[key].default
            if isinstance(default, bool) and not isinstance(value, bool):
                raise ConfigError(f"{sub}: expected a boolean, got {value!r}")
            if isinstance(default, int) and not isinstance(default, bool) and (
                    isinstance(value, bool) or not isinstance(value, int)):
                raise ConfigError(f"{sub}: expected an integer, got {value!r}")
            if isinstance(default, float) and not isinstance(value, (int, float)):
                raise ConfigError(f"{sub}: expected a number, got {value!r}")
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{path or '<root>'}: {exc}") from None


def load_mapping(path) -> dict:
    """Read a TOML or JSON file into a dict."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        return json.loads(text)
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    return tomllib.loads(text)


def base_setup(n_cores: int = 4) -> MachineConfig:
    return MachineConfig(n_cores=n_cores).validate()
