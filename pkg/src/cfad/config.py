"""Flat `key = value` run configuration.

One file drives every experiment: geometry and scenario parameters,
training, solver, and evaluation knobs.  Keys are case sensitive,
unknown keys are rejected, and every error names the offending key and
line.  Defaults reproduce the reference cell-free operating point.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace

from .channel import CELL_FREE, CELLULAR, PER_SLOT, STATIC_BLOCK, GeometryConfig
from .errors import ConfigError
from .scenario import ScenarioConfig
from .slp import ModelConfig, TrainConfig
from .solvers import AMP, FISTA, ISTA, SolverConfig


@dataclass
class RunConfig:
    # Geometry / system
    area_side_m: float = 1000.0
    edge_margin_m: float = 50.0
    min_device_ap_dist_m: float = 10.0
    min_ap_spacing_m: float = 15.0
    ap_height_m: float = 12.0
    device_height_m: float = 1.5
    carrier_freq_hz: float = 900.0e6
    num_aps: int = 20
    num_devices: int = 100
    num_antennas: int = 2
    topology_mode: str = CELL_FREE
    # Scenario
    pilot_len: int = 40
    cluster_size: int = 4
    epsilon: float = 0.1
    tx_power_w: float = 0.2
    noise_power_dbm: float = -109.0
    shadow_sigma_db: float = 1.0
    fading_mode: str = PER_SLOT
    static_block_len: int = 10
    num_slots: int = 50000
    eval_slots: int = 20000
    snr_power_control: bool = False
    # Coherence bookkeeping (validation only)
    coherence_time_s: float = 1.0e-3
    coherence_bandwidth_hz: float = 200.0e3
    reserved_fraction: float = 0.2
    # Detector / training
    hidden_width: int = 512
    hidden_layers: int = 1
    learning_rate: float = 1.0e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1.0e-8
    batch_size: int = 256
    max_epochs: int = 200
    early_stop_patience: int = 10
    validation_fraction: float = 0.1
    centralized_devices_per_slot: int = 1
    decentralized_shared_model: bool = True
    # Baseline solvers
    ista_iters: int = 235
    fista_iters: int = 100
    amp_iters: int = 18
    solver_lambda_scale: float = 0.1
    amp_alpha: float = 1.4
    solver_aggregation: str = "cluster"
    # Evaluation
    num_taus: int = 501
    majority_strict: bool = False
    bench_reps: int = 7
    bench_warmup: int = 2
    render_figures: bool = True

    def geometry(self) -> GeometryConfig:
        return GeometryConfig(
            area_side_m=self.area_side_m, edge_margin_m=self.edge_margin_m,
            min_device_ap_dist_m=self.min_device_ap_dist_m,
            min_ap_spacing_m=self.min_ap_spacing_m,
            ap_height_m=self.ap_height_m, device_height_m=self.device_height_m,
            carrier_freq_hz=self.carrier_freq_hz, num_aps=self.num_aps,
            num_devices=self.num_devices, topology_mode=self.topology_mode)

    def scenario(self) -> ScenarioConfig:
        return ScenarioConfig(
            geometry=self.geometry(), num_antennas=self.num_antennas,
            pilot_len=self.pilot_len, epsilon=self.epsilon,
            tx_power_w=self.tx_power_w, noise_power_dbm=self.noise_power_dbm,
            shadow_sigma_db=self.shadow_sigma_db, fading_mode=self.fading_mode,
            static_block_len=self.static_block_len,
            snr_power_control=self.snr_power_control)

    def model_config(self, strategy: str) -> ModelConfig:
        cluster_inputs = 1 if strategy == "decentralized" else self.cluster_size
        return ModelConfig(input_dim=2 * self.pilot_len * self.num_antennas,
                           hidden_layers=self.hidden_layers,
                           hidden_width=self.hidden_width,
                           num_devices=self.num_devices,
                           cluster_inputs=cluster_inputs)

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate, adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2, adam_epsilon=self.adam_epsilon,
            batch_size=self.batch_size, max_epochs=self.max_epochs,
            early_stop_patience=self.early_stop_patience,
            validation_fraction=self.validation_fraction, seed=seed)

    def solver_config(self, algorithm: str,
                      max_iters: int | None = None) -> SolverConfig:
        if max_iters is None:
            max_iters = {ISTA: self.ista_iters, FISTA: self.fista_iters,
                         AMP: self.amp_iters}.get(algorithm)
        return SolverConfig(algorithm=algorithm, max_iters=max_iters,
                            lambda_scale=self.solver_lambda_scale,
                            amp_alpha=self.amp_alpha)

    def validate(self) -> list[str]:
        """Cross-field checks; returns human-readable warnings."""
        self.geometry()
        self.scenario()
        warnings = []
        symbols = self.coherence_time_s * self.coherence_bandwidth_hz
        budget = self.reserved_fraction * symbols
        if self.pilot_len > budget:
            warnings.append(
                f"pilot_len {self.pilot_len} exceeds the reserved coherence "
                f"budget {budget:.0f} symbols "
                f"({self.reserved_fraction:.0%} of {symbols:.0f})")
        return warnings

    def to_text(self) -> str:
        """Canonical echo; parsing it back reproduces this config."""
        lines = ["# effective configuration"]
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool):
                text = "true" if value else "false"
            elif isinstance(value, float):
                text = repr(value)
            else:
                text = str(value)
            lines.append(f"{f.name} = {text}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()[:16]


def _parse_bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


_POSITIVE_INT = (lambda v: v >= 1, "must be >= 1")
_POSITIVE = (lambda v: v > 0, "must be > 0")
_NONNEGATIVE = (lambda v: v >= 0, "must be >= 0")
_UNIT_OPEN = (lambda v: 0 < v < 1, "must lie in (0, 1)")
_UNIT_HALF_OPEN = (lambda v: 0 <= v < 1, "must lie in [0, 1)")


def _choice(*options):
    return (lambda v: v in options, f"must be one of {', '.join(options)}")


# key -> (value parser, range check or None)
_KEY_RULES: dict[str, tuple] = {
    "area_side_m": (float, _POSITIVE),
    "edge_margin_m": (float, _POSITIVE),
    "min_device_ap_dist_m": (float, _POSITIVE),
    "min_ap_spacing_m": (float, _POSITIVE),
    "ap_height_m": (float, _POSITIVE),
    "device_height_m": (float, _POSITIVE),
    "carrier_freq_hz": (float, _POSITIVE),
    "num_aps": (int, _POSITIVE_INT),
    "num_devices": (int, _POSITIVE_INT),
    "num_antennas": (int, _POSITIVE_INT),
    "topology_mode": (str, _choice(CELL_FREE, CELLULAR)),
    "pilot_len": (int, _POSITIVE_INT),
    "cluster_size": (int, _POSITIVE_INT),
    "epsilon": (float, _UNIT_OPEN),
    "tx_power_w": (float, _POSITIVE),
    "noise_power_dbm": (float, None),
    "shadow_sigma_db": (float, _NONNEGATIVE),
    "fading_mode": (str, _choice(PER_SLOT, STATIC_BLOCK)),
    "static_block_len": (int, _POSITIVE_INT),
    "num_slots": (int, _POSITIVE_INT),
    "eval_slots": (int, _POSITIVE_INT),
    "snr_power_control": (_parse_bool, None),
    "coherence_time_s": (float, _POSITIVE),
    "coherence_bandwidth_hz": (float, _POSITIVE),
    "reserved_fraction": (float, _UNIT_OPEN),
    "hidden_width": (int, _POSITIVE_INT),
    "hidden_layers": (int, _POSITIVE_INT),
    "learning_rate": (float, _NONNEGATIVE),
    "adam_beta1": (float, _UNIT_HALF_OPEN),
    "adam_beta2": (float, _UNIT_HALF_OPEN),
    "adam_epsilon": (float, _POSITIVE),
    "batch_size": (int, _POSITIVE_INT),
    "max_epochs": (int, _POSITIVE_INT),
    "early_stop_patience": (int, _POSITIVE_INT),
    "validation_fraction": (float, _UNIT_HALF_OPEN),
    "centralized_devices_per_slot": (int, _POSITIVE_INT),
    "decentralized_shared_model": (_parse_bool, None),
    "ista_iters": (int, _POSITIVE_INT),
    "fista_iters": (int, _POSITIVE_INT),
    "amp_iters": (int, _POSITIVE_INT),
    "solver_lambda_scale": (float, _NONNEGATIVE),
    "amp_alpha": (float, _POSITIVE),
    "solver_aggregation": (str, _choice("cluster", "dominant")),
    "num_taus": (int, (lambda v: v >= 2, "must be >= 2")),
    "majority_strict": (_parse_bool, None),
    "bench_reps": (int, (lambda v: v >= 5, "must be >= 5")),
    "bench_warmup": (int, _NONNEGATIVE),
    "render_figures": (_parse_bool, None),
}


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    """Parse flat `key = value` lines with # comments into a RunConfig."""
    values: dict[str, object] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected `key = value`, "
                              f"got {raw_line.strip()!r}")
        key, _, raw_value = line.partition("=")
        key = key.strip()
        raw_value = raw_value.strip()
        if key not in _KEY_RULES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        parser, rule = _KEY_RULES[key]
        try:
            value = parser(raw_value)
        except ValueError:
            raise ConfigError(
                f"{source}:{lineno}: bad value {raw_value!r} for key {key!r} "
                f"(expected {getattr(parser, '__name__', 'value')})") from None
        if rule is not None and not rule[0](value):
            raise ConfigError(
                f"{source}:{lineno}: key {key!r} {rule[1]}, got {raw_value}")
        values[key] = value

    cfg = replace(RunConfig(), **values)
    try:
        cfg.validate()
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return cfg


def parse_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    return parse_config_text(text, source=str(path))
