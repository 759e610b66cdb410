"""Pilot codebooks, activity draws, received-signal synthesis, datasets.

One dataset holds a single topology and large-scale map plus many access
slots.  Every random draw is keyed off the dataset master seed so slot
synthesis can run in any order (or in parallel) without changing results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import channel
from .channel import (GeometryConfig, LargeScaleMap, NetworkTopology,
                      SmallScaleBlock, PER_SLOT, STATIC_BLOCK)
from .errors import ConfigError, MismatchError
from .seeds import derive_seed, rng_for

DATASET_FORMAT_VERSION = 1


@dataclass(frozen=True)
class PilotCodebook:
    """Non-orthogonal Gaussian pilot matrix S of shape (L, K).

    Each column is rescaled to squared norm L so the per-device transmit
    power rho_k alone carries the power budget.
    """

    s_matrix: np.ndarray

    @property
    def pilot_len(self) -> int:
        return self.s_matrix.shape[0]

    @property
    def num_devices(self) -> int:
        return self.s_matrix.shape[1]


@dataclass(frozen=True)
class ActivityVector:
    """Binary activity indicators for the K devices in one slot."""

    a: np.ndarray
    epsilon: float

    @property
    def active_set(self) -> np.ndarray:
        return np.flatnonzero(self.a)


@dataclass(frozen=True)
class AccessSlot:
    """One random-access slot: activity plus per-AP received blocks.

    received has shape (M, L, N); tx_power_w has one entry per device.
    """

    activity: ActivityVector
    received: np.ndarray
    tx_power_w: np.ndarray
    noise_var_w: float


@dataclass
class ScenarioConfig:
    """Everything needed to synthesize slots on top of a geometry."""

    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    num_antennas: int = 2
    pilot_len: int = 40
    epsilon: float = 0.1
    tx_power_w: float = 0.2
    noise_power_dbm: float = -109.0
    shadow_sigma_db: float = 1.0
    fading_mode: str = PER_SLOT
    static_block_len: int = 10

    def __post_init__(self):
        if self.num_antennas < 1 or self.pilot_len < 1:
            raise ConfigError("num_antennas and pilot_len must be >= 1")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.tx_power_w <= 0:
            raise ConfigError("tx_power_w must be > 0")
        if self.fading_mode not in (PER_SLOT, STATIC_BLOCK):
            raise ConfigError(f"unknown fading_mode {self.fading_mode!r}")
        if self.static_block_len < 1:
            raise ConfigError("static_block_len must be >= 1")

    @property
    def noise_var_w(self) -> float:
        """Noise variance in watts from the dBm figure."""
        return 10.0 ** (self.noise_power_dbm / 10.0) / 1000.0


@dataclass
class AccessSlotDataset:
    """A complete simulated dataset sharing one topology and beta map."""

    codebook: PilotCodebook
    topology: NetworkTopology
    lsf_map: LargeScaleMap
    slots: list[AccessSlot]
    scenario: ScenarioConfig
    master_seed: int
    format_version: int = DATASET_FORMAT_VERSION

    @property
    def num_slots(self) -> int:
        return len(self.slots)

    def dims(self) -> tuple[int, int, int, int]:
        """(M, N, K, L)."""
        return (self.topology.num_aps, self.scenario.num_antennas,
                self.topology.num_devices, self.codebook.pilot_len)


def generate_pilots(pilot_len: int, num_devices: int, seed: int) -> PilotCodebook:
    """i.i.d. CN(0,1) pilot matrix with columns rescaled to norm^2 = L."""
    if pilot_len < 1 or num_devices < 1:
        raise ConfigError("pilot_len and num_devices must be >= 1")
    rng = rng_for(seed, "pilots")
    s = (rng.standard_normal((pilot_len, num_devices))
         + 1j * rng.standard_normal((pilot_len, num_devices))) / np.sqrt(2.0)
    norms = np.linalg.norm(s, axis=0)
    s = s * (np.sqrt(pilot_len) / norms)
    return PilotCodebook(s_matrix=s)


def draw_activity(num_devices: int, epsilon: float, seed: int) -> ActivityVector:
    """i.i.d. Bernoulli(epsilon) activity indicators."""
    if not 0.0 < epsilon < 1.0:
        raise ConfigError(f"epsilon must lie in (0, 1), got {epsilon}")
    rng = rng_for(seed, "activity")
    a = (rng.random(num_devices) < epsilon).astype(np.uint8)
    return ActivityVector(a=a, epsilon=float(epsilon))


def synthesize_slot(codebook: PilotCodebook, activity: ActivityVector,
                    lsf_map: LargeScaleMap, ssf_block: SmallScaleBlock,
                    tx_power_w: np.ndarray, noise_var_w: float,
                    seed: int) -> AccessSlot:
    """Received blocks Y_m = S D_a D_rho^(1/2) G_m + W_m for every AP.

    Noise is i.i.d. CN(0, noise_var_w) per entry, drawn from the given
    seed; the fading block is used as passed in.
    """
    s = codebook.s_matrix
    l_len, k = s.shape
    m, n, k_h = ssf_block.h.shape
    tx_power_w = np.asarray(tx_power_w, dtype=float)
    if k_h != k or lsf_map.beta_db.shape != (m, k) or tx_power_w.shape != (k,):
        raise MismatchError(
            f"inconsistent dims: pilots ({l_len},{k}), fading ({m},{n},{k_h}), "
            f"beta {lsf_map.beta_db.shape}, power {tx_power_w.shape}")
    if np.any(tx_power_w <= 0) or noise_var_w < 0:
        raise ConfigError("tx_power_w must be > 0 and noise_var_w >= 0")

    gains = channel.channel_gains(lsf_map, ssf_block)        # (M, N, K)
    amp = activity.a * np.sqrt(tx_power_w)                   # (K,)
    x = amp[None, :, None] * np.transpose(gains, (0, 2, 1))  # (M, K, N)
    signal = np.einsum("lk,mkn->mln", s, x)                  # (M, L, N)

    if noise_var_w > 0:
        rng = rng_for(seed, "noise")
        w = (rng.standard_normal(signal.shape)
             + 1j * rng.standard_normal(signal.shape)) * np.sqrt(noise_var_w / 2.0)
        signal = signal + w
    return AccessSlot(activity=activity, received=signal,
                      tx_power_w=tx_power_w, noise_var_w=float(noise_var_w))


def dominant_ap_snr(lsf_map: LargeScaleMap, tx_power_w,
                    noise_var_w: float) -> tuple[np.ndarray, float]:
    """Per-device dominant-AP SNR in dB and the 5th-percentile target.

    SNR_k = rho_k * max_m beta_linear[m, k] / sigma^2, per symbol on a
    single antenna.  The target is the order statistic at which 95% of
    devices meet or exceed the SNR.
    """
    tx = np.broadcast_to(np.asarray(tx_power_w, dtype=float),
                         (lsf_map.beta_db.shape[1],))
    best_gain = np.max(lsf_map.beta_linear, axis=0)
    snr_db = 10.0 * np.log10(tx * best_gain / noise_var_w)
    idx = max(0, math.ceil(0.05 * snr_db.size) - 1)
    target_db = float(np.sort(snr_db)[idx])
    return snr_db, target_db


def _slot_ssf(cfg: ScenarioConfig, topology: NetworkTopology, master_seed: int,
              slot_index: int) -> SmallScaleBlock:
    """Fading block for one slot respecting the configured mode."""
    if cfg.fading_mode == STATIC_BLOCK:
        block = slot_index // cfg.static_block_len
        seed = derive_seed(master_seed, "ssf-block", block)
    else:
        seed = derive_seed(master_seed, "ssf-slot", slot_index)
    return channel.draw_small_scale(topology.num_aps, cfg.num_antennas,
                                    topology.num_devices, cfg.fading_mode, seed)


def build_scene(cfg: ScenarioConfig, master_seed: int):
    """Topology, beta map, and pilots shared by every slot of a dataset."""
    topology = channel.place_network(cfg.geometry,
                                     derive_seed(master_seed, "topology"))
    lsf = channel.large_scale_map(topology, cfg.shadow_sigma_db,
                                  derive_seed(master_seed, "lsf"))
    codebook = generate_pilots(cfg.pilot_len, cfg.geometry.num_devices,
                               derive_seed(master_seed, "codebook"))
    return topology, lsf, codebook


def stream_slots(cfg: ScenarioConfig, master_seed: int, num_slots: int,
                 topology: NetworkTopology | None = None,
                 lsf: LargeScaleMap | None = None,
                 codebook: PilotCodebook | None = None,
                 start: int = 0) -> Iterator[AccessSlot]:
    """Yield slots one at a time without holding the whole dataset.

    Slot i depends only on (master_seed, i), so any contiguous or
    scattered subset reproduces exactly the slots a full run would make.
    """
    if topology is None or lsf is None or codebook is None:
        topology, lsf, codebook = build_scene(cfg, master_seed)
    tx = np.full(topology.num_devices, cfg.tx_power_w)
    for i in range(start, start + num_slots):
        activity = draw_activity(topology.num_devices, cfg.epsilon,
                                 derive_seed(master_seed, "activity", i))
        ssf = _slot_ssf(cfg, topology, master_seed, i)
        yield synthesize_slot(codebook, activity, lsf, ssf, tx,
                              cfg.noise_var_w, derive_seed(master_seed, "noise", i))


def generate_dataset(cfg: ScenarioConfig, master_seed: int,
                     num_slots: int) -> AccessSlotDataset:
    """Materialize a full dataset (topology, beta map, pilots, slots)."""
    if num_slots < 1:
        raise ConfigError("num_slots must be >= 1")
    topology, lsf, codebook = build_scene(cfg, master_seed)
    slots = list(stream_slots(cfg, master_seed, num_slots,
                              topology=topology, lsf=lsf, codebook=codebook))
    return AccessSlotDataset(codebook=codebook, topology=topology, lsf_map=lsf,
                             slots=slots, scenario=cfg, master_seed=master_seed)
