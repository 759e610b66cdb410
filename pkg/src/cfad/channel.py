"""Network geometry and 3GPP UMa-LOS channel generation.

Places access points and devices in a square service area, evaluates the
dual-slope UMa line-of-sight path loss with log-normal shadowing, and
draws unit-variance Rayleigh small-scale fading.  Large-scale attenuation
is kept in positive dB; the linear power gain is 10^(-dB/10).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, MismatchError, PlacementError
from .seeds import rng_for

SPEED_OF_LIGHT = 3.0e8  # m/s

# Rejection-sampling budget per placed point before giving up.
_MAX_PLACEMENT_RETRIES = 1_000_000

PER_SLOT = "per_slot"
STATIC_BLOCK = "static_block"

CELL_FREE = "cell_free"
CELLULAR = "cellular"


@dataclass(frozen=True)
class GeometryConfig:
    """Service-area geometry and node counts."""

    area_side_m: float = 1000.0
    edge_margin_m: float = 50.0
    min_device_ap_dist_m: float = 10.0
    min_ap_spacing_m: float = 15.0
    ap_height_m: float = 12.0
    device_height_m: float = 1.5
    carrier_freq_hz: float = 900.0e6
    num_aps: int = 20
    num_devices: int = 100
    topology_mode: str = CELL_FREE

    def __post_init__(self):
        for name in ("area_side_m", "edge_margin_m", "min_device_ap_dist_m",
                     "min_ap_spacing_m", "ap_height_m", "device_height_m",
                     "carrier_freq_hz"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.area_side_m <= 2 * self.edge_margin_m:
            raise ConfigError(
                f"area_side_m ({self.area_side_m}) must exceed twice the edge "
                f"margin ({self.edge_margin_m})")
        if self.num_aps < 1 or self.num_devices < 1:
            raise ConfigError("num_aps and num_devices must be >= 1")
        if self.topology_mode not in (CELL_FREE, CELLULAR):
            raise ConfigError(f"unknown topology_mode {self.topology_mode!r}")
        if self.topology_mode == CELLULAR and self.num_aps != 1:
            raise ConfigError("cellular mode requires num_aps = 1")


@dataclass(frozen=True)
class NetworkTopology:
    """Fixed AP and device coordinates for one scenario realization."""

    ap_positions: np.ndarray      # (M, 2) meters
    device_positions: np.ndarray  # (K, 2) meters
    geometry: GeometryConfig

    @property
    def num_aps(self) -> int:
        return self.ap_positions.shape[0]

    @property
    def num_devices(self) -> int:
        return self.device_positions.shape[0]

    def device_ap_distances(self) -> np.ndarray:
        """Horizontal AP-to-device distance matrix, shape (M, K)."""
        diff = self.ap_positions[:, None, :] - self.device_positions[None, :, :]
        return np.sqrt(np.sum(diff ** 2, axis=2))


@dataclass(frozen=True)
class LargeScaleMap:
    """Per-link large-scale attenuation (path loss + shadowing).

    beta_db holds positive attenuation in dB; beta_linear is the matching
    power gain 10^(-beta_db/10).
    """

    beta_db: np.ndarray       # (M, K)
    shadowing_db: np.ndarray  # (M, K)
    shadow_sigma_db: float

    @property
    def beta_linear(self) -> np.ndarray:
        return 10.0 ** (-self.beta_db / 10.0)


@dataclass(frozen=True)
class SmallScaleBlock:
    """Unit-variance Rayleigh fading tensor, shape (M, N, K)."""

    h: np.ndarray
    fading_mode: str = PER_SLOT


def breakpoint_distance(cfg: GeometryConfig) -> float:
    """Dual-slope breakpoint distance using effective antenna heights."""
    if cfg.ap_height_m <= 1.0 or cfg.device_height_m <= 1.0:
        raise ConfigError("antenna heights must exceed 1 m for the breakpoint formula")
    return (4.0 * (cfg.ap_height_m - 1.0) * (cfg.device_height_m - 1.0)
            * cfg.carrier_freq_hz / SPEED_OF_LIGHT)


def path_loss_db(d_2d, cfg: GeometryConfig):
    """UMa-LOS path loss in dB for horizontal distance(s) d_2d.

    Valid up to 5 km; distances below 10 m are clamped to the 10 m value
    (placement constraints already forbid them, this guards stress tests).
    Accepts scalars or arrays.
    """
    d = np.asarray(d_2d, dtype=float)
    if np.any(d <= 0):
        raise ConfigError("d_2d must be positive")
    if np.any(d > 5000.0):
        raise ConfigError("d_2d beyond the 5 km model validity range")
    d = np.maximum(d, 10.0)

    dh = cfg.ap_height_m - cfg.device_height_m
    d_3d = np.sqrt(d ** 2 + dh ** 2)
    fc_ghz = cfg.carrier_freq_hz / 1e9
    d_bp = breakpoint_distance(cfg)

    pl1 = 28.0 + 22.0 * np.log10(d_3d) + 20.0 * np.log10(fc_ghz)
    pl2 = (28.0 + 40.0 * np.log10(d_3d) + 20.0 * np.log10(fc_ghz)
           - 9.0 * np.log10(d_bp ** 2 + dh ** 2))
    out = np.where(d <= d_bp, pl1, pl2)
    return float(out) if np.ndim(d_2d) == 0 else out


def _draw_point(rng, lo, hi, accept, label):
    for _ in range(_MAX_PLACEMENT_RETRIES):
        p = rng.uniform(lo, hi, size=2)
        if accept(p):
            return p
    raise PlacementError(
        f"could not place {label} after {_MAX_PLACEMENT_RETRIES} attempts; "
        "constraints too tight for the configured area")


def place_network(cfg: GeometryConfig, seed: int) -> NetworkTopology:
    """Draw AP and device coordinates satisfying all spacing constraints.

    APs are uniform in the margin-shrunk square with a minimum pairwise
    spacing (cell-free) or at the exact area center (cellular).  Devices
    are uniform in the full square, at least min_device_ap_dist_m from
    every AP.  Deterministic for a given (cfg, seed).
    """
    rng = rng_for(seed, "placement")
    d_side = cfg.area_side_m

    if cfg.topology_mode == CELLULAR:
        aps = np.array([[d_side / 2.0, d_side / 2.0]])
    else:
        lo, hi = cfg.edge_margin_m, d_side - cfg.edge_margin_m
        placed: list[np.ndarray] = []
        for i in range(cfg.num_aps):
            def far_enough(p, placed=placed):
                return all(np.hypot(*(p - q)) >= cfg.min_ap_spacing_m for q in placed)
            placed.append(_draw_point(rng, lo, hi, far_enough, f"AP {i}"))
        aps = np.array(placed)

    devices = np.empty((cfg.num_devices, 2))
    for k in range(cfg.num_devices):
        def clear_of_aps(p):
            return np.min(np.hypot(aps[:, 0] - p[0], aps[:, 1] - p[1])) \
                >= cfg.min_device_ap_dist_m
        devices[k] = _draw_point(rng, 0.0, d_side, clear_of_aps, f"device {k}")

    return NetworkTopology(ap_positions=aps, device_positions=devices,
                           geometry=replace(cfg))


def large_scale_map(topology: NetworkTopology, shadow_sigma_db: float,
                    seed: int) -> LargeScaleMap:
    """Path loss plus N(0, sigma^2) log-normal shadowing per link (dB)."""
    d2d = topology.device_ap_distances()
    pl = path_loss_db(d2d, topology.geometry)
    rng = rng_for(seed, "shadowing")
    shadowing = rng.normal(0.0, shadow_sigma_db, size=pl.shape) \
        if shadow_sigma_db > 0 else np.zeros_like(pl)
    return LargeScaleMap(beta_db=pl + shadowing, shadowing_db=shadowing,
                         shadow_sigma_db=float(shadow_sigma_db))


def draw_small_scale(num_aps: int, num_antennas: int, num_devices: int,
                     fading_mode: str, seed: int) -> SmallScaleBlock:
    """i.i.d. CN(0, 1) fading tensor of shape (M, N, K)."""
    if min(num_aps, num_antennas, num_devices) < 1:
        raise ConfigError("all fading dimensions must be >= 1")
    if fading_mode not in (PER_SLOT, STATIC_BLOCK):
        raise ConfigError(f"unknown fading_mode {fading_mode!r}")
    rng = rng_for(seed, "ssf")
    shape = (num_aps, num_antennas, num_devices)
    h = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    return SmallScaleBlock(h=h, fading_mode=fading_mode)


def channel_gains(lsf: LargeScaleMap, ssf: SmallScaleBlock) -> np.ndarray:
    """Combined gains g[m, n, k] = sqrt(beta_linear[m, k]) * h[m, n, k]."""
    m, n, k = ssf.h.shape
    if lsf.beta_db.shape != (m, k):
        raise MismatchError(
            f"large-scale map {lsf.beta_db.shape} does not match fading "
            f"tensor ({m}, {n}, {k})")
    return np.sqrt(lsf.beta_linear)[:, None, :] * ssf.h
