"""Binary dataset container ("CFAD" files).

Little-endian layout, version 1:

  header (124 bytes, struct format "<4s8IQ10d"):
    magic           4s   b"CFAD"
    version         u32
    M, N, K, L      u32  APs, antennas, devices, pilot length
    num_slots       u32
    flags           u32  bit0: fading mode (0 per_slot, 1 static_block)
                         bit1: topology mode (0 cell_free, 1 cellular)
    static_block_len u32
    master_seed     u64
    epsilon, noise_power_dbm, shadow_sigma_db,
    area_side_m, edge_margin_m, min_device_ap_dist_m, min_ap_spacing_m,
    ap_height_m, device_height_m, carrier_freq_hz          10 x f64

  payload, in order:
    ap_positions      M*2 f64
    device_positions  K*2 f64
    beta_db           M*K f64
    shadowing_db      M*K f64
    pilots            L*K*(re, im) f64
    tx_power_w        K f64        (shared by all slots)
    per slot, num_slots times:
      activity        ceil(K/8) packed bytes (big-endian bit order)
      received        M*L*N*(re, im) f32, row-major [ap][symbol][antenna]

Received signals are stored at 32-bit precision (they dominate file size);
all other numeric content is exact.  Slots must share the dataset-level
transmit power vector and noise variance; save() rejects anything else.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .channel import (CELL_FREE, CELLULAR, PER_SLOT, STATIC_BLOCK,
                      GeometryConfig, LargeScaleMap, NetworkTopology)
from .errors import DataFormatError, MismatchError
from .scenario import (AccessSlot, AccessSlotDataset, ActivityVector,
                       PilotCodebook, ScenarioConfig, DATASET_FORMAT_VERSION)

MAGIC = b"CFAD"
_HEADER_FMT = "<4s8IQ10d"
_HEADER_SIZE = struct.calcsize(_HEADER_FMT)

_FLAG_STATIC_BLOCK = 1
_FLAG_CELLULAR = 2


@dataclass(frozen=True)
class DatasetHeader:
    """Parsed fixed-size header; enough to size and validate the payload."""

    version: int
    num_aps: int
    num_antennas: int
    num_devices: int
    pilot_len: int
    num_slots: int
    fading_mode: str
    topology_mode: str
    static_block_len: int
    master_seed: int
    epsilon: float
    noise_power_dbm: float
    shadow_sigma_db: float
    area_side_m: float
    edge_margin_m: float
    min_device_ap_dist_m: float
    min_ap_spacing_m: float
    ap_height_m: float
    device_height_m: float
    carrier_freq_hz: float

    def scenario_config(self) -> ScenarioConfig:
        geometry = GeometryConfig(
            area_side_m=self.area_side_m, edge_margin_m=self.edge_margin_m,
            min_device_ap_dist_m=self.min_device_ap_dist_m,
            min_ap_spacing_m=self.min_ap_spacing_m,
            ap_height_m=self.ap_height_m, device_height_m=self.device_height_m,
            carrier_freq_hz=self.carrier_freq_hz, num_aps=self.num_aps,
            num_devices=self.num_devices, topology_mode=self.topology_mode)
        return ScenarioConfig(
            geometry=geometry, num_antennas=self.num_antennas,
            pilot_len=self.pilot_len, epsilon=self.epsilon,
            noise_power_dbm=self.noise_power_dbm,
            shadow_sigma_db=self.shadow_sigma_db, fading_mode=self.fading_mode,
            static_block_len=self.static_block_len,
            tx_power_w=self.tx_power_w_hint)

    # Filled in by the loader once the power vector is read; header-only
    # parses fall back to the packed default.
    tx_power_w_hint: float = 0.2


def _pack_header(ds_cfg: ScenarioConfig, num_slots: int,
                 master_seed: int) -> bytes:
    geo = ds_cfg.geometry
    flags = 0
    if ds_cfg.fading_mode == STATIC_BLOCK:
        flags |= _FLAG_STATIC_BLOCK
    if geo.topology_mode == CELLULAR:
        flags |= _FLAG_CELLULAR
    return struct.pack(
        _HEADER_FMT, MAGIC, DATASET_FORMAT_VERSION,
        geo.num_aps, ds_cfg.num_antennas, geo.num_devices, ds_cfg.pilot_len,
        num_slots, flags, ds_cfg.static_block_len,
        master_seed & ((1 << 64) - 1),
        ds_cfg.epsilon, ds_cfg.noise_power_dbm, ds_cfg.shadow_sigma_db,
        geo.area_side_m, geo.edge_margin_m, geo.min_device_ap_dist_m,
        geo.min_ap_spacing_m, geo.ap_height_m, geo.device_height_m,
        geo.carrier_freq_hz)


def _unpack_header(raw: bytes) -> DatasetHeader:
    if len(raw) < _HEADER_SIZE:
        raise DataFormatError("file truncated inside the header")
    fields = struct.unpack(_HEADER_FMT, raw[:_HEADER_SIZE])
    if fields[0] != MAGIC:
        raise DataFormatError(f"bad magic {fields[0]!r}; not a CFAD dataset")
    version = fields[1]
    if version != DATASET_FORMAT_VERSION:
        raise DataFormatError(
            f"unsupported dataset version {version} "
            f"(expected {DATASET_FORMAT_VERSION})")
    flags = fields[7]
    return DatasetHeader(
        version=version, num_aps=fields[2], num_antennas=fields[3],
        num_devices=fields[4], pilot_len=fields[5], num_slots=fields[6],
        fading_mode=STATIC_BLOCK if flags & _FLAG_STATIC_BLOCK else PER_SLOT,
        topology_mode=CELLULAR if flags & _FLAG_CELLULAR else CELL_FREE,
        static_block_len=fields[8], master_seed=fields[9],
        epsilon=fields[10], noise_power_dbm=fields[11],
        shadow_sigma_db=fields[12], area_side_m=fields[13],
        edge_margin_m=fields[14], min_device_ap_dist_m=fields[15],
        min_ap_spacing_m=fields[16], ap_height_m=fields[17],
        device_height_m=fields[18], carrier_freq_hz=fields[19])


def read_dataset_header(path) -> DatasetHeader:
    """Parse dims and scenario parameters without touching the payload."""
    with open(path, "rb") as fh:
        return _unpack_header(fh.read(_HEADER_SIZE))


def _read_exact(fh, nbytes: int, what: str) -> bytes:
    raw = fh.read(nbytes)
    if len(raw) != nbytes:
        raise DataFormatError(f"file truncated while reading {what}")
    return raw


def _read_array(fh, dtype, shape, what: str) -> np.ndarray:
    count = int(np.prod(shape))
    raw = _read_exact(fh, count * np.dtype(dtype).itemsize, what)
    return np.frombuffer(raw, dtype=dtype).reshape(shape).copy()


def _complex_to_pairs(arr: np.ndarray, dtype) -> np.ndarray:
    out = np.empty(arr.shape + (2,), dtype=dtype)
    out[..., 0] = arr.real
    out[..., 1] = arr.imag
    return out


def _pairs_to_complex(pairs: np.ndarray) -> np.ndarray:
    return pairs[..., 0] + 1j * pairs[..., 1]


def write_dataset_stream(path, scenario_cfg: ScenarioConfig, master_seed: int,
                         num_slots: int, slots: Iterable[AccessSlot],
                         topology: NetworkTopology, lsf: LargeScaleMap,
                         codebook: PilotCodebook) -> None:
    """Write a dataset incrementally from a slot iterable."""
    m = topology.num_aps
    k = topology.num_devices
    n = scenario_cfg.num_antennas
    l_len = codebook.pilot_len
    tx_ref = None
    written = 0
    with open(path, "wb") as fh:
        fh.write(_pack_header(scenario_cfg, num_slots, master_seed))
        fh.write(np.ascontiguousarray(topology.ap_positions, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(topology.device_positions, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(lsf.beta_db, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(lsf.shadowing_db, dtype="<f8").tobytes())
        fh.write(_complex_to_pairs(codebook.s_matrix, "<f8").tobytes())
        pos_tx = fh.tell()
        fh.write(np.zeros(k, dtype="<f8").tobytes())  # patched after first slot
        for slot in slots:
            if slot.received.shape != (m, l_len, n):
                raise MismatchError(
                    f"slot received shape {slot.received.shape} does not match "
                    f"dataset dims ({m}, {l_len}, {n})")
            if tx_ref is None:
                tx_ref = np.asarray(slot.tx_power_w, dtype=float)
            elif not np.array_equal(slot.tx_power_w, tx_ref):
                raise MismatchError(
                    "all slots in a dataset must share one transmit power vector")
            if slot.noise_var_w != scenario_cfg.noise_var_w:
                raise MismatchError(
                    "slot noise variance differs from the scenario configuration")
            fh.write(np.packbits(slot.activity.a.astype(np.uint8)).tobytes())
            fh.write(_complex_to_pairs(slot.received, "<f4").tobytes())
            written += 1
        if written != num_slots:
            raise MismatchError(
                f"slot iterable produced {written} slots, header says {num_slots}")
        fh.seek(pos_tx)
        fh.write(np.ascontiguousarray(tx_ref, dtype="<f8").tobytes())


def save_dataset(dataset: AccessSlotDataset, path) -> None:
    """Persist a materialized dataset."""
    write_dataset_stream(path, dataset.scenario, dataset.master_seed,
                         dataset.num_slots, dataset.slots,
                         dataset.topology, dataset.lsf_map, dataset.codebook)


def _load_scene(fh, header: DatasetHeader):
    m, k = header.num_aps, header.num_devices
    l_len = header.pilot_len
    ap_pos = _read_array(fh, "<f8", (m, 2), "AP positions")
    dev_pos = _read_array(fh, "<f8", (k, 2), "device positions")
    beta_db = _read_array(fh, "<f8", (m, k), "beta map")
    shadowing = _read_array(fh, "<f8", (m, k), "shadowing map")
    pilots = _pairs_to_complex(_read_array(fh, "<f8", (l_len, k, 2), "pilots"))
    tx_power = _read_array(fh, "<f8", (k,), "transmit power")
    geometry = header.scenario_config().geometry
    topology = NetworkTopology(ap_positions=ap_pos, device_positions=dev_pos,
                               geometry=geometry)
    lsf = LargeScaleMap(beta_db=beta_db, shadowing_db=shadowing,
                        shadow_sigma_db=header.shadow_sigma_db)
    return topology, lsf, PilotCodebook(s_matrix=pilots), tx_power


def load_dataset_scene(path):
    """Header plus the shared scene, skipping all slot payloads.

    Returns (header, scenario_cfg, topology, lsf, codebook, tx_power_w).
    """
    with open(path, "rb") as fh:
        header = _unpack_header(_read_exact(fh, _HEADER_SIZE, "header"))
        topology, lsf, codebook, tx_power = _load_scene(fh, header)
    cfg = header.scenario_config()
    cfg.tx_power_w = float(tx_power[0]) if tx_power.size else cfg.tx_power_w
    return header, cfg, topology, lsf, codebook, tx_power


def iter_dataset_slots(path) -> Iterator[AccessSlot]:
    """Stream slots from disk one at a time (received as complex64)."""
    with open(path, "rb") as fh:
        header = _unpack_header(_read_exact(fh, _HEADER_SIZE, "header"))
        _, _, _, tx_power = _load_scene(fh, header)
        m, n, k = header.num_aps, header.num_antennas, header.num_devices
        l_len = header.pilot_len
        act_bytes = math.ceil(k / 8)
        noise_var = header.scenario_config().noise_var_w
        for i in range(header.num_slots):
            packed = np.frombuffer(
                _read_exact(fh, act_bytes, f"slot {i} activity"), dtype=np.uint8)
            a = np.unpackbits(packed)[:k]
            pairs = _read_array(fh, "<f4", (m, l_len, n, 2), f"slot {i} signals")
            yield AccessSlot(
                activity=ActivityVector(a=a, epsilon=header.epsilon),
                received=_pairs_to_complex(pairs),
                tx_power_w=tx_power, noise_var_w=noise_var)
        if fh.read(1):
            raise DataFormatError("trailing bytes after the last slot")


def load_dataset(path) -> AccessSlotDataset:
    """Load a complete dataset into memory."""
    header, cfg, topology, lsf, codebook, _ = load_dataset_scene(path)
    slots = list(iter_dataset_slots(path))
    return AccessSlotDataset(codebook=codebook, topology=topology, lsf_map=lsf,
                             slots=slots, scenario=cfg,
                             master_seed=header.master_seed,
                             format_version=header.version)
