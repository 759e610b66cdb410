"""Cluster selection, post-processing, and the two deployment strategies.

Strategy I (decentralized) runs one shared detector per AP and fuses the
per-AP scores at the CPU, either by majority vote over hard decisions or
by a gain-weighted average.  Strategy II (centralized) feeds each
device's T best AP signals through one multi-input detector.  Also holds
the training-sample builders that pair signals with activity labels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import slp
from .channel import LargeScaleMap
from .errors import ConfigError, MismatchError
from .scenario import AccessSlot
from .seeds import rng_for
from .slp import SlpModel

FUSION = "fusion"
POND = "pond"


@dataclass(frozen=True)
class ClusterAssignment:
    """Per-device list of the T strongest APs, strongest first."""

    ap_indices: np.ndarray  # (K, T) int
    cluster_size: int

    @property
    def num_devices(self) -> int:
        return self.ap_indices.shape[0]


@dataclass
class DetectionResult:
    scores: np.ndarray      # (K,) soft scores in [0, 1]
    decisions: np.ndarray   # (K,) uint8
    threshold: float
    strategy: str


def select_clusters(lsf_map: LargeScaleMap, cluster_size: int) -> ClusterAssignment:
    """Top-T APs per device by linear gain, ties broken by lower AP index."""
    beta = lsf_map.beta_linear
    m = beta.shape[0]
    if not 1 <= cluster_size <= m:
        raise ConfigError(f"cluster_size must lie in [1, {m}], got {cluster_size}")
    order = np.argsort(-beta, axis=0, kind="stable")  # stable keeps low index first
    return ClusterAssignment(ap_indices=order[:cluster_size, :].T.copy(),
                             cluster_size=cluster_size)


def cluster_gains(lsf_map: LargeScaleMap, clusters: ClusterAssignment) -> np.ndarray:
    """Linear gains beta[ap, k] gathered per device cluster, shape (K, T)."""
    k = clusters.num_devices
    return lsf_map.beta_linear[clusters.ap_indices, np.arange(k)[:, None]]


def cluster_weights(lsf_map: LargeScaleMap, clusters: ClusterAssignment) -> np.ndarray:
    """Normalized ponderation weights per device, shape (K, T)."""
    gains = cluster_gains(lsf_map, clusters)
    return gains / gains.sum(axis=1, keepdims=True)


def hard_decision(scores, tau: float) -> np.ndarray:
    """Binarize scores: active iff score >= tau (boundary inclusive)."""
    if tau < 0:
        raise ConfigError(f"threshold must be >= 0, got {tau}")
    return (np.asarray(scores) >= tau).astype(np.uint8)


def fuse_majority(votes, strict: bool = False) -> int:
    """Majority rule over T binary votes: active iff count >= T/2.

    With strict=True a strict majority (count > T/2) is required.
    """
    votes = np.asarray(votes)
    if votes.size < 1:
        raise ConfigError("fuse_majority needs at least one vote")
    count = int(votes.sum())
    half = votes.size / 2.0
    return int(count > half if strict else count >= half)


def majority_rank(cluster_size: int, strict: bool = False) -> int:
    """Smallest vote count that wins the majority rule."""
    return math.floor(cluster_size / 2.0) + 1 if strict \
        else math.ceil(cluster_size / 2.0)


def ponderate(predictions, beta_best) -> float:
    """Gain-weighted average of cluster predictions.

    Weights are linear-scale gains normalized to sum to one, so the
    output stays in [0, 1] and is invariant to uniform gain scaling.
    """
    p = np.asarray(predictions, dtype=float)
    beta = np.asarray(beta_best, dtype=float)
    if p.shape != beta.shape:
        raise MismatchError(f"shape mismatch {p.shape} vs {beta.shape}")
    if np.any(beta <= 0):
        raise ConfigError("ponderation requires strictly positive gains")
    w = beta / beta.sum()
    return float(np.dot(w, p))


def _models_for_aps(model, num_aps: int) -> list[SlpModel]:
    if isinstance(model, SlpModel):
        models = [model] * num_aps
    else:
        models = list(model)
        if len(models) != num_aps:
            raise MismatchError(
                f"{len(models)} per-AP models supplied for {num_aps} APs")
    for mdl in models:
        if mdl.config.cluster_inputs != 1:
            raise MismatchError(
                "decentralized detection requires single-input models (T=1)")
    return models


def decentralized_ap_scores(model, received: np.ndarray) -> np.ndarray:
    """Per-AP detector outputs for a batch of slots.

    received: (B, M, L, N) complex; model: one shared SlpModel or a
    sequence of M per-AP models.  Returns scores of shape (B, M, K).
    """
    b, m = received.shape[:2]
    models = _models_for_aps(model, m)
    flat = slp.flatten_blocks(received)  # (B, M, 2LN)
    if all(mdl is models[0] for mdl in models):
        out = slp.forward_batch(models[0], flat.reshape(b * m, 1, -1))
        return out.reshape(b, m, -1)
    cols = [slp.forward_batch(models[i], flat[:, i, None, :]) for i in range(m)]
    return np.stack(cols, axis=1)


def pooled_decentralized_scores(ap_scores: np.ndarray,
                                clusters: ClusterAssignment,
                                lsf_map: LargeScaleMap, mode: str,
                                strict: bool = False) -> np.ndarray:
    """Reduce (B, M, K) per-AP scores to (B, K) per-device soft scores.

    pond: gain-weighted average over each cluster.  fusion: the r-th
    largest cluster prediction with r = majority_rank(T); thresholding
    that value at any tau reproduces the majority vote over per-AP hard
    decisions at the same tau.
    """
    k = clusters.num_devices
    idx = clusters.ap_indices  # (K, T)
    gathered = ap_scores[:, idx, np.arange(k)[:, None]]  # (B, K, T)
    if mode == POND:
        w = cluster_weights(lsf_map, clusters)
        return np.einsum("bkt,kt->bk", gathered, w)
    if mode == FUSION:
        r = majority_rank(clusters.cluster_size, strict)
        return np.partition(gathered, -r, axis=2)[:, :, -r]
    raise ConfigError(f"unknown post-processing mode {mode!r}")


def detect_decentralized(model, slot: AccessSlot, clusters: ClusterAssignment,
                         lsf_map: LargeScaleMap, post_mode: str, tau: float,
                         strict_majority: bool = False) -> DetectionResult:
    """Strategy I on one slot: per-AP prediction, CPU-side post-processing.

    fusion reports the fraction of positive votes as the soft score and
    applies the majority rule; pond reports the gain-weighted average and
    thresholds it at tau.
    """
    ap_scores = decentralized_ap_scores(model, slot.received[None])[0]  # (M, K)
    k = clusters.num_devices
    gathered = ap_scores[clusters.ap_indices, np.arange(k)[:, None]]  # (K, T)
    if post_mode == POND:
        w = cluster_weights(lsf_map, clusters)
        scores = np.sum(gathered * w, axis=1)
        decisions = hard_decision(scores, tau)
    elif post_mode == FUSION:
        votes = hard_decision(gathered, tau)
        scores = votes.mean(axis=1)
        decisions = np.array([fuse_majority(v, strict_majority) for v in votes],
                             dtype=np.uint8)
    else:
        raise ConfigError(f"unknown post-processing mode {post_mode!r}")
    return DetectionResult(scores=scores, decisions=decisions, threshold=tau,
                           strategy=f"decentralized-{post_mode}")


def centralized_scores(model: SlpModel, received: np.ndarray,
                       clusters: ClusterAssignment) -> np.ndarray:
    """Strategy II soft scores for a batch of slots, shape (B, K).

    For each device the model sees its T cluster signals (strongest AP
    first) and only the device's own output entry is retained.  Devices
    with identical clusters share one forward pass.
    """
    if model.config.cluster_inputs != clusters.cluster_size:
        raise MismatchError(
            f"model expects T={model.config.cluster_inputs} inputs, clusters "
            f"have size {clusters.cluster_size}")
    b = received.shape[0]
    k = clusters.num_devices
    flat = slp.flatten_blocks(received)  # (B, M, 2LN)
    scores = np.empty((b, k))
    groups: dict[tuple, list[int]] = {}
    for dev in range(k):
        groups.setdefault(tuple(clusters.ap_indices[dev]), []).append(dev)
    for aps, devs in groups.items():
        out = slp.forward_batch(model, flat[:, list(aps), :])  # (B, K)
        scores[:, devs] = out[:, devs]
    return scores


def detect_centralized(model: SlpModel, slot: AccessSlot,
                       clusters: ClusterAssignment, tau: float) -> DetectionResult:
    """Strategy II on one slot: cluster-input inference, hard decision."""
    scores = centralized_scores(model, slot.received[None], clusters)[0]
    return DetectionResult(scores=scores, decisions=hard_decision(scores, tau),
                           threshold=tau, strategy="centralized")


def exchange_bytes_per_slot(strategy: str, num_aps: int, num_devices: int,
                            pilot_len: int, num_antennas: int) -> int:
    """Fronthaul bytes moved per slot under each exchange scheme.

    Decentralized APs forward predictions only (one 32-bit value per
    device per AP); centralized APs forward raw signals (two 32-bit
    components per complex sample).
    """
    if strategy == "decentralized":
        return 4 * num_aps * num_devices
    if strategy == "centralized":
        return 8 * num_aps * pilot_len * num_antennas
    raise ConfigError(f"unknown strategy {strategy!r}")


def build_decentralized_samples(slots: Iterable[AccessSlot],
                                num_aps: int,
                                ap_index: int | None = None):
    """Training pairs for Strategy I: (one AP's flattened block, labels).

    With ap_index=None slot i contributes AP (i mod M), cycling round
    robin; a fixed ap_index restricts samples to that AP (used when
    training per-AP models).  Returns (X, Y) with X of shape (n, 1, 2LN).
    """
    xs, ys = [], []
    for i, slot in enumerate(slots):
        m = ap_index if ap_index is not None else i % num_aps
        xs.append(slp.flatten_signal(slot.received[m]))
        ys.append(slot.activity.a)
    if not xs:
        raise MismatchError("no slots supplied")
    return np.asarray(xs)[:, None, :], np.asarray(ys, dtype=np.float64)


def build_centralized_samples(slots: Iterable[AccessSlot],
                              clusters: ClusterAssignment, seed: int,
                              devices_per_slot: int = 1):
    """Training pairs for Strategy II: (T cluster blocks, full labels).

    Each slot contributes the cluster signals of devices_per_slot
    uniformly drawn devices (without replacement), keeping the sample
    budget equal to the slot budget at the default of one.
    """
    if devices_per_slot < 1:
        raise ConfigError("devices_per_slot must be >= 1")
    rng = rng_for(seed, "centralized-samples")
    k = clusters.num_devices
    xs, ys = [], []
    for slot in slots:
        devs = rng.choice(k, size=min(devices_per_slot, k), replace=False)
        flat = slp.flatten_blocks(slot.received)  # (M, 2LN)
        for dev in devs:
            xs.append(flat[clusters.ap_indices[dev]])
            ys.append(slot.activity.a)
    if not xs:
        raise MismatchError("no slots supplied")
    return np.asarray(xs), np.asarray(ys, dtype=np.float64)


def input_scale_for(inputs: np.ndarray) -> float:
    """Normalization constant 1/RMS of the training inputs (1.0 if zero)."""
    rms = float(np.sqrt(np.mean(np.square(inputs))))
    return 1.0 / rms if rms > 0 else 1.0
