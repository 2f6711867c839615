"""Per-round latency accounting, cost terms, and feasibility checks."""

from dataclasses import dataclass

import numpy as np

from .errors import EmptySelectionError, InvalidConfigError, ZeroRateError


@dataclass(frozen=True)
class ComputeProfile:
    """CPU model of a device or a UAV server."""

    cycles_per_sample: float
    cpu_hz: float
    cpu_hz_min: float = 0.0
    cpu_hz_max: float = float("inf")

    def __post_init__(self):
        if self.cycles_per_sample <= 0:
            raise InvalidConfigError("cycles_per_sample must be positive")
        if not (0 < self.cpu_hz <= self.cpu_hz_max):
            raise InvalidConfigError("cpu_hz must be in (0, cpu_hz_max]")


@dataclass(frozen=True)
class PayloadProfile:
    """Model-parameter transfer sizes in bits."""

    upload_bits: float
    broadcast_bits: float

    def __post_init__(self):
        if self.upload_bits < 0 or self.broadcast_bits < 0:
            raise InvalidConfigError("payload sizes must be nonnegative")


@dataclass(frozen=True)
class CostWeights:
    """Weight between time cost and learning-loss cost; lam in [0, 1]."""

    lam: float = 0.4

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise InvalidConfigError("lam must lie in [0, 1]")


def local_compute_latency(num_samples: int, profile: ComputeProfile) -> float:
    """Seconds a device spends on one round of local training."""
    return num_samples * profile.cycles_per_sample / profile.cpu_hz


def global_compute_latency(total_samples: int, profile: ComputeProfile) -> float:
    """Seconds the server spends aggregating over `total_samples` samples."""
    return total_samples * profile.cycles_per_sample / profile.cpu_hz


def broadcast_latency(payload: PayloadProfile, rate_down: float) -> float:
    """Seconds to broadcast the global model at `rate_down` bit/s."""
    if payload.broadcast_bits == 0:
        return 0.0
    if rate_down <= 0:
        raise ZeroRateError("downlink rate is zero; device unreachable")
    return payload.broadcast_bits / rate_down


def upload_latency(payload: PayloadProfile, rate_up: float) -> float:
    """Seconds to upload the local model at `rate_up` bit/s."""
    if payload.upload_bits == 0:
        return 0.0
    if rate_up <= 0:
        raise ZeroRateError("uplink rate is zero; device unreachable")
    return payload.upload_bits / rate_up


def round_time(t_local: float, t_global: float, t_down: float, t_up: float) -> float:
    """Total per-device round time: exact sum of the four components."""
    return t_local + t_global + t_down + t_up


def execution_time_cost(round_times: list[float]) -> float:
    """Mean round time over the selected devices."""
    if not round_times:
        raise EmptySelectionError("no devices selected")
    return sum(round_times) / len(round_times)


def accuracy_loss_cost(per_device_losses: list[float], sample_counts: list[int]) -> float:
    """Sample-weighted mean loss over the selected devices' data."""
    if not per_device_losses:
        raise EmptySelectionError("no devices selected")
    total = sum(sample_counts)
    return sum(l * c for l, c in zip(per_device_losses, sample_counts)) / total


def system_cost(time_cost: float, loss_cost: float, weights: CostWeights) -> float:
    """Weighted one-round objective: lam * time + (1 - lam) * loss."""
    return weights.lam * time_cost + (1.0 - weights.lam) * loss_cost


@dataclass(frozen=True)
class Violation:
    constraint: str
    detail: str


def validate_constraints(alloc, max_subchannels: int, p_max: float,
                         cpu_hz=None, cpu_hz_max=None) -> list[Violation]:
    """Check a LinkAllocation against the feasibility constraints.

    Returns an empty list when the allocation is feasible; violations are
    data, not exceptions. Checked families: binary indicators, at most one
    serving UAV per device, per-cell subchannel budget, downlink power
    bounds, and (when CPU data is given) device CPU frequency bounds.
    """
    violations = []
    if not np.isin(alloc.rho, (0, 1)).all():
        violations.append(Violation("binary", "rho contains non-binary entries"))
    if not np.isin(alloc.chi, (0, 1)).all():
        violations.append(Violation("binary", "chi contains non-binary entries"))
    over = np.flatnonzero(alloc.rho.sum(axis=0) > 1)
    for k in over:
        violations.append(Violation("single-association", f"device {k} selected by multiple UAVs"))
    per_cell = alloc.chi.sum(axis=(1, 2))
    for n in np.flatnonzero(per_cell > max_subchannels):
        violations.append(Violation(
            "subchannel-budget",
            f"cell {n} uses {int(per_cell[n])} subchannel slots (max {max_subchannels})",
        ))
    for n in np.flatnonzero((alloc.p_downlink < 0) | (alloc.p_downlink > p_max)):
        violations.append(Violation(
            "power-bound", f"UAV {n} downlink power {alloc.p_downlink[n]:.6g} W outside [0, {p_max}]"
        ))
    if cpu_hz is not None:
        cpu_hz = np.asarray(cpu_hz, dtype=float)
        caps = np.asarray(cpu_hz_max, dtype=float)
        for k in np.flatnonzero((cpu_hz <= 0) | (cpu_hz > caps)):
            violations.append(Violation(
                "cpu-bound", f"device {k} CPU {cpu_hz[k]:.4g} Hz outside (0, {caps[k]:.4g}]"
            ))
    return violations


class RunningNormalizer:
    """Per-episode running min/max scaler.

    Maps a stream of values into [0, 1] relative to the extremes seen so far
    in the episode; the first observation maps to 0. Reset at episode start.
    """

    def __init__(self):
        self.lo = None
        self.hi = None

    def reset(self):
        self.lo = None
        self.hi = None

    def update(self, value: float) -> float:
        if self.lo is None:
            self.lo = self.hi = value
        else:
            self.lo = min(self.lo, value)
            self.hi = max(self.hi, value)
        span = self.hi - self.lo
        if span <= 0.0:
            return 0.0
        return (value - self.lo) / span
