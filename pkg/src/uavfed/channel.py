"""Air-to-ground radio model: geometry, probabilistic path loss, SINR, rates.

Everything here is a pure function of its inputs (no hidden state, no RNG),
so results are bit-reproducible and safe to call from any thread. Units are
SI throughout: meters, Hz, watts, dB where named, bits per second.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import InvalidConfigError

LIGHT_SPEED = 2.998e8  # m/s


@dataclass(frozen=True)
class Position3D:
    """UAV location: horizontal coordinates plus height above ground (m)."""

    x: float
    y: float
    h: float


@dataclass(frozen=True)
class Position2D:
    """Ground device location (m)."""

    x: float
    y: float


@dataclass(frozen=True)
class RadioParams:
    """Radio constants for one deployment.

    eta_los_db / eta_nlos_db are the mean excess losses of line-of-sight and
    non-line-of-sight links on top of free-space loss; xi1/xi2 shape the
    LoS-probability sigmoid (urban defaults). noise_w is the receiver noise
    power (default -100 dBm).
    """

    fc_hz: float = 2.0e9
    c: float = LIGHT_SPEED
    eta_los_db: float = 1.0
    eta_nlos_db: float = 20.0
    xi1: float = 9.61
    xi2: float = 0.16
    noise_w: float = 1e-13
    bw_uplink_hz: float = 10e6
    bw_downlink_hz: float = 1e6
    num_subchannels: int = 10

    def __post_init__(self):
        positives = (
            self.fc_hz, self.c, self.noise_w,
            self.bw_uplink_hz, self.bw_downlink_hz,
        )
        if any(v <= 0 for v in positives):
            raise InvalidConfigError("radio parameters must be positive")
        if self.eta_nlos_db < self.eta_los_db:
            raise InvalidConfigError("eta_nlos_db must be >= eta_los_db")
        if self.num_subchannels < 1:
            raise InvalidConfigError("need at least one subchannel")

    @property
    def subchannel_bw_hz(self) -> float:
        return self.bw_uplink_hz / self.num_subchannels


@dataclass
class LinkAllocation:
    """One slot's association and resource assignment.

    rho[n, k] = 1 when UAV n serves device k; chi[n, k, m] = 1 when device k
    uploads to UAV n on subchannel m. p_uplink[k, m] and p_downlink[n] are
    transmit powers in watts.
    """

    rho: np.ndarray
    chi: np.ndarray
    p_uplink: np.ndarray
    p_downlink: np.ndarray

    @classmethod
    def empty(cls, num_uavs: int, num_devices: int, num_subchannels: int) -> "LinkAllocation":
        return cls(
            rho=np.zeros((num_uavs, num_devices), dtype=np.int64),
            chi=np.zeros((num_uavs, num_devices, num_subchannels), dtype=np.int64),
            p_uplink=np.zeros((num_devices, num_subchannels)),
            p_downlink=np.zeros(num_uavs),
        )

    def serving_uav(self, dev: int) -> int:
        """Index of the UAV serving `dev`, or -1 when unselected."""
        hits = np.flatnonzero(self.rho[:, dev])
        return int(hits[0]) if hits.size else -1


def distance(uav: Position3D, dev: Position2D) -> float:
    """Slant range from a UAV to a ground device (m)."""
    return math.sqrt((uav.x - dev.x) ** 2 + (uav.y - dev.y) ** 2 + uav.h ** 2)


def elevation_angle_deg(uav: Position3D, dev: Position2D) -> float:
    """Elevation angle seen from the device toward the UAV, in degrees (0, 90]."""
    d = distance(uav, dev)
    return math.degrees(math.asin(uav.h / d))


def los_probability(theta_deg: float, params: RadioParams) -> float:
    """Probability of a line-of-sight link at elevation angle theta (degrees)."""
    return 1.0 / (1.0 + params.xi1 * math.exp(-params.xi2 * (theta_deg - params.xi1)))


def _fspl_db(d: float, params: RadioParams) -> float:
    return 20.0 * math.log10(4.0 * math.pi * params.fc_hz * d / params.c)


def path_loss_db(uav: Position3D, dev: Position2D, params: RadioParams) -> float:
    """Mean path loss (dB): LoS/NLoS free-space losses mixed by LoS probability."""
    d = distance(uav, dev)
    fspl = _fspl_db(d, params)
    p_los = los_probability(elevation_angle_deg(uav, dev), params)
    return p_los * (fspl + params.eta_los_db) + (1.0 - p_los) * (fspl + params.eta_nlos_db)


def _gain(loss_db: float) -> float:
    return 10.0 ** (-loss_db / 10.0)


def uplink_sinr(
    dev: int,
    subchannel: int,
    uav_positions: list[Position3D],
    dev_positions: list[Position2D],
    alloc: LinkAllocation,
    params: RadioParams,
) -> float:
    """Uplink SINR of `dev` on `subchannel` at its serving UAV (linear ratio).

    Interference comes from co-channel devices of other cells; subchannels
    are orthogonal within a cell. Raises ValueError when the device has no
    allocation on that subchannel.
    """
    n = alloc.serving_uav(dev)
    if n < 0 or not alloc.chi[n, dev, subchannel]:
        raise ValueError(f"device {dev} has no allocation on subchannel {subchannel}")
    uav = uav_positions[n]
    signal = alloc.p_uplink[dev, subchannel] * _gain(path_loss_db(uav, dev_positions[dev], params))
    interference = 0.0
    for k in range(alloc.rho.shape[1]):
        if k == dev:
            continue
        serving = alloc.serving_uav(k)
        if serving < 0 or serving == n:
            continue
        if alloc.chi[serving, k, subchannel]:
            interference += alloc.p_uplink[k, subchannel] * _gain(
                path_loss_db(uav, dev_positions[k], params)
            )
    return signal / (interference + params.noise_w)


def uplink_rate(
    dev: int,
    uav_positions: list[Position3D],
    dev_positions: list[Position2D],
    alloc: LinkAllocation,
    params: RadioParams,
) -> float:
    """Achievable uplink rate of `dev` over its allocated subchannels (bit/s)."""
    n = alloc.serving_uav(dev)
    if n < 0:
        return 0.0
    rate = 0.0
    for m in range(params.num_subchannels):
        if alloc.chi[n, dev, m]:
            sinr = uplink_sinr(dev, m, uav_positions, dev_positions, alloc, params)
            rate += params.subchannel_bw_hz * math.log2(1.0 + sinr)
    return rate


def downlink_sinr(
    dev: int,
    serving_uav: int,
    uav_positions: list[Position3D],
    dev_positions: list[Position2D],
    alloc: LinkAllocation,
    params: RadioParams,
) -> float:
    """Downlink SINR at `dev` from its serving UAV, other UAVs interfering."""
    pos = dev_positions[dev]
    signal = alloc.p_downlink[serving_uav] * _gain(
        path_loss_db(uav_positions[serving_uav], pos, params)
    )
    interference = 0.0
    for n in range(len(uav_positions)):
        if n == serving_uav:
            continue
        interference += alloc.p_downlink[n] * _gain(path_loss_db(uav_positions[n], pos, params))
    return signal / (interference + params.noise_w)


def downlink_rate(
    dev: int,
    serving_uav: int,
    uav_positions: list[Position3D],
    dev_positions: list[Position2D],
    alloc: LinkAllocation,
    params: RadioParams,
) -> float:
    """Achievable broadcast rate at `dev` (bit/s)."""
    sinr = downlink_sinr(dev, serving_uav, uav_positions, dev_positions, alloc, params)
    return params.bw_downlink_hz * math.log2(1.0 + sinr)


def path_loss_matrix(uav_xy: np.ndarray, height: float, dev_xy: np.ndarray,
                     params: RadioParams) -> np.ndarray:
    """Vectorized twin of path_loss_db over every (UAV, device) pair, in dB.

    Shape (num_uavs, num_devices); must agree with the scalar function to
    rounding error (covered by tests).
    """
    dx = uav_xy[:, 0][:, None] - dev_xy[:, 0][None, :]
    dy = uav_xy[:, 1][:, None] - dev_xy[:, 1][None, :]
    d = np.sqrt(dx * dx + dy * dy + height * height)
    theta = np.degrees(np.arcsin(height / d))
    p_los = 1.0 / (1.0 + params.xi1 * np.exp(-params.xi2 * (theta - params.xi1)))
    fspl = 20.0 * np.log10(4.0 * math.pi * params.fc_hz * d / params.c)
    return p_los * (fspl + params.eta_los_db) + (1.0 - p_los) * (fspl + params.eta_nlos_db)


def set_uplink_powers(alloc: LinkAllocation, device_power_w: float):
    """Split each device's transmit power equally over its allocated subchannels."""
    used = alloc.chi.sum(axis=0) > 0  # (K, M)
    per_dev = used.sum(axis=1)
    alloc.p_uplink[:] = 0.0
    active = per_dev > 0
    alloc.p_uplink[active] = (
        used[active] * (device_power_w / per_dev[active])[:, None]
    )
