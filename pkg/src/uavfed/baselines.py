"""Non-learned schedulers: top-k selection, random selection, FD descent."""

import numpy as np

from . import channel
from .a3c import SchedulingAction
from .channel import Position2D, Position3D

POWER_FLOOR_W = 1e-6  # keeps downlink rates defined during the descent


def _no_ici_uplink_time(env, uav: Position3D, dev: int) -> float:
    """Predicted upload seconds with the device alone on one subchannel."""
    cfg = env.cfg
    pl = channel.path_loss_db(uav, Position2D(*env.dev_xy[dev]), cfg.radio)
    snr = cfg.dev_power_w * 10.0 ** (-pl / 10.0) / cfg.radio.noise_w
    rate = cfg.radio.subchannel_bw_hz * np.log2(1.0 + snr)
    return cfg.payload_bits / rate


def _downlink_time(env, cell: int, uav: Position3D, power: float, dev: int) -> float:
    """Predicted broadcast seconds with other cells at their current powers."""
    cfg = env.cfg
    pos = Position2D(*env.dev_xy[dev])
    signal = power * 10.0 ** (-channel.path_loss_db(uav, pos, cfg.radio) / 10.0)
    interference = 0.0
    for n in range(cfg.num_uavs):
        if n == cell:
            continue
        other = Position3D(env.uav_xy[n, 0], env.uav_xy[n, 1], cfg.uav_height)
        interference += env.uav_power[n] * 10.0 ** (
            -channel.path_loss_db(other, pos, cfg.radio) / 10.0
        )
    sinr = signal / (interference + cfg.radio.noise_w)
    rate = cfg.radio.bw_downlink_hz * np.log2(1.0 + sinr)
    return cfg.payload_bits / rate


def _local_time(env, dev: int) -> float:
    return float(env.dev_samples[dev]) * env.cfg.dev_cycles_per_sample / env.dev_cpu[dev]


def predicted_mean_round_time(env, cell: int, devices, position=None, power=None) -> float:
    """One-step objective: mean predicted round time of `devices` in `cell`."""
    cfg = env.cfg
    if position is None:
        position = tuple(env.uav_xy[cell])
    if power is None:
        power = float(env.uav_power[cell])
    uav = Position3D(position[0], position[1], cfg.uav_height)
    t_glo = float(env.dev_samples[list(devices)].sum()) * cfg.uav_cycles_per_sample / cfg.uav_cpu_hz
    total = 0.0
    for dev in devices:
        total += (
            _local_time(env, dev)
            + t_glo
            + _downlink_time(env, cell, uav, power, dev)
            + _no_ici_uplink_time(env, uav, dev)
        )
    return total / len(devices)


def baseline_select_topk(env, cell: int, k: int) -> list:
    """The k devices minimizing the predicted mean round time.

    The mean over a k-subset separates into per-device scores
    t_local + t_up + t_down + k * (server cycles) * samples, so picking the
    k smallest scores is exactly optimal.
    """
    in_cell = np.flatnonzero(env.dev_cell == cell)
    k = min(k, len(in_cell))
    if k == 0:
        return []
    cfg = env.cfg
    uav = Position3D(env.uav_xy[cell, 0], env.uav_xy[cell, 1], cfg.uav_height)
    power = float(env.uav_power[cell])
    glo_rate = cfg.uav_cycles_per_sample / cfg.uav_cpu_hz
    scores = np.array([
        _local_time(env, dev)
        + _no_ici_uplink_time(env, uav, dev)
        + _downlink_time(env, cell, uav, power, dev)
        + k * glo_rate * float(env.dev_samples[dev])
        for dev in in_cell
    ])
    order = np.lexsort((in_cell, scores))
    return sorted(int(in_cell[i]) for i in order[:k])


def baseline_select_random(env, cell: int, k: int, rng: np.random.Generator) -> list:
    """A uniformly random k-subset of the cell's devices."""
    in_cell = np.flatnonzero(env.dev_cell == cell)
    k = min(k, len(in_cell))
    if k == 0:
        return []
    return sorted(int(d) for d in rng.choice(in_cell, size=k, replace=False))


def make_static_action(env, cell: int, selected, position=None, power=None) -> SchedulingAction:
    """Action that keeps the UAV in place (or at `position`) and hands the
    selected devices distinct subchannels in id order."""
    cfg = env.cfg
    sel = np.zeros(cfg.num_devices, dtype=np.int8)
    sub = np.full(cfg.num_devices, -1, dtype=np.int64)
    for i, dev in enumerate(sorted(selected)):
        sel[dev] = 1
        sub[dev] = i % cfg.radio.num_subchannels
    return SchedulingAction(
        cell=cell,
        position=tuple(env.uav_xy[cell]) if position is None else tuple(position),
        power=float(env.uav_power[cell]) if power is None else float(power),
        selection=sel,
        subchannel=sub,
    )


def baseline_gradient_scheduler(env, cell: int, iters: int = 20) -> SchedulingAction:
    """Finite-difference benchmark: top-k selection, then projected descent
    of (x, y, power) on the predicted mean round time.

    Steps halve on non-improvement; the returned point is never worse than
    the starting one under the same objective.
    """
    cfg = env.cfg
    selected = baseline_select_topk(env, cell, cfg.select_count)
    if not selected:
        return make_static_action(env, cell, [])

    # descend in box-normalized coordinates so meters and watts are comparable
    lo = np.array([0.0, 0.0, POWER_FLOOR_W])
    hi = np.array([cfg.area_x, cfg.area_y, cfg.uav_power_max_w])
    span = hi - lo

    def objective(u):
        v = lo + np.clip(u, 0.0, 1.0) * span
        return predicted_mean_round_time(env, cell, selected, (v[0], v[1]), v[2])

    cur = np.clip((np.array([
        env.uav_xy[cell, 0], env.uav_xy[cell, 1], float(env.uav_power[cell])
    ]) - lo) / span, 0.0, 1.0)
    f_cur = objective(cur)
    step = 0.25
    h = 1e-5
    for _ in range(iters):
        grad = np.empty(3)
        for i in range(3):
            up, dn = cur.copy(), cur.copy()
            up[i] = min(cur[i] + h, 1.0)
            dn[i] = max(cur[i] - h, 0.0)
            denom = up[i] - dn[i]
            grad[i] = (objective(up) - objective(dn)) / denom if denom > 0 else 0.0
        norm = float(np.linalg.norm(grad))
        if norm == 0.0:
            break
        cand = np.clip(cur - step * grad / norm, 0.0, 1.0)
        f_cand = objective(cand)
        if f_cand < f_cur:
            cur, f_cur = cand, f_cand
        else:
            step *= 0.5
    final = lo + cur * span
    return make_static_action(env, cell, selected, (final[0], final[1]), final[2])
