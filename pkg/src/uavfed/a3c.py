"""MDP encoding, advantage actor-critic losses, global store, training loop.

Each UAV server is one agent; homogeneous agents share a single global
parameter store per role (actor/critic). Workers hold thread-local parameter
copies, roll out fixed-length segments, accumulate gradients per agent, and
apply them asynchronously to the store.
"""

from dataclasses import dataclass
import threading

import numpy as np

from .errors import NonFiniteGradientError
from .nets import (
    DenseNet,
    HeadLayout,
    HeadSample,
    ModelParams,
    RmsPropState,
    head_grads,
    rmsprop_update,
    sample_action,
)

DEVICE_FEATURES = 6
UAV_FEATURES = 3


@dataclass
class NetworkSnapshot:
    """Environment state at a slot boundary, for every cell.

    prev_sel/prev_sub are the previous slot's selection and subchannel
    indicators; payload_rem holds upload bits still outstanding when the
    previous round closed (nonzero only for stragglers).
    """

    uav_xy: np.ndarray        # (N, 2) meters
    uav_payload_rem: np.ndarray  # (N,) bits
    dev_xy: np.ndarray        # (K, 2) meters
    dev_cell: np.ndarray      # (K,) serving cell index
    prev_sel: np.ndarray      # (K,) 0/1
    prev_sub: np.ndarray      # (K,) subchannel index or -1
    payload_rem: np.ndarray   # (K,) bits

    def in_cell(self, cell: int) -> np.ndarray:
        return np.flatnonzero(self.dev_cell == cell)


@dataclass
class SchedulingAction:
    """One agent's joint decision for a slot."""

    cell: int
    position: tuple           # (x, y) meters
    power: float              # downlink watts
    selection: np.ndarray     # (K,) 0/1
    subchannel: np.ndarray    # (K,) index or -1


def state_dim(num_devices: int) -> int:
    return UAV_FEATURES + DEVICE_FEATURES * num_devices


def encode_state(snap: NetworkSnapshot, cell: int, area: tuple,
                 upload_bits: float, broadcast_bits: float,
                 num_subchannels: int) -> np.ndarray:
    """Fixed-length [0,1] feature vector for one cell.

    Layout: own UAV (x, y, remaining broadcast payload), then six features
    per device slot in device-id order: position, in-cell flag, previous
    selection, previous subchannel, remaining upload payload. Features of
    out-of-cell devices are zeroed except their position.
    """
    ax, ay = area
    k = len(snap.dev_xy)
    vec = np.zeros(state_dim(k))
    vec[0] = snap.uav_xy[cell, 0] / ax
    vec[1] = snap.uav_xy[cell, 1] / ay
    vec[2] = snap.uav_payload_rem[cell] / broadcast_bits
    mine = snap.dev_cell == cell
    dev = vec[UAV_FEATURES:].reshape(k, DEVICE_FEATURES)
    dev[:, 0] = snap.dev_xy[:, 0] / ax
    dev[:, 1] = snap.dev_xy[:, 1] / ay
    dev[:, 2] = mine
    dev[:, 3] = snap.prev_sel * mine
    dev[:, 4] = ((snap.prev_sub + 1) / num_subchannels) * (snap.prev_sub >= 0) * mine
    dev[:, 5] = (snap.payload_rem / upload_bits) * mine
    return vec


def reward(time_cost: float, loss_cost: float, lam: float) -> float:
    """Negated weighted cost; both inputs normalized to comparable scales."""
    return -(lam * time_cost + (1.0 - lam) * loss_cost)


def n_step_returns(rewards, gamma: float, bootstrap: float = 0.0) -> np.ndarray:
    """Discounted suffix sums, seeded with the bootstrap value at the tail."""
    out = np.empty(len(rewards))
    acc = bootstrap
    for i in range(len(rewards) - 1, -1, -1):
        acc = rewards[i] + gamma * acc
        out[i] = acc
    return out


def advantage(returns, values) -> np.ndarray:
    returns = np.asarray(returns, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if returns.shape != values.shape:
        raise ValueError("returns/values length mismatch")
    return returns - values


@dataclass
class StepRecord:
    """One agent-step of a rollout, with cached activations for the backward pass."""

    state: np.ndarray
    actor_acts: np.ndarray
    critic_acts: np.ndarray
    sample: HeadSample
    in_cell: np.ndarray
    value: float
    reward: float = 0.0


@dataclass
class Trajectory:
    steps: list
    bootstrap: float = 0.0    # value of the post-segment state; 0 when terminal


def actor_loss_grad(net: DenseNet, layout: HeadLayout, params: ModelParams,
                    traj: Trajectory, advantages, entropy_coef: float,
                    grad: np.ndarray | None = None) -> np.ndarray:
    """Accumulated objective gradient: sum_t dlog pi(a_t|s_t) * A_t + coef * dG.

    This is the ascent direction of the entropy-regularized policy objective;
    advantages are treated as constants.
    """
    if grad is None:
        grad = np.zeros(net.n_params)
    for rec, adv in zip(traj.steps, advantages):
        out = rec.actor_acts[-net.out_dim:]
        dlogp, dent = head_grads(out, layout, rec.sample, rec.in_cell)
        dout = adv * dlogp + entropy_coef * dent
        net.backward(params, rec.state, rec.actor_acts, dout, grad)
    if not np.isfinite(grad).all():
        raise NonFiniteGradientError("actor gradient is not finite")
    return grad


def critic_loss_grad(net: DenseNet, params: ModelParams, traj: Trajectory,
                     returns, grad: np.ndarray | None = None) -> np.ndarray:
    """Accumulated gradient of sum_t (U_t - V(s_t))^2 wrt the critic params."""
    if grad is None:
        grad = np.zeros(net.n_params)
    for rec, ret in zip(traj.steps, returns):
        dout = np.array([-2.0 * (ret - rec.value)])
        net.backward(params, rec.state, rec.critic_acts, dout, grad)
    if not np.isfinite(grad).all():
        raise NonFiniteGradientError("critic gradient is not finite")
    return grad


class GlobalStore:
    """Shared actor/critic parameters, their optimizer states, and counters.

    snapshot() gives a consistent copy of each parameter set; apply() is an
    elementwise read-modify-write guarded by a lock, incrementing the global
    counter once per call. Both are safe under concurrent workers.
    """

    def __init__(self, actor_net: DenseNet, critic_net: DenseNet, rl_cfg,
                 rng: np.random.Generator):
        self.actor_net = actor_net
        self.critic_net = critic_net
        self.actor = actor_net.init_params(rng)
        self.critic = critic_net.init_params(rng)
        self.opt_actor = RmsPropState.zeros(
            actor_net.n_params, rl_cfg.rmsprop_alpha, rl_cfg.beta_actor, rl_cfg.rmsprop_eps
        )
        self.opt_critic = RmsPropState.zeros(
            critic_net.n_params, rl_cfg.rmsprop_alpha, rl_cfg.beta_critic, rl_cfg.rmsprop_eps
        )
        self.grad_clip = rl_cfg.grad_clip
        self.T = 0
        self.T_max = 0
        self.clip_events = 0
        self._lock = threading.Lock()

    def snapshot(self):
        with self._lock:
            return self.actor.values.copy(), self.critic.values.copy()

    def _clipped(self, grad: np.ndarray) -> np.ndarray:
        norm = float(np.linalg.norm(grad))
        if norm > self.grad_clip:
            self.clip_events += 1
            return grad * (self.grad_clip / norm)
        return grad

    def apply(self, d_actor: np.ndarray, d_critic: np.ndarray):
        """One asynchronous global update; actor ascends its objective,
        critic descends its loss."""
        with self._lock:
            rmsprop_update(self.opt_actor, self.actor.values, -self._clipped(d_actor))
            rmsprop_update(self.opt_critic, self.critic.values, self._clipped(d_critic))
            self.T += 1

    def save(self, out_dir):
        from pathlib import Path

        from .nets import save_checkpoint

        out = Path(out_dir)
        save_checkpoint(out / "actor.ckpt", self.actor)
        save_checkpoint(out / "critic.ckpt", self.critic)


def apply_async_update(store: GlobalStore, d_actor: np.ndarray, d_critic: np.ndarray):
    store.apply(d_actor, d_critic)


@dataclass
class Worker:
    """Thread-local parameter copies."""

    actor_params: ModelParams
    critic_params: ModelParams


def sync_worker(store: GlobalStore, worker: Worker):
    """Copy the global parameter snapshot into the worker."""
    a, c = store.snapshot()
    worker.actor_params.values[:] = a
    worker.critic_params.values[:] = c


def flop_estimate(actor_sizes, critic_sizes, episodes: int, steps: int) -> int:
    """Training cost estimate: episodes * steps * per-iteration layer products.

    Each net contributes sum over interior layers j of
    n_{j-1}*n_j + n_j*n_{j+1}.
    """

    def net_cost(sizes):
        sizes = [int(s) for s in sizes]
        return sum(
            sizes[j - 1] * sizes[j] + sizes[j] * sizes[j + 1]
            for j in range(1, len(sizes) - 1)
        )

    return episodes * steps * (net_cost(actor_sizes) + net_cost(critic_sizes))


# ---------------------------------------------------------------------------
# Training loop


@dataclass
class EpisodeRow:
    """One line of the episode cost log."""

    episode: int
    mean_cost: float        # fixed-scale weighted raw cost, comparable across episodes
    mean_reward: float      # normalized reward as trained on
    mean_c_time: float      # raw seconds
    mean_c_loss: float      # raw loss
    violations: int


def build_nets(cfg) -> tuple[DenseNet, DenseNet, HeadLayout]:
    layout = HeadLayout(cfg.num_devices, cfg.radio.num_subchannels)
    in_dim = state_dim(cfg.num_devices)
    actor = DenseNet((in_dim, *cfg.rl.hidden, layout.out_dim))
    critic = DenseNet((in_dim, *cfg.rl.hidden, 1))
    return actor, critic, layout


def make_action(sample: HeadSample, cell: int) -> SchedulingAction:
    return SchedulingAction(
        cell=cell,
        position=sample.position,
        power=sample.power,
        selection=sample.sel_bits.copy(),
        subchannel=sample.sub_idx.copy(),
    )


def policy_actions(actor_net: DenseNet, layout: HeadLayout, params: ModelParams,
                   snap: NetworkSnapshot, cfg, rng: np.random.Generator,
                   deterministic: bool = False):
    """Actions for every cell under the given actor parameters."""
    actions = []
    for cell in range(cfg.num_uavs):
        vec = encode_state(
            snap, cell, (cfg.area_x, cfg.area_y), cfg.payload_bits,
            cfg.payload_bits, cfg.radio.num_subchannels,
        )
        out = actor_net.forward(params, vec)
        sample = sample_action(
            out, layout, snap.in_cell(cell), (cfg.area_x, cfg.area_y),
            cfg.uav_power_max_w, rng, deterministic=deterministic,
        )
        actions.append(make_action(sample, cell))
    return actions


def _episode_seed(master_seed: int, episode: int) -> int:
    return int(np.random.SeedSequence((master_seed, 1000 + episode)).generate_state(1)[0])


def train(cfg, env_factory, store: GlobalStore | None = None, progress=None):
    """Run the asynchronous training loop until the episode budget is spent.

    env_factory(cfg) must build a fresh environment per worker. Returns the
    (possibly shared) GlobalStore and the per-episode cost log, ordered by
    episode index. Single-worker runs are bit-deterministic for a fixed
    config and seed.
    """
    rl = cfg.rl
    actor_net, critic_net, layout = build_nets(cfg)
    if store is None:
        init_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 17)))
        store = GlobalStore(actor_net, critic_net, rl, init_rng)
    segments_per_episode = -(-rl.slots_per_episode // rl.t_max)
    store.T_max = rl.episodes * segments_per_episode * cfg.num_uavs

    rows: list = [None] * rl.episodes
    claim_lock = threading.Lock()
    next_episode = [0]

    def claim() -> int | None:
        with claim_lock:
            if next_episode[0] >= rl.episodes:
                return None
            ep = next_episode[0]
            next_episode[0] += 1
            return ep

    def run_episode(env, worker: Worker, episode: int):
        arng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 2000 + episode)))
        snap = env.reset(_episode_seed(cfg.seed, episode))
        slots = rl.slots_per_episode
        slot = 0
        costs, rewards_all, ctimes, closses = [], [], [], []
        violations = 0
        while slot < slots:
            sync_worker(store, worker)
            seg_steps = min(rl.t_max, slots - slot)
            cell_steps: list[list[StepRecord]] = [[] for _ in range(cfg.num_uavs)]
            for _ in range(seg_steps):
                actions = []
                for cell in range(cfg.num_uavs):
                    vec = encode_state(
                        snap, cell, (cfg.area_x, cfg.area_y), cfg.payload_bits,
                        cfg.payload_bits, cfg.radio.num_subchannels,
                    )
                    acts = actor_net.forward_acts(worker.actor_params, vec)
                    vacts = critic_net.forward_acts(worker.critic_params, vec)
                    sample = sample_action(
                        acts[-actor_net.out_dim:], layout, snap.in_cell(cell),
                        (cfg.area_x, cfg.area_y), cfg.uav_power_max_w, arng,
                    )
                    cell_steps[cell].append(StepRecord(
                        state=vec, actor_acts=acts, critic_acts=vacts,
                        sample=sample, in_cell=snap.in_cell(cell),
                        value=float(vacts[-1]),
                    ))
                    actions.append(make_action(sample, cell))
                snap, metrics = env.step(actions)
                per_cell_reward = {c.cell: c.reward for c in metrics.cells}
                for cell in range(cfg.num_uavs):
                    cell_steps[cell][-1].reward = per_cell_reward.get(cell, 0.0)
                violations += metrics.violations
                for c in metrics.cells:
                    costs.append(c.cost_scaled)
                    rewards_all.append(c.reward)
                    ctimes.append(c.c_time_raw)
                    closses.append(c.c_loss_raw)
                slot += 1
            terminal = slot >= slots
            for cell in range(cfg.num_uavs):
                steps = cell_steps[cell]
                if terminal:
                    bootstrap = 0.0
                else:
                    vec = encode_state(
                        snap, cell, (cfg.area_x, cfg.area_y), cfg.payload_bits,
                        cfg.payload_bits, cfg.radio.num_subchannels,
                    )
                    bootstrap = float(critic_net.forward(worker.critic_params, vec)[0])
                traj = Trajectory(steps=steps, bootstrap=bootstrap)
                rets = n_step_returns([s.reward for s in steps], rl.gamma, traj.bootstrap)
                advs = advantage(rets, [s.value for s in steps])
                d_actor = actor_loss_grad(
                    actor_net, layout, worker.actor_params, traj, advs, rl.entropy_coef
                )
                d_critic = critic_loss_grad(critic_net, worker.critic_params, traj, rets)
                store.apply(d_actor, d_critic)
        n = max(1, len(costs))
        rows[episode] = EpisodeRow(
            episode=episode,
            mean_cost=sum(costs) / n,
            mean_reward=sum(rewards_all) / n,
            mean_c_time=sum(ctimes) / n,
            mean_c_loss=sum(closses) / n,
            violations=violations,
        )
        if progress is not None:
            progress(rows[episode])

    def worker_loop(worker_id: int):
        env = env_factory(cfg)
        worker = Worker(
            actor_params=ModelParams(np.zeros(actor_net.n_params), actor_net.sizes),
            critic_params=ModelParams(np.zeros(critic_net.n_params), critic_net.sizes),
        )
        while True:
            ep = claim()
            if ep is None:
                return
            run_episode(env, worker, ep)

    if rl.workers == 1:
        worker_loop(0)
    else:
        threads = [
            threading.Thread(target=worker_loop, args=(w,), daemon=True)
            for w in range(rl.workers)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    return store, [r for r in rows if r is not None]
