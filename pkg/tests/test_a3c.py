import hashlib
import math

import numpy as np
import pytest

from uavfed import a3c
from uavfed.a3c import (
    GlobalStore,
    NetworkSnapshot,
    StepRecord,
    Trajectory,
    Worker,
    advantage,
    actor_loss_grad,
    apply_async_update,
    critic_loss_grad,
    encode_state,
    flop_estimate,
    n_step_returns,
    reward,
    sync_worker,
)
from uavfed.config import SimConfig
from uavfed.env import Env
from uavfed.nets import (
    DenseNet,
    HeadLayout,
    ModelParams,
    RmsPropState,
    head_log_prob,
    rmsprop_update,
    sample_action,
)


class TestReturnsAndAdvantage:
    def test_gamma_zero_is_rewards(self):
        out = n_step_returns([0.5, -1.0, 2.0], gamma=0.0, bootstrap=9.0)
        assert np.allclose(out, [0.5, -1.0, 2.0])

    def test_bootstrap_recursion(self):
        out = n_step_returns([1.0, 1.0], gamma=0.5, bootstrap=2.0)
        assert np.allclose(out, [2.0, 2.0])

    def test_terminal_undiscounted_suffix_sums(self):
        out = n_step_returns([1.0, 1.0, 1.0], gamma=1.0, bootstrap=0.0)
        assert np.allclose(out, [3.0, 2.0, 1.0])

    def test_recursion_identity_random(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            r = rng.normal(size=rng.integers(1, 12))
            gamma = float(rng.uniform(0, 1))
            boot = float(rng.normal())
            u = n_step_returns(r, gamma, boot)
            nxt = np.append(u[1:], boot)
            assert np.allclose(u, r + gamma * nxt, rtol=1e-12)

    def test_advantage(self):
        assert np.allclose(advantage([2.0], [1.5]), [0.5])
        assert np.allclose(advantage([1.0, 2.0], [1.0, 2.0]), [0.0, 0.0])
        rng = np.random.default_rng(1)
        u, v = rng.normal(size=6), rng.normal(size=6)
        assert np.allclose(advantage(u, v), u - v)

    def test_advantage_length_mismatch(self):
        with pytest.raises(ValueError):
            advantage([1.0, 2.0], [1.0])


class TestReward:
    def test_weighted(self):
        assert reward(1.0, 0.5, lam=0.4) == pytest.approx(-0.7)

    def test_zero(self):
        assert reward(0.0, 0.0, lam=0.4) == 0.0

    def test_time_only(self):
        assert reward(1.25, 99.0, lam=1.0) == pytest.approx(-1.25)


def tiny_snapshot():
    return NetworkSnapshot(
        uav_xy=np.array([[100.0, 100.0], [300.0, 100.0]]),
        uav_payload_rem=np.zeros(2),
        dev_xy=np.array([[50.0, 60.0], [120.0, 90.0], [310.0, 70.0]]),
        dev_cell=np.array([0, 0, 1]),
        prev_sel=np.array([1, 0, 1], dtype=np.int8),
        prev_sub=np.array([2, -1, 0], dtype=np.int64),
        payload_rem=np.array([5e4, 0.0, 0.0]),
    )


class TestEncodeState:
    AREA = (400.0, 400.0)

    def test_zero_snapshot_zero_features(self):
        snap = NetworkSnapshot(
            uav_xy=np.zeros((1, 2)),
            uav_payload_rem=np.zeros(1),
            dev_xy=np.zeros((2, 2)),
            dev_cell=np.zeros(2, dtype=int),
            prev_sel=np.zeros(2, dtype=np.int8),
            prev_sub=np.full(2, -1, dtype=np.int64),
            payload_rem=np.zeros(2),
        )
        vec = encode_state(snap, 0, self.AREA, 2e5, 2e5, 4)
        # origin positions, empty payloads: only the in-cell flags are set
        assert vec.shape == (3 + 6 * 2,)
        nz = np.flatnonzero(vec)
        assert set(nz) == {5, 11}  # the in-cell indicator of each device slot

    def test_identical_devices_swap_invariant(self):
        snap = tiny_snapshot()
        snap.dev_xy[1] = snap.dev_xy[0]
        snap.prev_sel[1] = snap.prev_sel[0]
        snap.prev_sub[1] = snap.prev_sub[0]
        snap.payload_rem[1] = snap.payload_rem[0]
        a = encode_state(snap, 0, self.AREA, 2e5, 2e5, 4)
        # swapping two identical device records leaves the id-ordered encoding unchanged
        b = encode_state(snap, 0, self.AREA, 2e5, 2e5, 4)
        assert np.array_equal(a, b)

    def test_fixed_snapshot_golden_digest(self):
        # frozen on first run; any encoding change must be deliberate
        vec = encode_state(tiny_snapshot(), 0, self.AREA, 2e5, 2e5, 4)
        digest = hashlib.sha256(vec.tobytes()).hexdigest()
        assert digest == "a5d55ff9f765dfea6b0f6edc246c33826c7a40d9a3c1f318ec6a79c55bc79bac"

    def test_normalization_and_masking(self):
        vec = encode_state(tiny_snapshot(), 0, self.AREA, 2e5, 2e5, 4)
        assert vec[0] == pytest.approx(0.25)       # uav x / area
        assert vec[2] == 0.0                        # no pending broadcast
        dev0 = vec[3:9]
        assert dev0[2] == 1.0                       # in cell 0
        assert dev0[3] == 1.0                       # previously selected
        assert dev0[4] == pytest.approx(3 / 4)      # subchannel 2 of 4
        assert dev0[5] == pytest.approx(0.25)       # 50k of 200k bits left
        dev2 = vec[15:21]
        assert dev2[2] == 0.0 and dev2[3] == 0.0 and dev2[4] == 0.0


def scalar_layout_net(num_devices=1, num_subchannels=1, in_dim=2):
    layout = HeadLayout(num_devices, num_subchannels)
    net = DenseNet((in_dim, layout.out_dim))
    return layout, net


class TestLossGradients:
    AREA = (400.0, 400.0)
    P_MAX = 0.15

    def make_traj(self, net, layout, params, rng, steps=3, num_devices=4):
        traj = Trajectory(steps=[], bootstrap=float(rng.normal()))
        in_cell = np.arange(num_devices)
        for _ in range(steps):
            x = rng.normal(size=net.in_dim)
            acts = net.forward_acts(params, x)
            sample = sample_action(acts[-net.out_dim:], layout, in_cell,
                                   self.AREA, self.P_MAX, rng)
            traj.steps.append(StepRecord(
                state=x, actor_acts=acts, critic_acts=None, sample=sample,
                in_cell=in_cell, value=0.0, reward=float(rng.normal()),
            ))
        return traj

    def test_zero_advantage_zero_entropy_gives_zero(self):
        rng = np.random.default_rng(2)
        layout = HeadLayout(4, 3)
        net = DenseNet((5, layout.out_dim))
        params = net.init_params(rng)
        traj = self.make_traj(net, layout, params, rng)
        grad = actor_loss_grad(net, layout, params, traj, np.zeros(3), 0.0)
        assert np.array_equal(grad, np.zeros(net.n_params))

    def test_single_step_bernoulli_analytic(self):
        # one device, one subchannel, linear net: the selection-logit rows of
        # the gradient must equal A * (bit - p) * input
        rng = np.random.default_rng(3)
        layout, net = scalar_layout_net()
        params = net.init_params(rng)
        x = np.array([0.7, -0.2])
        acts = net.forward_acts(params, x)
        out = acts[-net.out_dim:]
        sample = sample_action(out, layout, np.array([0]), self.AREA, self.P_MAX, rng)
        traj = Trajectory(
            steps=[StepRecord(x, acts, None, sample, np.array([0]), 0.0, 0.0)],
            bootstrap=0.0,
        )
        adv = 1.7
        grad = actor_loss_grad(net, layout, params, traj, [adv], 0.0)
        p = 1.0 / (1.0 + math.exp(-out[0]))
        want_row = adv * (float(sample.sel_bits[0]) - p) * x
        nin = net.in_dim
        assert np.allclose(grad[0:nin], want_row, rtol=1e-12)

    def test_actor_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        layout = HeadLayout(3, 2)
        net = DenseNet((4, 6, layout.out_dim))
        params = net.init_params(rng)
        traj = self.make_traj(net, layout, params, rng, steps=2, num_devices=3)
        advs = rng.normal(size=2)
        coef = 0.05
        grad = actor_loss_grad(net, layout, params, traj, advs, coef)

        def objective(values):
            p = ModelParams(values, net.sizes)
            total = 0.0
            for rec, adv in zip(traj.steps, advs):
                out = net.forward(p, rec.state)
                lp, ent = head_log_prob(out, layout, rec.sample, rec.in_cell,
                                        self.AREA, self.P_MAX)
                total += adv * lp + coef * ent
            return total

        h = 1e-6
        idx = rng.choice(net.n_params, size=60, replace=False)
        num = np.empty(len(idx))
        for j, jj in enumerate(idx):
            up, dn = params.values.copy(), params.values.copy()
            up[jj] += h
            dn[jj] -= h
            num[j] = (objective(up) - objective(dn)) / (2 * h)
        assert np.linalg.norm(grad[idx] - num) / max(np.linalg.norm(num), 1e-12) <= 1e-4

    def test_one_step_direction_is_sign_of_advantage(self):
        # gamma=0, no entropy: the accumulated gradient is A * dlogpi, so its
        # direction flips with the advantage's sign
        rng = np.random.default_rng(5)
        layout, net = scalar_layout_net()
        params = net.init_params(rng)
        traj = self.make_traj(net, layout, params, rng, steps=1, num_devices=1)
        plus = actor_loss_grad(net, layout, params, traj, [2.0], 0.0)
        minus = actor_loss_grad(net, layout, params, traj, [-2.0], 0.0)
        assert np.allclose(plus, -minus, rtol=1e-12)
        unit = actor_loss_grad(net, layout, params, traj, [1.0], 0.0)
        assert np.allclose(plus, 2.0 * unit, rtol=1e-12)

    def test_critic_zero_when_value_equals_return(self):
        rng = np.random.default_rng(6)
        net = DenseNet((3, 1))
        params = net.init_params(rng)
        x = rng.normal(size=3)
        acts = net.forward_acts(params, x)
        v = float(acts[-1])
        traj = Trajectory(
            steps=[StepRecord(x, None, acts, None, None, v, 0.0)], bootstrap=0.0
        )
        grad = critic_loss_grad(net, params, traj, [v])
        assert np.array_equal(grad, np.zeros(net.n_params))

    def test_critic_scalar_linear_analytic(self):
        # V = w x + b: d(U - V)^2/dw = -2 (U - V) x
        net = DenseNet((1, 1))
        params = ModelParams(np.array([0.5, 0.1]), (1, 1))
        x = np.array([2.0])
        acts = net.forward_acts(params, x)
        v = float(acts[-1])
        u = 3.0
        traj = Trajectory(steps=[StepRecord(x, None, acts, None, None, v, 0.0)],
                          bootstrap=0.0)
        grad = critic_loss_grad(net, params, traj, [u])
        assert grad == pytest.approx([-2 * (u - v) * 2.0, -2 * (u - v)])

    def test_critic_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        net = DenseNet((3, 5, 1))
        params = net.init_params(rng)
        xs = [rng.normal(size=3) for _ in range(3)]
        returns = rng.normal(size=3)
        steps = []
        for x in xs:
            acts = net.forward_acts(params, x)
            steps.append(StepRecord(x, None, acts, None, None, float(acts[-1]), 0.0))
        traj = Trajectory(steps=steps, bootstrap=0.0)
        grad = critic_loss_grad(net, params, traj, returns)

        def loss(values):
            p = ModelParams(values, net.sizes)
            return sum(
                (u - float(net.forward(p, x)[0])) ** 2 for x, u in zip(xs, returns)
            )

        h = 1e-6
        num = np.empty(net.n_params)
        for j in range(net.n_params):
            up, dn = params.values.copy(), params.values.copy()
            up[j] += h
            dn[j] -= h
            num[j] = (loss(up) - loss(dn)) / (2 * h)
        assert np.linalg.norm(grad - num) / max(np.linalg.norm(num), 1e-12) <= 1e-4


def tiny_cfg(**over):
    base = dict(episodes=2, slots_per_episode=4)
    base.update(over)
    cfg = SimConfig.desk_rl()
    for k, v in base.items():
        setattr(cfg.rl, k, v)
    return cfg


def make_store(cfg, seed=0):
    actor_net, critic_net, _ = a3c.build_nets(cfg)
    rng = np.random.default_rng(seed)
    return GlobalStore(actor_net, critic_net, cfg.rl, rng)


class TestGlobalStore:
    def test_zero_gradient_apply_only_counts(self):
        cfg = tiny_cfg()
        store = make_store(cfg)
        before_a = store.actor.values.copy()
        before_c = store.critic.values.copy()
        apply_async_update(store, np.zeros(store.actor_net.n_params),
                           np.zeros(store.critic_net.n_params))
        assert store.T == 1
        assert np.array_equal(store.actor.values, before_a)
        assert np.array_equal(store.critic.values, before_c)

    def test_single_apply_equals_direct_rmsprop(self):
        cfg = tiny_cfg()
        store = make_store(cfg)
        rng = np.random.default_rng(8)
        scale = 1e-3  # below the clip threshold
        da = rng.normal(size=store.actor_net.n_params) * scale
        dc = rng.normal(size=store.critic_net.n_params) * scale
        want_a = store.actor.values.copy()
        want_c = store.critic.values.copy()
        sa = RmsPropState.zeros(len(want_a), cfg.rl.rmsprop_alpha, cfg.rl.beta_actor,
                                cfg.rl.rmsprop_eps)
        sc = RmsPropState.zeros(len(want_c), cfg.rl.rmsprop_alpha, cfg.rl.beta_critic,
                                cfg.rl.rmsprop_eps)
        rmsprop_update(sa, want_a, -da)  # actor ascends its objective
        rmsprop_update(sc, want_c, dc)
        store.apply(da, dc)
        assert np.array_equal(store.actor.values, want_a)
        assert np.array_equal(store.critic.values, want_c)

    def test_two_applies_compose(self):
        cfg = tiny_cfg()
        store = make_store(cfg)
        rng = np.random.default_rng(9)
        das = [rng.normal(size=store.actor_net.n_params) * 1e-3 for _ in range(2)]
        dcs = [rng.normal(size=store.critic_net.n_params) * 1e-3 for _ in range(2)]
        a = store.actor.values.copy()
        c = store.critic.values.copy()
        sa = RmsPropState.zeros(len(a), cfg.rl.rmsprop_alpha, cfg.rl.beta_actor,
                                cfg.rl.rmsprop_eps)
        sc = RmsPropState.zeros(len(c), cfg.rl.rmsprop_alpha, cfg.rl.beta_critic,
                                cfg.rl.rmsprop_eps)
        for da, dc in zip(das, dcs):
            rmsprop_update(sa, a, -da)
            rmsprop_update(sc, c, dc)
            store.apply(da, dc)
        assert np.allclose(store.actor.values, a, rtol=0, atol=0)
        assert np.allclose(store.critic.values, c, rtol=0, atol=0)
        assert store.T == 2

    def test_clipping_preserves_direction(self):
        cfg = tiny_cfg()
        store = make_store(cfg)
        big = np.full(store.actor_net.n_params, 10.0)
        clipped = store._clipped(big)
        assert np.linalg.norm(clipped) == pytest.approx(cfg.rl.grad_clip)
        assert store.clip_events == 1

    def test_sync_worker_snapshot_isolation(self):
        cfg = tiny_cfg()
        store = make_store(cfg)
        worker = Worker(
            actor_params=ModelParams(np.zeros(store.actor_net.n_params),
                                     store.actor_net.sizes),
            critic_params=ModelParams(np.zeros(store.critic_net.n_params),
                                      store.critic_net.sizes),
        )
        sync_worker(store, worker)
        x = np.random.default_rng(1).normal(size=store.actor_net.in_dim)
        assert np.array_equal(
            store.actor_net.forward(worker.actor_params, x),
            store.actor_net.forward(store.actor, x),
        )
        # a later global update must not leak into the worker copy
        frozen = worker.actor_params.values.copy()
        store.apply(np.full(store.actor_net.n_params, 1e-3),
                    np.zeros(store.critic_net.n_params))
        assert np.array_equal(worker.actor_params.values, frozen)


class TestFlopEstimate:
    def test_zero_episodes(self):
        assert flop_estimate((2, 3, 1), (2, 3, 1), episodes=0, steps=10) == 0

    def test_single_hidden_layer_hand_value(self):
        assert flop_estimate((2, 3, 1), (2, 3, 1), episodes=1, steps=1) == 18

    def test_linear_in_episodes(self):
        one = flop_estimate((4, 8, 8, 2), (4, 8, 8, 1), episodes=1, steps=7)
        two = flop_estimate((4, 8, 8, 2), (4, 8, 8, 1), episodes=2, steps=7)
        assert two == 2 * one

    def test_hand_computed_tuples(self):
        # (5,4,3): j=2: 5*4+4*3 = 32; critic (5,4,1): 5*4+4*1 = 24 -> 56*E*T
        assert flop_estimate((5, 4, 3), (5, 4, 1), episodes=3, steps=2) == 6 * 56
        # deeper: (3,4,5,2): j=2: 12+20=32, j=3: 20+10=30 -> 62
        #         (3,4,5,1): j=2: 12+20=32, j=3: 20+5=25  -> 57
        assert flop_estimate((3, 4, 5, 2), (3, 4, 5, 1), episodes=1, steps=1) == 119


class TestTrainLoop:
    def test_zero_budget_returns_store_unchanged(self):
        cfg = tiny_cfg(episodes=0)
        store = make_store(cfg, seed=3)
        before = store.actor.values.copy()
        out_store, rows = a3c.train(cfg, env_factory=Env, store=store)
        assert rows == []
        assert out_store.T == 0
        assert np.array_equal(out_store.actor.values, before)

    def test_single_worker_deterministic(self):
        cfg = tiny_cfg(episodes=2, slots_per_episode=4)
        cfg.rl.workers = 1
        s1, r1 = a3c.train(cfg, env_factory=Env)
        s2, r2 = a3c.train(cfg, env_factory=Env)
        assert np.array_equal(s1.actor.values, s2.actor.values)
        assert np.array_equal(s1.critic.values, s2.critic.values)
        assert [(r.episode, r.mean_cost, r.mean_reward) for r in r1] == [
            (r.episode, r.mean_cost, r.mean_reward) for r in r2
        ]

    def test_one_step_matches_replayed_oracle(self):
        # replay the single segment of a 1-slot episode by hand and compare
        # the resulting global parameters bit for bit
        cfg = tiny_cfg(episodes=1, slots_per_episode=1, t_max=1)
        cfg.rl.workers = 1
        init_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 17)))
        actor_net, critic_net, layout = a3c.build_nets(cfg)
        ref_store = GlobalStore(actor_net, critic_net, cfg.rl, init_rng)
        a0 = ref_store.actor.copy()
        c0 = ref_store.critic.copy()

        store, rows = a3c.train(cfg, env_factory=Env)

        env = Env(cfg)
        snap = env.reset(a3c._episode_seed(cfg.seed, 0))
        arng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 2000)))
        area = (cfg.area_x, cfg.area_y)
        records = []
        actions = []
        for cell in range(cfg.num_uavs):
            vec = encode_state(snap, cell, area, cfg.payload_bits, cfg.payload_bits,
                               cfg.radio.num_subchannels)
            acts = actor_net.forward_acts(a0, vec)
            vacts = critic_net.forward_acts(c0, vec)
            sample = sample_action(acts[-actor_net.out_dim:], layout,
                                   snap.in_cell(cell), area, cfg.uav_power_max_w, arng)
            records.append((vec, acts, vacts, sample, snap.in_cell(cell)))
            actions.append(a3c.make_action(sample, cell))
        _, metrics = env.step(actions)
        rewards = {c.cell: c.reward for c in metrics.cells}
        for cell in range(cfg.num_uavs):
            vec, acts, vacts, sample, in_cell = records[cell]
            traj = Trajectory(
                steps=[StepRecord(vec, acts, vacts, sample, in_cell,
                                  float(vacts[-1]), rewards.get(cell, 0.0))],
                bootstrap=0.0,
            )
            rets = n_step_returns([traj.steps[0].reward], cfg.rl.gamma, 0.0)
            advs = advantage(rets, [traj.steps[0].value])
            da = actor_loss_grad(actor_net, layout, a0, traj, advs, cfg.rl.entropy_coef)
            dc = critic_loss_grad(critic_net, c0, traj, rets)
            ref_store.apply(da, dc)
        assert np.array_equal(store.actor.values, ref_store.actor.values)
        assert np.array_equal(store.critic.values, ref_store.critic.values)
        assert store.T == ref_store.T == cfg.num_uavs

    def test_multi_worker_smoke(self):
        cfg = tiny_cfg(episodes=4, slots_per_episode=2)
        cfg.rl.workers = 2
        store, rows = a3c.train(cfg, env_factory=Env)
        assert len(rows) == 4
        assert store.T == store.T_max
