"""Simulation configuration: schema, validation, presets, JSON round-trip.

Every default is annotated with its origin: "setup" marks values taken from
the reference simulation setup this simulator mirrors, "chosen" marks values
that setup leaves open and this implementation fixes. All of them can be
overridden from a JSON config file.
"""

from dataclasses import asdict, dataclass, field, fields
import json
import math
import warnings

from .channel import RadioParams
from .errors import InvalidConfigError
from .fedcore import FLConfig


@dataclass
class DataConfig:
    """Synthetic task distribution."""

    num_features: int = 20      # chosen
    num_classes: int = 10       # chosen
    separation: float = 3.0     # chosen: class-mean radius
    noise_std: float = 1.0      # chosen
    dirichlet_alpha: float = 0.5  # chosen: per-device label skew
    eval_samples: int = 500     # chosen

    def validate(self):
        if self.num_features < 1 or self.num_classes < 2:
            raise InvalidConfigError("need >=1 feature and >=2 classes")
        if self.separation <= 0 or self.noise_std <= 0:
            raise InvalidConfigError("separation/noise_std must be positive")
        if self.dirichlet_alpha <= 0:
            raise InvalidConfigError("dirichlet_alpha must be positive")
        if self.eval_samples < 1:
            raise InvalidConfigError("eval_samples must be >= 1")


@dataclass
class RLConfig:
    """Scheduler-training hyperparameters."""

    beta_actor: float = 1e-4    # setup
    beta_critic: float = 1e-3   # setup
    gamma: float = 0.98         # setup
    entropy_coef: float = 0.01  # chosen
    t_max: int = 8              # chosen: rollout segment length
    workers: int = 4            # chosen
    hidden: tuple = (256, 256, 128)  # setup
    rmsprop_alpha: float = 0.99     # chosen
    rmsprop_eps: float = 1e-5       # chosen
    grad_clip: float = 5.0          # chosen: global-norm cap before the optimizer
    shared_g: bool = True           # chosen: one squared-gradient accumulator across workers
    slots_per_episode: int = 40     # chosen
    episodes: int = 500             # chosen
    time_scale: float = 1.0         # chosen: seconds, for the comparable cost column
    loss_scale: float = math.log(10.0)  # chosen: ~initial cross-entropy

    def validate(self):
        if self.beta_actor <= 0 or self.beta_critic <= 0:
            raise InvalidConfigError("learning rates must be positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise InvalidConfigError("gamma must be in [0, 1]")
        if self.t_max < 1 or self.workers < 1:
            raise InvalidConfigError("t_max and workers must be >= 1")
        if self.slots_per_episode < 1 or self.episodes < 0:
            raise InvalidConfigError("episode shape out of range")
        if self.entropy_coef < 0 or self.grad_clip <= 0:
            raise InvalidConfigError("entropy_coef/grad_clip out of range")
        if not 0 <= self.rmsprop_alpha < 1 or self.rmsprop_eps <= 0:
            raise InvalidConfigError("rmsprop constants out of range")
        if self.time_scale <= 0 or self.loss_scale <= 0:
            raise InvalidConfigError("cost scales must be positive")
        if self.beta_actor > self.beta_critic / 5.0:
            warnings.warn(
                "actor learning rate should be well below the critic's "
                f"(beta_actor={self.beta_actor} > beta_critic/5={self.beta_critic / 5.0}); "
                "convergence is only guaranteed on separated timescales",
                stacklevel=2,
            )


@dataclass
class SimConfig:
    """Full simulator configuration."""

    area_x: float = 400.0       # setup
    area_y: float = 400.0       # setup
    num_uavs: int = 4           # setup
    uav_height: float = 150.0   # setup
    num_devices: int = 150      # setup
    vol_bits_min: float = 5e6   # setup: per-device data volume lower bound
    vol_bits_max: float = 10e6  # setup
    vol_bits_per_sample: float = 150e3  # chosen: maps volume to sample counts
    dev_cpu_min: float = 1.0e9  # setup
    dev_cpu_max: float = 2.0e9  # setup
    dev_cycles_per_sample: float = 1e6  # chosen
    uav_cpu_hz: float = 3.0e9           # chosen
    uav_cycles_per_sample: float = 1e5  # chosen
    dev_power_w: float = 0.05   # setup
    uav_power_max_w: float = 0.15  # setup
    payload_bits: float = 200e3    # setup: model-parameter transfer size
    lam: float = 0.4               # setup: time/loss weight
    low_quality_frac: float = 0.0  # chosen per experiment
    label_noise: float = 0.3       # chosen: noise rate on low-quality devices
    select_count: int = 10         # chosen: k for the selection baselines
    fl_mode: str = "afl"           # afl | sfl
    seed: int = 0
    radio: RadioParams = field(default_factory=RadioParams)
    data: DataConfig = field(default_factory=DataConfig)
    fl: FLConfig = field(default_factory=FLConfig)
    rl: RLConfig = field(default_factory=RLConfig)

    def validate(self) -> "SimConfig":
        if self.area_x <= 0 or self.area_y <= 0:
            raise InvalidConfigError("service area must have positive extent")
        if self.num_uavs < 1 or self.num_devices < 1:
            raise InvalidConfigError("need at least one UAV and one device")
        if self.uav_height <= 0:
            raise InvalidConfigError("uav_height must be positive")
        if not 0 < self.vol_bits_min <= self.vol_bits_max:
            raise InvalidConfigError("data-volume bounds out of order")
        if self.vol_bits_per_sample <= 0:
            raise InvalidConfigError("vol_bits_per_sample must be positive")
        if not 0 < self.dev_cpu_min <= self.dev_cpu_max:
            raise InvalidConfigError("device CPU bounds out of order")
        if min(self.dev_cycles_per_sample, self.uav_cycles_per_sample,
               self.uav_cpu_hz, self.dev_power_w, self.uav_power_max_w,
               self.payload_bits) <= 0:
            raise InvalidConfigError("physical constants must be positive")
        if not 0.0 <= self.lam <= 1.0:
            raise InvalidConfigError("lam must be in [0, 1]")
        if not 0.0 <= self.low_quality_frac <= 1.0:
            raise InvalidConfigError("low_quality_frac must be in [0, 1]")
        if not 0.0 <= self.label_noise <= 1.0:
            raise InvalidConfigError("label_noise must be in [0, 1]")
        if not 1 <= self.select_count <= self.num_devices:
            raise InvalidConfigError("select_count out of range")
        if self.select_count > self.radio.num_subchannels:
            raise InvalidConfigError("select_count cannot exceed the subchannel budget")
        if self.fl_mode not in ("afl", "sfl"):
            raise InvalidConfigError(f"unknown fl_mode {self.fl_mode!r}")
        self.data.validate()
        self.rl.validate()
        return self

    # -- presets ------------------------------------------------------------

    @classmethod
    def desk_fl(cls, **overrides) -> "SimConfig":
        """Small single-cell preset for federated-round experiments."""
        base = dict(
            num_uavs=1, num_devices=40, low_quality_frac=0.2,
            select_count=12, area_x=400.0, area_y=400.0,
            radio=RadioParams(num_subchannels=12, bw_uplink_hz=12e6),
            fl=FLConfig(eta=0.25, local_iters=10, max_rounds=60),
        )
        base.update(overrides)
        return cls(**base).validate()

    @classmethod
    def desk_rl(cls, **overrides) -> "SimConfig":
        """Small two-cell preset for scheduler training."""
        base = dict(
            num_uavs=2, num_devices=16, low_quality_frac=0.25,
            select_count=4, area_x=400.0, area_y=400.0,
            radio=RadioParams(num_subchannels=4, bw_uplink_hz=4e6),
            fl=FLConfig(eta=0.25, local_iters=10),
            rl=RLConfig(hidden=(64, 64, 32), slots_per_episode=20,
                        episodes=500, workers=1),
        )
        base.update(overrides)
        return cls(**base).validate()

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rl"]["hidden"] = list(self.rl.hidden)
        d["fl"]["hidden"] = list(self.fl.hidden)
        return d

    @classmethod
    def from_dict(cls, raw: dict) -> "SimConfig":
        def build(dc_type, values, where):
            if not isinstance(values, dict):
                raise InvalidConfigError(f"{where}: expected an object")
            known = {f.name: f for f in fields(dc_type)}
            unknown = set(values) - set(known)
            if unknown:
                raise InvalidConfigError(f"{where}: unknown keys {sorted(unknown)}")
            kwargs = {}
            for name, value in values.items():
                if name in _NESTED:
                    kwargs[name] = build(_NESTED[name], value, f"{where}.{name}")
                elif name == "hidden":
                    kwargs[name] = tuple(int(v) for v in value)
                else:
                    kwargs[name] = value
            try:
                return dc_type(**kwargs)
            except (TypeError, ValueError) as exc:
                raise InvalidConfigError(f"{where}: {exc}") from exc

        cfg = build(cls, raw, "config")
        return cfg.validate()

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "SimConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(raw)


_NESTED = {"radio": RadioParams, "data": DataConfig, "fl": FLConfig, "rl": RLConfig}
