"""The five agent networks over a shared low-dimensional abstract state.

An :class:`Agent` bundles the encoder, transition, reward, discount and
Q networks plus buffered (target) copies of the encoder and Q network.
Every network except the encoder consumes only abstract states and action
encodings; the encoder is the single component that touches raw pixels.

Two abstract-state layouts exist:
  * flat: a vector of ``n_latent`` features (the encoder's conv stack is
    followed by a dense funnel),
  * grid: an ``(8, 8, c)`` channels-last map (the conv stack is followed by
    a 1x1 convolution; all heads are convolutional).

Action conditioning: flat networks concatenate a one-hot action to the
state vector; grid networks append one constant plane per action.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn.layers import LayerSpec, Network
from .nn.tensor import ShapeError, Tensor, concat

__all__ = ["Profile", "PROFILES", "Agent", "build_agent"]

TARGET_SYNC_INTERVAL = 1000  # training steps between buffered-parameter syncs


def _conv(ch: int, k: int) -> LayerSpec:
    return LayerSpec("conv2d", units=ch, kernel=(k, k))


def _pool(k: int) -> LayerSpec:
    return LayerSpec("maxpool2d", kernel=(k, k))


def _dense(units: int) -> LayerSpec:
    return LayerSpec("dense", units=units)


_TANH = LayerSpec("tanh")

# Shared encoder trunk: 8ch 2x2 / 16ch 2x2 / pool 2 / 32ch 3x3 / pool 3.
_ENCODER_TRUNK = [
    _conv(8, 2), _TANH,
    _conv(16, 2), _TANH,
    _pool(2),
    _conv(32, 3), _TANH,
    _pool(3),
]


@dataclass(frozen=True)
class Profile:
    """Architecture profile for one experiment family."""

    name: str
    obs_shape: tuple[int, int]
    n_actions: int
    latent_shape: tuple[int, ...]  # (n,) flat or (h, w, c) grid

    @property
    def flat(self) -> bool:
        return len(self.latent_shape) == 1

    @property
    def latent_size(self) -> int:
        return int(np.prod(self.latent_shape))


PROFILES: dict[str, Profile] = {
    "labyrinth2d": Profile("labyrinth2d", (48, 48), 4, (2,)),
    "catcher3d": Profile("catcher3d", (36, 36), 2, (3,)),
    "meta3x8x8": Profile("meta3x8x8", (48, 48), 4, (8, 8, 3)),
}


def _encoder_specs(p: Profile) -> list[LayerSpec]:
    if p.flat:
        return _ENCODER_TRUNK + [
            _dense(200), _TANH,
            _dense(100), _TANH,
            _dense(50), _TANH,
            _dense(10), _TANH,
            _dense(p.latent_size),
        ]
    return _ENCODER_TRUNK + [_conv(p.latent_shape[-1], 1)]


def _transition_specs(p: Profile) -> list[LayerSpec]:
    if p.flat:
        return [
            _dense(10), _TANH,
            _dense(30), _TANH,
            _dense(30), _TANH,
            _dense(10), _TANH,
            _dense(p.latent_size),
        ]
    # Conv funnel over the state grid; the final 1x1 projection restores the
    # latent channel count so the residual update is well defined.
    return [
        _conv(16, 1), _TANH,
        _conv(32, 2), _TANH,
        _conv(64, 3), _TANH,
        _conv(32, 2), _TANH,
        _conv(16, 1), _TANH,
        _conv(p.latent_shape[-1], 1),
    ]


def _scalar_head_specs(p: Profile) -> list[LayerSpec]:
    if p.flat:
        return [
            _dense(10), _TANH,
            _dense(50), _TANH,
            _dense(20), _TANH,
            _dense(1),
        ]
    return [
        _conv(16, 2), _TANH,
        _conv(32, 3), _TANH,
        _pool(2),
        _conv(16, 2), _TANH,
        _conv(4, 1), _TANH,
        _dense(200), _TANH,
        _dense(50), _TANH,
        _dense(20), _TANH,
        _dense(1),
    ]


def _q_specs(p: Profile) -> list[LayerSpec]:
    if p.flat:
        return [
            _dense(20), _TANH,
            _dense(50), _TANH,
            _dense(20), _TANH,
            _dense(p.n_actions),
        ]
    return [
        _conv(16, 2), _TANH,
        _conv(32, 3), _TANH,
        _pool(2),
        _conv(16, 2), _TANH,
        _conv(4, 1), _TANH,
        _dense(200), _TANH,
        _dense(50), _TANH,
        _dense(20), _TANH,
        _dense(p.n_actions),
    ]


# Discount outputs are squashed into [0, 1); 1 is excluded so planned
# returns stay finite at any depth.
DISCOUNT_CAP = 1.0 - 1e-6


@dataclass
class Agent:
    """Networks plus buffered target copies and the sync step counter."""

    profile: Profile
    encoder: Network
    transition: Network
    reward: Network
    discount: Network
    qnet: Network
    encoder_target: Network
    q_target: Network
    steps_done: int = 0

    # -- observation/state plumbing ------------------------------------------

    def _obs_batch(self, obs: np.ndarray) -> Tensor:
        arr = np.asarray(obs, dtype=np.float32)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3 or arr.shape[1:] != self.profile.obs_shape:
            raise ShapeError(
                f"{self.profile.name}: expected observations of shape "
                f"{self.profile.obs_shape}, got {arr.shape}"
            )
        return Tensor(arr.reshape(arr.shape + (1,)))

    def _state_batch(self, x) -> Tensor:
        t = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float32))
        ls = self.profile.latent_shape
        if t.shape == ls:
            t = t.reshape((1,) + ls)
        if t.shape[1:] != ls:
            raise ShapeError(
                f"{self.profile.name}: expected abstract states of shape {ls}, "
                f"got {t.shape}"
            )
        return t

    def _action_planes(self, actions: np.ndarray, batch: int) -> Tensor:
        """One-hot action encoding: vector (flat) or constant planes (grid)."""
        a = np.asarray(actions, dtype=np.int64)
        if a.ndim == 0:
            a = np.full(batch, int(a))
        if a.shape != (batch,):
            raise ShapeError(f"expected {batch} actions, got shape {a.shape}")
        if np.any((a < 0) | (a >= self.profile.n_actions)):
            raise ValueError(
                f"action index out of range [0, {self.profile.n_actions}): {a}"
            )
        onehot = np.zeros((batch, self.profile.n_actions), dtype=np.float32)
        onehot[np.arange(batch), a] = 1.0
        if self.profile.flat:
            return Tensor(onehot)
        h, w, _ = self.profile.latent_shape
        planes = np.broadcast_to(
            onehot[:, None, None, :], (batch, h, w, self.profile.n_actions)
        )
        return Tensor(np.ascontiguousarray(planes))

    def _with_action(self, x: Tensor, actions) -> Tensor:
        return concat([x, self._action_planes(actions, x.shape[0])], axis=-1)

    # -- the five network functions -------------------------------------------

    def encode(self, obs, target: bool = False) -> Tensor:
        """Map raw observations (batch, H, W) to abstract states."""
        net = self.encoder_target if target else self.encoder
        return net(self._obs_batch(obs))

    def predict_next(self, x, actions) -> Tensor:
        """Residual latent transition: x + delta(x, a)."""
        x = self._state_batch(x)
        return x + self.transition(self._with_action(x, actions))

    def transition_delta(self, x, actions) -> Tensor:
        """The raw latent change predicted for (x, a)."""
        return self.transition(self._with_action(self._state_batch(x), actions))

    def predict_reward(self, x, actions) -> Tensor:
        x = self._state_batch(x)
        return self.reward(self._with_action(x, actions)).reshape(x.shape[0])

    def predict_discount(self, x, actions) -> Tensor:
        x = self._state_batch(x)
        raw = self.discount(self._with_action(x, actions)).reshape(x.shape[0])
        return raw.sigmoid() * DISCOUNT_CAP

    def q_values(self, x, target: bool = False) -> Tensor:
        net = self.q_target if target else self.qnet
        return net(self._state_batch(x))

    # -- target-network buffering ---------------------------------------------

    def sync_targets(self) -> bool:
        """Copy live encoder/Q weights into the buffers on schedule.

        Runs exactly when ``steps_done`` is a multiple of the sync interval
        (so the buffers are populated before the first update); returns
        whether a copy happened.
        """
        if self.steps_done % TARGET_SYNC_INTERVAL != 0:
            return False
        self.encoder_target.copy_weights_from(self.encoder)
        self.q_target.copy_weights_from(self.qnet)
        return True

    # -- persistence -----------------------------------------------------------

    def trainable_networks(self) -> list[Network]:
        return [self.encoder, self.transition, self.reward, self.discount, self.qnet]

    def all_networks(self) -> list[Network]:
        return self.trainable_networks() + [self.encoder_target, self.q_target]

    def parameters(self) -> list[Tensor]:
        return [p for net in self.trainable_networks() for p in net.parameters()]

    def named_arrays(self) -> dict[str, np.ndarray]:
        arrays = {
            name: p.data for net in self.all_networks() for name, p in net.named_parameters()
        }
        arrays["steps_done"] = np.asarray(self.steps_done, dtype=np.int64)
        return arrays

    def load_named_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for net in self.all_networks():
            for name, p in net.named_parameters():
                src = arrays[name]
                if src.shape != p.data.shape:
                    raise ShapeError(
                        f"checkpoint entry {name} has shape {src.shape}, "
                        f"expected {p.data.shape}"
                    )
                np.copyto(p.data, src.astype(p.data.dtype, copy=False))
        if "steps_done" in arrays:
            self.steps_done = int(arrays["steps_done"])


def build_agent(profile: str | Profile, seed: int = 0) -> Agent:
    """Construct an agent with freshly initialized weights for `profile`."""
    p = PROFILES[profile] if isinstance(profile, str) else profile
    # one independent stream per network keeps initializations stable if an
    # architecture changes
    seq = np.random.SeedSequence(seed)
    enc_rng, tau_rng, rho_rng, g_rng, q_rng = (
        np.random.default_rng(s) for s in seq.spawn(5)
    )

    obs_in = p.obs_shape + (1,)
    latent_in = p.latent_shape
    if p.flat:
        act_in = (p.latent_size + p.n_actions,)
    else:
        h, w, c = p.latent_shape
        act_in = (h, w, c + p.n_actions)

    encoder = Network("encoder", _encoder_specs(p), obs_in, enc_rng)
    transition = Network("transition", _transition_specs(p), act_in, tau_rng)
    reward = Network("reward", _scalar_head_specs(p), act_in, rho_rng)
    discount = Network("discount", _scalar_head_specs(p), act_in, g_rng)
    qnet = Network("qnet", _q_specs(p), latent_in, q_rng)

    encoder_target = Network("encoder_target", _encoder_specs(p), obs_in, np.random.default_rng(0))
    q_target = Network("q_target", _q_specs(p), latent_in, np.random.default_rng(0))
    encoder_target.set_trainable(False)
    q_target.set_trainable(False)

    agent = Agent(
        profile=p,
        encoder=encoder,
        transition=transition,
        reward=reward,
        discount=discount,
        qnet=qnet,
        encoder_target=encoder_target,
        q_target=q_target,
    )
    agent.sync_targets()
    return agent
