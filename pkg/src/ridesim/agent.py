"""Driver decision agent with a categorical action-value distribution.

One shared network serves every driver. The output layer carries one row of
atom logits per action over a fixed support grid; expected values come from
the softmax distribution, decisions from an epsilon-greedy argmax with ties
broken toward accepting. Training projects the one-step return distribution
back onto the support and minimizes cross-entropy against it, with a lagged
target copy for the bootstrap.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import nn
from .ridegen import GridSpec
from .sim import Action, OBS_DIM, Transition

AGENT_MAGIC = "ridesim-agent v1"

N_ACTIONS = 2
DEFAULT_ATOMS = 51


def tabular_q_update(q: float, alpha: float, reward: float, gamma: float,
                     max_next_q: float) -> float:
    """Classic one-step Q-learning update on a stored scalar value."""
    return q + alpha * (reward + gamma * max_next_q - q)


@dataclass(frozen=True)
class FeatureScales:
    """Per-feature divisors that bring raw observations near [0, 1]."""

    pickup_km: float = 5.0
    trip_km: float = 10.0
    minute_of_day: float = 1440.0
    trips_to_goal: float = 40.0
    drop_center_km: float = 10.0
    idle_minutes: float = 120.0

    def __post_init__(self):
        for v in self.as_array():
            if not math.isfinite(v) or v <= 0:
                raise ValueError("feature scales must be positive and finite")

    @classmethod
    def for_grid(cls, grid: GridSpec, **overrides) -> "FeatureScales":
        kwargs = {"drop_center_km": grid.half_diagonal_km()}
        kwargs.update(overrides)
        return cls(**kwargs)

    def as_array(self) -> np.ndarray:
        return np.array([self.pickup_km, self.trip_km, self.minute_of_day,
                         self.trips_to_goal, self.drop_center_km,
                         self.idle_minutes], dtype=float)


class ReplayBuffer:
    """Bounded FIFO transition store with uniform sampling."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be at least 1")
        self.capacity = capacity
        self._items = deque(maxlen=capacity)

    def __len__(self):
        return len(self._items)

    def add(self, transition: Transition) -> None:
        self._items.append(transition)

    def extend(self, transitions) -> None:
        for t in transitions:
            self._items.append(t)

    def sample(self, batch_size: int, rng: np.random.Generator) -> list:
        if not self._items:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, len(self._items), size=batch_size)
        return [self._items[i] for i in idx]

    def snapshot(self) -> list:
        return list(self._items)


def _check_distributions(probs: np.ndarray) -> None:
    if np.any(probs < -1e-12):
        raise ValueError("distribution has negative mass")
    if np.any(np.abs(probs.sum(axis=-1) - 1.0) > 1e-6):
        raise ValueError("distribution must sum to 1")


def project_target_batch(probs: np.ndarray, rewards: np.ndarray,
                         gammas: np.ndarray, atoms: np.ndarray) -> np.ndarray:
    """Project r + gamma * Z onto the fixed atom grid, rowwise.

    Each atom's mass moves to the clamped point r + gamma * z and is split
    linearly between the two bracketing atoms; a point landing exactly on an
    atom keeps all its mass there. Row sums are preserved.
    """
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    _check_distributions(probs)
    batch, k = probs.shape
    rewards = np.broadcast_to(np.asarray(rewards, dtype=float), (batch,))
    gammas = np.broadcast_to(np.asarray(gammas, dtype=float), (batch,))
    v_min, v_max = float(atoms[0]), float(atoms[-1])
    dz = (v_max - v_min) / (k - 1)
    shifted = np.clip(rewards[:, None] + gammas[:, None] * atoms[None, :],
                      v_min, v_max)
    pos = (shifted - v_min) / dz
    lower = np.floor(pos).astype(int)
    upper = np.minimum(lower + 1, k - 1)
    frac = pos - lower
    out = np.zeros_like(probs)
    rows = np.repeat(np.arange(batch), k)
    np.add.at(out, (rows, lower.ravel()), (probs * (1.0 - frac)).ravel())
    np.add.at(out, (rows, upper.ravel()), (probs * frac).ravel())
    return out


def project_target(probs: np.ndarray, reward: float, gamma: float,
                   atoms: np.ndarray) -> np.ndarray:
    """Single-distribution form of project_target_batch."""
    return project_target_batch(probs[None, :], np.array([reward]),
                                np.array([gamma]), atoms)[0]


def expected_q(probs: np.ndarray, atoms: np.ndarray) -> np.ndarray:
    """Mean of a categorical value distribution; broadcasts over leading axes."""
    return np.asarray(probs, dtype=float) @ np.asarray(atoms, dtype=float)


class CategoricalQAgent:
    """Shared accept/reject policy over categorical value distributions."""

    def __init__(self, online: nn.Mlp, target: nn.Mlp, atoms: np.ndarray,
                 scales: FeatureScales, gamma: float, epsilon: float,
                 learning_rate: float = 1e-3, sync_every: int = 100,
                 train_steps: int = 0):
        if atoms.size < 2:
            raise ValueError("need at least 2 atoms")
        if not np.all(np.diff(atoms) > 0):
            raise ValueError("atom support must be strictly increasing")
        if not (0.0 <= gamma < 1.0):
            raise ValueError("gamma must lie in [0, 1)")
        if not (0.0 <= epsilon <= 1.0):
            raise ValueError("epsilon must lie in [0, 1]")
        if sync_every < 1:
            raise ValueError("sync_every must be at least 1")
        if online.layer_dims[0] != OBS_DIM:
            raise ValueError(f"network input width must be {OBS_DIM}")
        if online.layer_dims[-1] != N_ACTIONS * atoms.size:
            raise ValueError("network output width must be actions * atoms")
        self.online = online
        self.target = target
        self.atoms = np.asarray(atoms, dtype=float)
        self.scales = scales
        self.gamma = gamma
        self.epsilon = epsilon
        self.sync_every = sync_every
        self.train_steps = train_steps
        self.adam = nn.AdamState.for_net(online, lr=learning_rate)

    @classmethod
    def create(cls, scales: FeatureScales, v_min: float, v_max: float,
               rng: np.random.Generator, hidden=(64, 64),
               atom_count: int = DEFAULT_ATOMS, gamma: float = 0.6,
               epsilon: float = 0.05, learning_rate: float = 1e-3,
               sync_every: int = 100) -> "CategoricalQAgent":
        if not (v_min < v_max):
            raise ValueError("v_min must be below v_max")
        atoms = np.linspace(v_min, v_max, atom_count)
        dims = [OBS_DIM, *hidden, N_ACTIONS * atom_count]
        online = nn.Mlp.create(dims, rng)
        target = online.copy()
        return cls(online=online, target=target, atoms=atoms, scales=scales,
                   gamma=gamma, epsilon=epsilon, learning_rate=learning_rate,
                   sync_every=sync_every)

    @property
    def v_min(self) -> float:
        return float(self.atoms[0])

    @property
    def v_max(self) -> float:
        return float(self.atoms[-1])

    def normalize(self, obs: np.ndarray) -> np.ndarray:
        return np.asarray(obs, dtype=float) / self.scales.as_array()

    def value_distribution(self, obs: np.ndarray, net: nn.Mlp | None = None) -> np.ndarray:
        """Per-action atom probabilities for one raw observation."""
        net = net or self.online
        logits = nn.forward(net, self.normalize(obs)).reshape(N_ACTIONS, -1)
        return nn._softmax(logits)

    def q_values(self, obs: np.ndarray, net: nn.Mlp | None = None) -> np.ndarray:
        return expected_q(self.value_distribution(obs, net), self.atoms)

    def act(self, obs: np.ndarray, rng: np.random.Generator) -> Action:
        """Epsilon-greedy decision; on an exact value tie the driver accepts."""
        if self.epsilon > 0 and rng.random() < self.epsilon:
            return Action(int(rng.integers(0, N_ACTIONS)))
        q = self.q_values(obs)
        return Action.ACCEPT if q[Action.ACCEPT] >= q[Action.REJECT] else Action.REJECT

    def greedy_actions(self, obs_batch: np.ndarray,
                       net: nn.Mlp | None = None) -> np.ndarray:
        """Vectorized greedy decisions for a (batch, 6) block of raw obs."""
        net = net or self.online
        x = np.atleast_2d(obs_batch) / self.scales.as_array()
        logits = nn.forward(net, x).reshape(len(x), N_ACTIONS, -1)
        q = expected_q(nn._softmax(logits), self.atoms)
        return np.where(q[:, Action.ACCEPT] >= q[:, Action.REJECT],
                        int(Action.ACCEPT), int(Action.REJECT))

    def sync_target(self) -> None:
        self.target.copy_from(self.online)

    def train_step(self, batch: list) -> float:
        """One minibatch update toward projected one-step distributions.

        The bootstrap action comes from the target network's expected values
        on the next observation; terminal transitions drop the bootstrap term
        entirely. Returns the batch loss. A non-finite loss aborts before any
        parameter changes.
        """
        if not batch:
            raise ValueError("empty batch")
        obs = np.stack([t.obs for t in batch])
        next_obs = np.stack([t.next_obs for t in batch])
        actions = np.array([int(t.action) for t in batch])
        rewards = np.array([t.reward for t in batch], dtype=float)
        terminal = np.array([t.terminal for t in batch], dtype=bool)

        scales = self.scales.as_array()
        next_logits = nn.forward(self.target, next_obs / scales)
        next_logits = next_logits.reshape(len(batch), N_ACTIONS, -1)
        next_probs = nn._softmax(next_logits)
        next_q = expected_q(next_probs, self.atoms)
        bootstrap = np.where(next_q[:, Action.ACCEPT] >= next_q[:, Action.REJECT],
                             int(Action.ACCEPT), int(Action.REJECT))
        chosen = next_probs[np.arange(len(batch)), bootstrap]
        gammas = np.where(terminal, 0.0, self.gamma)
        targets = project_target_batch(chosen, rewards, gammas, self.atoms)

        loss, gw, gb = nn.loss_and_grad_batch(self.online, obs / scales,
                                              targets, actions, N_ACTIONS)
        if not math.isfinite(loss):
            raise FloatingPointError("non-finite training loss; no update applied")
        nn.adam_step(self.online, gw, gb, self.adam)
        self.train_steps += 1
        if self.train_steps % self.sync_every == 0:
            self.sync_target()
        return loss

    def to_lines(self) -> list:
        lines = [AGENT_MAGIC,
                 f"atoms {self.atoms.size}",
                 f"v_min {repr(self.v_min)}",
                 f"v_max {repr(self.v_max)}",
                 f"gamma {repr(float(self.gamma))}",
                 f"epsilon {repr(float(self.epsilon))}",
                 f"sync_every {self.sync_every}",
                 f"train_steps {self.train_steps}",
                 "scales " + " ".join(repr(float(v))
                                      for v in self.scales.as_array()),
                 f"learning_rate {repr(float(self.adam.lr))}",
                 "online"]
        lines.extend(nn.checkpoint_lines(self.online))
        lines.append("target")
        lines.extend(nn.checkpoint_lines(self.target))
        return lines

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("\n".join(self.to_lines()) + "\n")

    @classmethod
    def load(cls, path) -> "CategoricalQAgent":
        with open(path) as fh:
            lines = [ln.rstrip("\n") for ln in fh
                     if ln.strip() and not ln.startswith("#")]
        if not lines or lines[0] != AGENT_MAGIC:
            raise ValueError(f"{path}: not an agent checkpoint")
        header = {}
        idx = 1
        while idx < len(lines) and lines[idx] != "online":
            key, _, value = lines[idx].partition(" ")
            header[key] = value
            idx += 1
        online_start = idx + 1
        target_marker = lines.index("target", online_start)
        online = nn.parse_checkpoint(lines[online_start:target_marker],
                                     label=f"{path}:online")
        target = nn.parse_checkpoint(lines[target_marker + 1:],
                                     label=f"{path}:target")
        atom_count = int(header["atoms"])
        atoms = np.linspace(float(header["v_min"]), float(header["v_max"]),
                            atom_count)
        scale_vals = [float(v) for v in header["scales"].split()]
        scales = FeatureScales(pickup_km=scale_vals[0], trip_km=scale_vals[1],
                               minute_of_day=scale_vals[2],
                               trips_to_goal=scale_vals[3],
                               drop_center_km=scale_vals[4],
                               idle_minutes=scale_vals[5])
        agent = cls(online=online, target=target, atoms=atoms, scales=scales,
                    gamma=float(header["gamma"]),
                    epsilon=float(header["epsilon"]),
                    learning_rate=float(header.get("learning_rate", "0.001")),
                    sync_every=int(header["sync_every"]),
                    train_steps=int(header["train_steps"]))
        return agent
