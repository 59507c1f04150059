"""Double deep-Q network agent written directly against numpy.

The online network picks the next-state action, the target network scores
it. Networks are plain ReLU multilayer perceptrons trained with ADAM on the
mean squared TD error.
"""

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionMismatch, NoConvergence, NonFiniteLoss
from .qcore import make_rng

MAGIC = b"RLQAS1"


@dataclass
class AgentConfig:
    hidden: Tuple[int, ...] = (1000,) * 5
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    gamma: float = 0.88
    batch_size: int = 64
    sync_every: int = 500
    learning_starts: int = 1000
    buffer_size: int = 15000
    eps_start: float = 1.0
    eps_decay: float = 0.99995
    eps_min: float = 0.05

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if not all(h > 0 for h in self.hidden):
            raise ValueError("hidden layer sizes must be positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if not 0.0 < self.eps_decay <= 1.0 or not 0.0 <= self.eps_min <= self.eps_start <= 1.0:
            raise ValueError("epsilon schedule out of range")
        if self.batch_size < 1 or self.buffer_size < self.batch_size:
            raise ValueError("buffer must hold at least one batch")
        if self.lr <= 0 or self.sync_every < 1 or self.learning_starts < 0:
            raise ValueError("lr, sync_every and learning_starts out of range")

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


# --------------------------------------------------------------------------
# network and optimiser


class QNetwork:
    """ReLU MLP mapping an observation vector to one Q-value per action."""

    def __init__(self, sizes: Sequence[int], rng: Optional[np.random.Generator] = None):
        self.sizes = [int(s) for s in sizes]
        if len(self.sizes) < 2:
            raise ValueError("need at least input and output sizes")
        shapes = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            shapes += [(fan_in, fan_out), (fan_out,)]
        self.shapes = shapes
        # weights and biases are views into one flat vector so ADAM runs fused
        self.flat = np.zeros(sum(int(np.prod(sh)) for sh in shapes))
        self.params = _views(self.flat, shapes)
        self.weights = self.params[0::2]
        self.biases = self.params[1::2]
        if rng is not None:
            for w, b in zip(self.weights, self.biases):
                bound = 1.0 / np.sqrt(w.shape[0])
                w[...] = rng.uniform(-bound, bound, size=w.shape)
                b[...] = rng.uniform(-bound, bound, size=b.shape)

    @property
    def n_actions(self):
        return self.sizes[-1]

    def copy_from(self, other: "QNetwork"):
        if other.sizes != self.sizes:
            raise DimensionMismatch(f"network shapes differ: {other.sizes} vs {self.sizes}")
        self.flat[...] = other.flat

    def clone(self):
        net = QNetwork(self.sizes)
        net.copy_from(self)
        return net

    def forward(self, x):
        h = np.atleast_2d(np.asarray(x, dtype=float))
        if h.shape[-1] != self.sizes[0]:
            raise DimensionMismatch(f"observation has {h.shape[-1]} features, network expects {self.sizes[0]}")
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0.0)
        return h

    def loss_and_grads(self, obs, actions, targets):
        """Mean of ``(Q(s, a) - y)^2`` over the batch and its parameter gradients."""
        h = np.atleast_2d(np.asarray(obs, dtype=float))
        acts = [h]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0.0)
            acts.append(h)
        q = acts[-1]
        rows = np.arange(q.shape[0])
        actions = np.asarray(actions, dtype=int)
        err = q[rows, actions] - np.asarray(targets, dtype=float)
        loss = float(np.mean(err**2))

        delta = np.zeros_like(q)
        delta[rows, actions] = 2.0 * err / q.shape[0]
        flat_grad = np.empty_like(self.flat)
        grads = _views(flat_grad, self.shapes)
        for i in range(last, -1, -1):
            np.matmul(acts[i].T, delta, out=grads[2 * i])
            grads[2 * i + 1][...] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (acts[i] > 0)
        self.flat_grad = flat_grad
        return loss, grads


def _views(flat, shapes):
    out, off = [], 0
    for sh in shapes:
        n = int(np.prod(sh))
        out.append(flat[off:off + n].reshape(sh))
        off += n
    return out


class Adam:
    """ADAM with bias correction over a single flat parameter vector."""

    def __init__(self, n_params: int, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def step(self, flat_params, flat_grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        m, v, g = self.m, self.v, flat_grads
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        step_size = self.lr * np.sqrt(1.0 - b2**self.t) / (1.0 - b1**self.t)
        eps_hat = self.eps * np.sqrt(1.0 - b2**self.t)
        flat_params -= step_size * m / (np.sqrt(v) + eps_hat)


# --------------------------------------------------------------------------
# replay and exploration


class Batch(NamedTuple):
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_obs: np.ndarray
    terminal: np.ndarray


class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions."""

    def __init__(self, capacity: int, obs_dim: int):
        self.capacity = int(capacity)
        self.obs = np.zeros((self.capacity, obs_dim), dtype=np.float32)
        self.next_obs = np.zeros((self.capacity, obs_dim), dtype=np.float32)
        self.actions = np.zeros(self.capacity, dtype=np.int64)
        self.rewards = np.zeros(self.capacity)
        self.terminal = np.zeros(self.capacity, dtype=bool)
        self.size = 0
        self.inserted = 0

    def __len__(self):
        return self.size

    def add(self, obs, action, reward, next_obs, terminal):
        i = self.inserted % self.capacity
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_obs[i] = next_obs
        self.terminal[i] = terminal
        self.inserted += 1
        self.size = min(self.size + 1, self.capacity)

    def oldest(self):
        """Index of the oldest stored transition."""
        return 0 if self.inserted <= self.capacity else self.inserted % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        idx = rng.choice(self.size, size=batch_size, replace=False)
        return Batch(
            self.obs[idx].astype(float),
            self.actions[idx],
            self.rewards[idx],
            self.next_obs[idx].astype(float),
            self.terminal[idx],
        )


@dataclass
class EpsilonSchedule:
    value: float = 1.0
    decay: float = 0.99995
    floor: float = 0.05

    def step(self):
        self.value = max(self.floor, self.decay * self.value)
        return self.value

    @staticmethod
    def closed_form(t, start=1.0, decay=0.99995, floor=0.05):
        return max(floor, start * decay**t)


def select_action(net: QNetwork, obs, eps: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy; greedy ties resolve to the lowest action index."""
    q = net.forward(obs)[0]
    if rng.random() < eps:
        return int(rng.integers(net.n_actions))
    return int(np.argmax(q))


def td_targets(online: QNetwork, target: QNetwork, batch: Batch, gamma: float):
    """``r + gamma * Q_target(s', argmax_a Q_online(s', a))``; terminal rows keep ``r``."""
    best = np.argmax(online.forward(batch.next_obs), axis=1)
    q_next = target.forward(batch.next_obs)[np.arange(len(best)), best]
    return batch.rewards + gamma * np.where(batch.terminal, 0.0, q_next)


def ddqn_update(online: QNetwork, target: QNetwork, batch: Batch, adam: Adam, gamma: float) -> float:
    if len(batch.actions) == 0:
        raise ValueError("empty batch")
    y = td_targets(online, target, batch, gamma)
    loss, _ = online.loss_and_grads(batch.obs, batch.actions, y)
    if not (np.isfinite(loss) and np.all(np.isfinite(online.flat_grad))):
        raise NonFiniteLoss(
            f"non-finite TD loss {loss!r}",
            dump={
                "loss": repr(loss),
                "rewards": batch.rewards.tolist(),
                "targets": np.asarray(y).tolist(),
                "actions": batch.actions.tolist(),
                "adam_step": adam.t,
            },
        )
    adam.step(online.flat, online.flat_grad)
    return loss


def sync_target(online: QNetwork, target: QNetwork):
    target.copy_from(online)


# --------------------------------------------------------------------------
# agent bundle


class DDQNAgent:
    """Online/target networks, ADAM state, replay buffer and exploration."""

    def __init__(self, obs_dim: int, n_actions: int, config: AgentConfig, init_seed: int, policy_seed: int):
        self.config = config
        sizes = [obs_dim, *config.hidden, n_actions]
        self.online = QNetwork(sizes, make_rng(init_seed))
        self.target = self.online.clone()
        self.adam = Adam(self.online.flat.size, config.lr, config.beta1, config.beta2, config.adam_eps)
        self.buffer = ReplayBuffer(config.buffer_size, obs_dim)
        self.eps = EpsilonSchedule(config.eps_start, config.eps_decay, config.eps_min)
        self.rng = make_rng(policy_seed)
        self.env_steps = 0
        self.updates = 0
        self.last_loss = None

    def act(self, obs) -> int:
        action = select_action(self.online, obs, self.eps.value, self.rng)
        self.eps.step()
        return action

    def greedy(self, obs) -> int:
        return int(np.argmax(self.online.forward(obs)[0]))

    def observe(self, obs, action, reward, next_obs, terminal):
        """Store a transition and run one DDQN update once warm."""
        self.buffer.add(obs, action, reward, next_obs, terminal)
        self.env_steps += 1
        cfg = self.config
        if len(self.buffer) >= max(cfg.learning_starts, cfg.batch_size):
            batch = self.buffer.sample(cfg.batch_size, self.rng)
            self.last_loss = ddqn_update(self.online, self.target, batch, self.adam, cfg.gamma)
            self.updates += 1
            if self.updates % cfg.sync_every == 0:
                sync_target(self.online, self.target)
        return self.last_loss

    def tensors(self):
        named = []
        for prefix, net in (("online", self.online), ("target", self.target)):
            named += [(f"{prefix}.{i}", p) for i, p in enumerate(net.params)]
        named += [(f"adam_m.{i}", m) for i, m in enumerate(_views(self.adam.m, self.online.shapes))]
        named += [(f"adam_v.{i}", v) for i, v in enumerate(_views(self.adam.v, self.online.shapes))]
        return named

    def state_meta(self):
        return {
            "sizes": self.online.sizes,
            "agent": self.config.to_dict(),
            "epsilon": self.eps.value,
            "adam_step": self.adam.t,
            "env_steps": self.env_steps,
            "updates": self.updates,
            "rng_state": _rng_state_to_json(self.rng.bit_generator.state),
        }

    def save(self, path, extra=None):
        meta = self.state_meta()
        if extra:
            meta.update(extra)
        save_checkpoint(path, self.tensors(), meta)

    def load(self, path):
        """Restore networks, optimiser and exploration state; returns the sidecar."""
        tensors, meta = load_checkpoint(path, [(n, t.shape) for n, t in self.tensors()])
        for (_, dst), src in zip(self.tensors(), tensors):
            dst[...] = src
        self.eps.value = float(meta["epsilon"])
        self.adam.t = int(meta["adam_step"])
        self.env_steps = int(meta["env_steps"])
        self.updates = int(meta["updates"])
        self.rng.bit_generator.state = _rng_state_from_json(meta["rng_state"])
        return meta


def _rng_state_to_json(state):
    if isinstance(state, dict):
        return {k: _rng_state_to_json(v) for k, v in state.items()}
    if isinstance(state, np.ndarray):
        return {"__array__": [int(x) for x in state], "dtype": str(state.dtype)}
    if isinstance(state, np.integer):
        return int(state)
    return state


def _rng_state_from_json(doc):
    if isinstance(doc, dict):
        if "__array__" in doc:
            return np.array(doc["__array__"], dtype=doc["dtype"])
        return {k: _rng_state_from_json(v) for k, v in doc.items()}
    return doc


# --------------------------------------------------------------------------
# checkpoint format: MAGIC, u32 count, then per tensor u32 ndim, u64 dims, f8 data


def save_checkpoint(path, named_tensors, meta):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(named_tensors)))
        for _, t in named_tensors:
            t = np.asarray(t, dtype="<f8")
            fh.write(struct.pack("<I", t.ndim))
            fh.write(struct.pack(f"<{t.ndim}Q", *t.shape))
            fh.write(t.tobytes(order="C"))
    sidecar = dict(meta)
    sidecar["format"] = "RLQAS1"
    sidecar["tensors"] = [{"name": n, "shape": list(np.shape(t))} for n, t in named_tensors]
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def load_checkpoint(path, expected=None):
    """Read a checkpoint; ``expected`` is a list of ``(name, shape)`` to enforce."""
    path = Path(path)
    data = path.read_bytes()
    if data[:6] != MAGIC:
        raise ValueError(f"{path}: not an RLQAS1 checkpoint")
    (count,) = struct.unpack_from("<I", data, 6)
    off = 10
    tensors = []
    for _ in range(count):
        (ndim,) = struct.unpack_from("<I", data, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}Q", data, off)
        off += 8 * ndim
        n = int(np.prod(shape)) if ndim else 1
        t = np.frombuffer(data, dtype="<f8", count=n, offset=off).reshape(shape).copy()
        off += 8 * n
        tensors.append(t)
    if off != len(data):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    meta = json.loads(Path(str(path) + ".json").read_text())
    if expected is not None:
        got = [tuple(t.shape) for t in tensors]
        want = [tuple(s) for _, s in expected]
        if got != want:
            raise DimensionMismatch(f"{path}: checkpoint shapes {got} do not match network {want}")
    return tensors, meta


# --------------------------------------------------------------------------
# correctness harness on small deterministic MDPs


@dataclass
class ToyMDP:
    """Deterministic MDP given by ``next_state[s][a]``, ``reward[s][a]``, ``done[s][a]``."""

    next_state: List[List[int]]
    reward: List[List[float]]
    done: List[List[bool]]
    gamma: float
    start: int = 0
    horizon: int = 20

    @property
    def n_states(self):
        return len(self.next_state)

    @property
    def n_actions(self):
        return len(self.next_state[0])

    def one_hot(self, s):
        v = np.zeros(self.n_states)
        v[s] = 1.0
        return v


def chain_mdp(n=4, gamma=0.9):
    """Action 1 advances, action 0 steps back; advancing off the end pays 1."""
    nxt = [[max(s - 1, 0), min(s + 1, n - 1)] for s in range(n)]
    rew = [[0.0, 1.0 if s == n - 1 else 0.0] for s in range(n)]
    done = [[False, s == n - 1] for s in range(n)]
    return ToyMDP(nxt, rew, done, gamma)


def bandit_mdp(rewards=(0.0, 1.0, 0.0, 0.0)):
    k = len(rewards)
    return ToyMDP([[0] * k], [list(map(float, rewards))], [[True] * k], gamma=0.0, horizon=1)


def value_iteration(mdp: ToyMDP, tol=1e-12):
    """Exact optimal greedy policy (ties to the lowest action)."""
    v = np.zeros(mdp.n_states)
    while True:
        q = np.array([
            [mdp.reward[s][a] + (0.0 if mdp.done[s][a] else mdp.gamma * v[mdp.next_state[s][a]])
             for a in range(mdp.n_actions)]
            for s in range(mdp.n_states)
        ])
        new_v = q.max(axis=1)
        if np.max(np.abs(new_v - v)) < tol:
            return q.argmax(axis=1), q
        v = new_v


TOY_CONFIG = AgentConfig(
    hidden=(32, 32), lr=1e-3, gamma=0.9, batch_size=32, sync_every=100,
    learning_starts=200, buffer_size=2000, eps_decay=0.999, eps_min=0.05,
)


class ToyResult(NamedTuple):
    policy: np.ndarray
    optimal: np.ndarray
    steps: int
    episode_returns: List[float]
    losses: List[float]


def train_toy_mdp(mdp: ToyMDP, seed=0, max_steps=20000, check_every=500, config: Optional[AgentConfig] = None):
    """Train a DDQN agent on ``mdp`` until its greedy policy matches value iteration.

    Raises NoConvergence (carrying the learning curves) when ``max_steps``
    pass without a match.
    """
    cfg = config or AgentConfig(**{**TOY_CONFIG.to_dict(), "gamma": mdp.gamma})
    optimal, _ = value_iteration(mdp)
    agent = DDQNAgent(mdp.n_states, mdp.n_actions, cfg, init_seed=seed, policy_seed=seed + 1)
    returns, losses = [], []
    s, t, ep_ret = mdp.start, 0, 0.0

    def greedy_policy():
        return np.array([agent.greedy(mdp.one_hot(x)) for x in range(mdp.n_states)])

    for step in range(1, max_steps + 1):
        obs = mdp.one_hot(s)
        a = agent.act(obs)
        r, s2, done = mdp.reward[s][a], mdp.next_state[s][a], mdp.done[s][a]
        loss = agent.observe(obs, a, r, mdp.one_hot(s2), done)
        if loss is not None:
            losses.append(loss)
        ep_ret += r
        t += 1
        if done or t >= mdp.horizon:
            returns.append(ep_ret)
            s, t, ep_ret = mdp.start, 0, 0.0
        else:
            s = s2
        if step % check_every == 0 and agent.updates > 0 and np.array_equal(greedy_policy(), optimal):
            return ToyResult(greedy_policy(), optimal, step, returns, losses)
    raise NoConvergence(
        f"greedy policy did not reach the optimum in {max_steps} steps",
        details={"returns": returns, "losses": losses, "policy": greedy_policy().tolist()},
    )
