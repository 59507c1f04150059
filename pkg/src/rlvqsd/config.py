"""Experiment configuration and state/config file formats."""

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .agent import AgentConfig
from .qcore import sample_hs_random_state, validate_density

SCHEMA = "rlvqsd.config/1"
STATE_SCHEMA = "rlvqsd.state/1"


class ConfigError(ValueError):
    pass


def matrix_to_json(m):
    """Complex matrix as nested ``[re, im]`` pairs."""
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(m)]


def matrix_from_json(data):
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 3 or arr.shape[-1] != 2:
        raise ConfigError("matrix must be a 2-D array of [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def write_state_file(path, rho, **meta):
    doc = {"schema": STATE_SCHEMA, "n_qubits": int(round(math.log2(len(rho)))), **meta,
           "matrix": matrix_to_json(rho)}
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def read_state_file(path):
    doc = json.loads(Path(path).read_text())
    return validate_density(matrix_from_json(doc["matrix"])), doc


@dataclass
class ExperimentConfig:
    """Everything needed to replay one RL-VQSD run.

    ``target`` is one of ``{"kind": "hs", "seed": s, "n_qubits": 2}``
    (Hilbert-Schmidt sample), ``{"kind": "file", "path": p}`` or
    ``{"kind": "matrix", "matrix": [[[re, im], ...], ...]}``.
    """

    target: dict = field(default_factory=lambda: {"kind": "hs", "seed": 0, "n_qubits": 2})
    episodes: int = 10000
    zeta: float = 1e-4
    reward_success: float = 5.0
    d_max: int = 40
    ee_theta: float = 0.0
    optimizer_budget: int = 300
    nm_step: float = math.pi / 2
    polish_factor: int = 10
    agent: AgentConfig = field(default_factory=AgentConfig)
    agent_seed: int = 0
    policy_seed: int = 1
    checkpoint_every: int = 500
    out_dir: str = "runs/default"
    schema: str = SCHEMA

    def __post_init__(self):
        if isinstance(self.agent, dict):
            self.agent = AgentConfig(**self.agent)
        self.validate()

    def validate(self):
        if self.schema != SCHEMA:
            raise ConfigError(f"unsupported config schema {self.schema!r}")
        kind = self.target.get("kind")
        if kind not in ("hs", "file", "matrix"):
            raise ConfigError(f"unknown target kind {kind!r}")
        if kind == "hs" and int(self.target.get("n_qubits", 2)) != 2:
            raise ConfigError("only two-qubit targets are supported")
        if self.episodes < 0:
            raise ConfigError("episodes must be >= 0")
        if not self.zeta > 0:
            raise ConfigError("zeta must be positive")
        if self.d_max < 1:
            raise ConfigError("d_max must be >= 1")
        if not 0.0 <= self.ee_theta <= 0.5:
            raise ConfigError("ee_theta must lie in [0, 0.5]")
        if self.optimizer_budget < 1 or self.polish_factor < 1:
            raise ConfigError("optimizer budgets must be >= 1")
        if not self.nm_step > 0:
            raise ConfigError("nm_step must be positive")
        if self.checkpoint_every < 1:
            raise ConfigError("checkpoint_every must be >= 1")

    def to_dict(self):
        d = asdict(self)
        d["agent"] = self.agent.to_dict()
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        agent = d.get("agent", {})
        if isinstance(agent, dict):
            bad = set(agent) - set(AgentConfig.__dataclass_fields__)
            if bad:
                raise ConfigError(f"unknown agent keys: {sorted(bad)}")
        try:
            if isinstance(agent, dict):
                d["agent"] = AgentConfig(**agent)
            return cls(**d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path):
        Path(path).write_text(self.to_json() + "\n")

    def target_state(self, base_dir=None):
        """Return ``(rho, state_id)`` for the configured target."""
        kind = self.target["kind"]
        if kind == "hs":
            seed = int(self.target["seed"])
            return sample_hs_random_state(2, seed), f"hs2-seed{seed}"
        if kind == "file":
            path = Path(self.target["path"])
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            rho, doc = read_state_file(path)
        else:
            rho = validate_density(matrix_from_json(self.target["matrix"]))
            doc = {}
        state_id = self.target.get("id") or doc.get("id")
        if not state_id:
            digest = hashlib.sha1(json.dumps(matrix_to_json(rho)).encode()).hexdigest()[:10]
            state_id = f"matrix-{digest}"
        return rho, state_id
