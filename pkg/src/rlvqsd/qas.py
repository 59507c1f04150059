"""The RL-VQSD loop: environment, reward, episodes and experiment runs."""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, List

import numpy as np

from . import __version__
from .agent import DDQNAgent
from .ansatz import (
    Circuit,
    action_space,
    append_action,
    build_ee_block,
    encode,
    resources,
    to_unitary,
)
from .config import ExperimentConfig, matrix_to_json
from .errors import NonFiniteLoss
from .qcore import apply_unitary, concurrence_mixed, concurrence_pure, conditional_entropies
from .vqsd import eigen_readout, optimize_params

log = logging.getLogger(__name__)

SUCCESS_MARGIN = 1e-5
SUMMARY_SCHEMA = "rlvqsd.summary/1"


def reward(cost_t, zeta, r_success=5.0):
    """Success bonus below ``zeta + 1e-5``; otherwise ``-ln(cost - zeta)``."""
    if cost_t < zeta + SUCCESS_MARGIN:
        return float(r_success)
    return -math.log(cost_t - zeta)


def is_success(cost_t, zeta):
    return cost_t < zeta + SUCCESS_MARGIN


def effective_input(rho, ee_theta):
    """The state after the entanglement-enhancing block; untouched at theta = 0."""
    if ee_theta == 0:
        return np.array(rho, dtype=complex)
    return apply_unitary(rho, to_unitary(build_ee_block(ee_theta)), check=False)


@dataclass
class EnvState:
    target_rho: np.ndarray
    rho: np.ndarray  # effective input fed to the searched ansatz
    ee_theta: float
    d_max: int
    circuit: Circuit = field(default_factory=Circuit)
    step: int = 0
    cost_now: float = 0.0


class VQSDEnv:
    """Gate-by-gate construction of a diagonalising ansatz."""

    def __init__(self, target_rho, zeta, d_max=40, ee_theta=0.0, budget=300, step_size=math.pi / 2,
                 polish_factor=10, reward_success=5.0):
        self.zeta = zeta
        self.budget = budget
        self.step_size = step_size
        self.polish_factor = polish_factor
        self.reward_success = reward_success
        rho = np.asarray(target_rho, dtype=complex)
        self.state = EnvState(rho, effective_input(rho, ee_theta), ee_theta, d_max)
        self.n_actions = len(action_space(2))
        self.reset()

    @property
    def obs_dim(self):
        return self.state.d_max * self.n_actions

    def observation(self):
        return encode(self.state.circuit, self.state.d_max)

    def reset(self):
        s = self.state
        s.circuit = Circuit(2)
        s.step = 0
        s.cost_now = optimize_params(s.rho, s.circuit, budget=1).cost
        return self.observation()

    def step(self, action):
        """Append a gate, retrain parameters, and score the result.

        Returns ``(obs, reward, done, success)``.
        """
        s = self.state
        c = append_action(s.circuit, action)
        rep = optimize_params(s.rho, c, budget=self.budget, step=self.step_size)
        s.circuit = c.with_params(rep.params_opt)
        s.cost_now = rep.cost
        s.step += 1
        success = is_success(rep.cost, self.zeta)
        r = reward(rep.cost, self.zeta, self.reward_success)
        done = success or s.step >= s.d_max
        return self.observation(), r, done, success

    def polish(self):
        """Longer re-optimisation of the current circuit, kept only if it helps."""
        s = self.state
        rep = optimize_params(s.rho, s.circuit, budget=self.budget * self.polish_factor, step=self.step_size)
        if rep.cost <= s.cost_now:
            s.circuit = s.circuit.with_params(rep.params_opt)
            s.cost_now = rep.cost
        return s.cost_now


def circuit_metrics(rho, circuit: Circuit):
    """Entanglement, entropy and readout metrics of a (searched) ansatz on ``rho``."""
    u = to_unitary(circuit)
    evolved = apply_unitary(rho, u, check=False)
    res = resources(circuit)
    return {
        "resources": {"one_qubit_gates": res.one_qubit_gates, "two_qubit_gates": res.two_qubit_gates,
                      "depth": res.depth},
        "concurrence_of_ansatz": float(concurrence_pure(u[:, 0])),
        "concurrence_evolved": float(concurrence_mixed(evolved)),
        "cond_entropy_evolved": [float(x) for x in conditional_entropies(evolved)],
        "inferred_eigenvalues": [float(x) for x in eigen_readout(rho, circuit).inferred_eigenvalues],
    }


def run_episode(env: VQSDEnv, agent: DDQNAgent, index=0, input_info=None):
    """One episode; the agent learns online after every step."""
    obs = env.reset()
    costs, rewards = [], []
    success = False
    while True:
        a = agent.act(obs)
        next_obs, r, done, success = env.step(a)
        costs.append(env.state.cost_now)
        rewards.append(r)
        agent.observe(obs, a, r, next_obs, done)
        obs = next_obs
        if done:
            break
    final_cost = env.polish() if success else env.state.cost_now
    rec = {
        "episode": index,
        "success": bool(success),
        "steps": env.state.step,
        "final_cost": float(final_cost),
        "circuit": env.state.circuit.to_json(),
        "cost_trace": [float(c) for c in costs],
        "reward_trace": [float(r) for r in rewards],
        "epsilon": float(agent.eps.value),
    }
    rec.update(input_info or {})
    rec.update(circuit_metrics(env.state.rho, env.state.circuit))
    return rec


def input_metrics(rho_target, rho_eff):
    return {
        "target_concurrence": float(concurrence_mixed(rho_target)),
        "input_concurrence": float(concurrence_mixed(rho_eff)),
        "cond_entropy_input": [float(x) for x in conditional_entropies(rho_eff)],
    }


def _mean(xs):
    return float(np.mean(xs)) if xs else None


def summarize(records: List[dict], config: ExperimentConfig, state_id: str, extra=None):
    succ = [r for r in records if r["success"]]
    first = succ[:100]
    summary = {
        "schema": SUMMARY_SCHEMA,
        "code_version": __version__,
        "state_id": state_id,
        "E_tot": len(records),
        "E_s": len(succ),
        "total_reward": float(sum(sum(r["reward_trace"]) for r in records)),
        "first_success_episode": succ[0]["episode"] if succ else None,
        "first_100_successes": {
            "count": len(first),
            "one_qubit_gates": _mean([r["resources"]["one_qubit_gates"] for r in first]),
            "two_qubit_gates": _mean([r["resources"]["two_qubit_gates"] for r in first]),
            "depth": _mean([r["resources"]["depth"] for r in first]),
        },
        "best": {
            "min_cost": min((r["final_cost"] for r in succ), default=None),
            "min_one_qubit_gates": min((r["resources"]["one_qubit_gates"] for r in succ), default=None),
            "min_two_qubit_gates": min((r["resources"]["two_qubit_gates"] for r in succ), default=None),
        },
        "config": config.to_dict(),
    }
    if extra:
        summary.update(extra)
    return summary


def _json_line(rec):
    return json.dumps(rec, sort_keys=True, separators=(",", ":"))


def _write_partial(out: Path, reason, done, extra=None):
    doc = {"status": "partial", "reason": reason, "episodes_completed": done}
    if extra:
        doc.update(extra)
    try:
        (out / "partial_manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    except OSError:
        log.error("could not write partial manifest to %s", out)


def iter_experiment(config: ExperimentConfig, out_dir=None, resume=False, max_episodes=None,
                    stop_after_first_success=False) -> Iterator[dict]:
    """Run ``config`` and yield episode records as they complete.

    Artifacts under ``out_dir``: ``config.json``, ``state.json``,
    ``episodes.jsonl``, ``checkpoint.bin`` (+ ``.json`` sidecar) and,
    when the generator is exhausted, ``summary.json``. With ``resume`` the
    agent is restored from ``checkpoint.bin`` and episode numbering
    continues from the checkpointed count.
    """
    out = Path(out_dir or config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rho, state_id = config.target_state()
    env = VQSDEnv(rho, config.zeta, config.d_max, config.ee_theta, config.optimizer_budget,
                  config.nm_step, config.polish_factor, config.reward_success)
    agent = DDQNAgent(env.obs_dim, env.n_actions, config.agent, config.agent_seed, config.policy_seed)
    info = {"state_id": state_id, "agent_seed": config.agent_seed, "ee_theta": config.ee_theta}
    info.update(input_metrics(rho, env.state.rho))

    log_path = out / "episodes.jsonl"
    ckpt = out / "checkpoint.bin"
    start = 0
    records: List[dict] = []
    if resume and ckpt.exists():
        meta = agent.load(ckpt)
        start = int(meta["episodes_done"])
        lines = log_path.read_text().splitlines()[:start] if log_path.exists() else []
        records = [json.loads(line) for line in lines]
        log_path.write_text("".join(line + "\n" for line in lines))
        log.info("resumed from %s at episode %d", ckpt, start)
    else:
        config.save(out / "config.json")
        (out / "state.json").write_text(json.dumps(
            {"id": state_id, "matrix": matrix_to_json(rho), **info}, indent=1, sort_keys=True) + "\n")
        log_path.write_text("")

    total = config.episodes if max_episodes is None else min(config.episodes, start + max_episodes)
    done = start
    try:
        with open(log_path, "a") as fh:
            for ep in range(start, total):
                rec = run_episode(env, agent, ep, info)
                fh.write(_json_line(rec) + "\n")
                fh.flush()
                records.append(rec)
                done = ep + 1
                if done % config.checkpoint_every == 0:
                    agent.save(ckpt, {"episodes_done": done, "state_id": state_id})
                if done % 100 == 0:
                    log.info("%s: episode %d, successes %d, eps %.3f", state_id, done,
                             sum(r["success"] for r in records), agent.eps.value)
                yield rec
                if stop_after_first_success and rec["success"]:
                    break
            agent.save(ckpt, {"episodes_done": done, "state_id": state_id})
        summary = summarize(records, config, state_id, {"input_concurrence": info["input_concurrence"]})
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    except NonFiniteLoss as exc:
        _write_partial(out, str(exc), done, {"diagnostic": exc.dump})
        raise
    except OSError as exc:
        _write_partial(out, f"I/O failure: {exc}", done)
        raise


def run_experiment(config: ExperimentConfig, out_dir=None, resume=False, **kw):
    """Run to completion; returns ``(records, summary)``."""
    out = Path(out_dir or config.out_dir)
    records = list(iter_experiment(config, out, resume=resume, **kw))
    summary = json.loads((out / "summary.json").read_text())
    if resume:
        records = read_records(out / "episodes.jsonl")
    return records, summary


def read_records(path) -> List[dict]:
    from .analysis import load_episode_log

    return load_episode_log(path)
