"""Circuits, the discrete action space and the entanglement-enhancing block.

Rotation convention: ``R_A(theta) = exp(-i theta A / 2)``. Gates are applied
in list order, so ``to_unitary([g1, g2]) == G2 @ G1``.
"""

import itertools
import json
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Tuple

import numpy as np

from . import _kernels
from .errors import BadAction, OutOfRange, TooDeep, UnboundParams

ROTATIONS = ("RX", "RY", "RZ")
KINDS = ("RX", "RY", "RZ", "CX", "H", "CRX")
PARAMETRIC = ("RX", "RY", "RZ", "CRX")
KIND_CODE = {k: i for i, k in enumerate(KINDS)}

I2 = np.eye(2, dtype=complex)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
PROJ0 = np.diag([1.0, 0.0]).astype(complex)
PROJ1 = np.diag([0.0, 1.0]).astype(complex)


def rx(theta):
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def ry(theta):
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rz(theta):
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


_ROT = {"RX": rx, "RY": ry, "RZ": rz}


def embed(gate, qubit, n_qubits):
    """Lift a single-qubit ``gate`` acting on ``qubit`` to the full register."""
    return np.kron(np.kron(np.eye(2**qubit), gate), np.eye(2 ** (n_qubits - qubit - 1)))


def controlled(gate, control, target, n_qubits):
    return embed(PROJ0, control, n_qubits) + embed(PROJ1, control, n_qubits) @ embed(gate, target, n_qubits)


@dataclass(frozen=True)
class GateOp:
    kind: str
    qubits: Tuple[int, ...]
    param_slot: Optional[int] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise BadAction(f"unknown gate kind {self.kind!r}")
        arity = 2 if self.kind in ("CX", "CRX") else 1
        if len(self.qubits) != arity:
            raise BadAction(f"{self.kind} takes {arity} qubit(s), got {self.qubits}")
        if arity == 2 and self.qubits[0] == self.qubits[1]:
            raise BadAction("control and target must differ")
        if (self.param_slot is not None) != (self.kind in PARAMETRIC):
            raise BadAction(f"{self.kind} parameter slot mismatch")

    @property
    def action_key(self):
        return (self.kind, self.qubits)


@dataclass(frozen=True)
class Circuit:
    n_qubits: int = 2
    ops: Tuple[GateOp, ...] = ()
    params: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        params = np.asarray(self.params, dtype=float).copy()
        params.setflags(write=False)
        object.__setattr__(self, "params", params)
        slots = [op.param_slot for op in self.ops if op.param_slot is not None]
        if slots != list(range(len(slots))):
            raise UnboundParams(f"parameter slots must be dense and ordered, got {slots}")
        if len(slots) != params.size:
            raise UnboundParams(f"{len(slots)} parametric gates but {params.size} parameters")

    def __len__(self):
        return len(self.ops)

    def __eq__(self, other):
        if not isinstance(other, Circuit):
            return NotImplemented
        return (
            self.n_qubits == other.n_qubits
            and self.ops == other.ops
            and np.array_equal(self.params, other.params)
        )

    @property
    def n_params(self):
        return self.params.size

    def with_params(self, params):
        return Circuit(self.n_qubits, self.ops, params)

    def then(self, other: "Circuit") -> "Circuit":
        """Concatenate: ``other`` runs after ``self``."""
        if other.n_qubits != self.n_qubits:
            raise ValueError("qubit counts differ")
        shift = self.n_params
        ops = list(self.ops)
        for op in other.ops:
            slot = None if op.param_slot is None else op.param_slot + shift
            ops.append(GateOp(op.kind, op.qubits, slot))
        return Circuit(self.n_qubits, tuple(ops), np.concatenate([self.params, other.params]))

    def to_json(self):
        ops = []
        for op in self.ops:
            p = None if op.param_slot is None else float(self.params[op.param_slot])
            ops.append({"kind": op.kind, "qubits": list(op.qubits), "param": p})
        return {"n_qubits": self.n_qubits, "ops": ops}

    @classmethod
    def from_json(cls, doc):
        if isinstance(doc, str):
            doc = json.loads(doc)
        ops, params = [], []
        for entry in doc["ops"]:
            slot = None
            if entry["kind"] in PARAMETRIC:
                if entry.get("param") is None:
                    raise UnboundParams(f"{entry['kind']} without a parameter")
                slot = len(params)
                params.append(float(entry["param"]))
            ops.append(GateOp(entry["kind"], tuple(int(q) for q in entry["qubits"]), slot))
        return cls(int(doc["n_qubits"]), tuple(ops), np.array(params, dtype=float))

    def as_arrays(self):
        """Integer/float arrays describing the circuit for compiled kernels.

        Returns ``(kind_code, qubit_a, qubit_b, slot)``; gates
        without a second qubit or slot carry ``-1``.
        """
        m = len(self.ops)
        kind = np.empty(m, dtype=np.int64)
        qa = np.empty(m, dtype=np.int64)
        qb = np.full(m, -1, dtype=np.int64)
        slot = np.full(m, -1, dtype=np.int64)
        for i, op in enumerate(self.ops):
            kind[i] = KIND_CODE[op.kind]
            qa[i] = op.qubits[0]
            if len(op.qubits) == 2:
                qb[i] = op.qubits[1]
            if op.param_slot is not None:
                slot[i] = op.param_slot
        return kind, qa, qb, slot


def gate_matrix(op: GateOp, params, n_qubits):
    if op.kind in ROTATIONS:
        return embed(_ROT[op.kind](params[op.param_slot]), op.qubits[0], n_qubits)
    if op.kind == "H":
        return embed(HADAMARD, op.qubits[0], n_qubits)
    if op.kind == "CX":
        return controlled(np.array([[0, 1], [1, 0]], dtype=complex), op.qubits[0], op.qubits[1], n_qubits)
    return controlled(rx(params[op.param_slot]), op.qubits[0], op.qubits[1], n_qubits)


def reference_unitary(c: Circuit):
    """Explicit Kronecker-product composition; slow but independent of the kernel."""
    u = np.eye(2**c.n_qubits, dtype=complex)
    for op in c.ops:
        u = gate_matrix(op, c.params, c.n_qubits) @ u
    return u


def to_unitary(c: Circuit):
    """Full circuit unitary, first op applied first."""
    return _kernels.build_unitary(*c.as_arrays(), np.ascontiguousarray(c.params, dtype=float), c.n_qubits)


# --------------------------------------------------------------------------
# action space and observation encoding


def action_space(n_qubits=2):
    """Ordered ``(kind, qubits)`` pairs: rotations per qubit, then CX orientations."""
    actions = [(kind, (q,)) for q in range(n_qubits) for kind in ROTATIONS]
    actions += [("CX", pair) for pair in itertools.permutations(range(n_qubits), 2)]
    return actions


def append_action(c: Circuit, action: int) -> Circuit:
    actions = action_space(c.n_qubits)
    if not 0 <= int(action) < len(actions):
        raise BadAction(f"action {action} outside [0, {len(actions)})")
    kind, qubits = actions[int(action)]
    if kind in ROTATIONS:
        op = GateOp(kind, qubits, c.n_params)
        return Circuit(c.n_qubits, c.ops + (op,), np.append(c.params, 0.0))
    return Circuit(c.n_qubits, c.ops + (GateOp(kind, qubits),), c.params)


def circuit_from_actions(actions, n_qubits=2):
    c = Circuit(n_qubits)
    for a in actions:
        c = append_action(c, a)
    return c


def encode(c: Circuit, d_max: int):
    """One-hot action per depth slot, flattened to ``d_max * n_actions`` floats."""
    actions = action_space(c.n_qubits)
    index = {a: i for i, a in enumerate(actions)}
    if len(c.ops) > d_max:
        raise TooDeep(f"circuit has {len(c.ops)} ops, observation holds {d_max}")
    obs = np.zeros((d_max, len(actions)))
    for slot, op in enumerate(c.ops):
        try:
            obs[slot, index[op.action_key]] = 1.0
        except KeyError:
            raise BadAction(f"{op.kind}{op.qubits} is not in the action space") from None
    return obs.ravel()


def decode(obs, n_qubits=2):
    """Inverse of :func:`encode` up to parameters: the list of action indices."""
    n_act = len(action_space(n_qubits))
    grid = np.asarray(obs).reshape(-1, n_act)
    out = []
    for row in grid:
        hot = np.flatnonzero(row)
        if hot.size == 0:
            break
        out.append(int(hot[0]))
    return out


# --------------------------------------------------------------------------
# resources and the entanglement-enhancing block


class ResourceCount(NamedTuple):
    one_qubit_gates: int
    two_qubit_gates: int
    depth: int

    @property
    def total(self):
        return self.one_qubit_gates + self.two_qubit_gates


def resources(c: Circuit) -> ResourceCount:
    level = [0] * c.n_qubits
    one = two = 0
    for op in c.ops:
        if len(op.qubits) == 1:
            one += 1
        else:
            two += 1
        top = max(level[q] for q in op.qubits) + 1
        for q in op.qubits:
            level[q] = top
    return ResourceCount(one, two, max(level, default=0))


def build_ee_block(theta: float) -> Circuit:
    """``H(q0) . CRX_{0->1}(2 pi theta) . H(q0)`` for ``theta`` in [0, 0.5]."""
    if not 0.0 <= theta <= 0.5:
        raise OutOfRange(f"theta={theta} outside [0, 0.5]")
    ops = (GateOp("H", (0,)), GateOp("CRX", (0, 1), 0), GateOp("H", (0,)))
    return Circuit(2, ops, np.array([2 * np.pi * theta]))
