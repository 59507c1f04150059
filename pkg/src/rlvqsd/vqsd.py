"""Variational state diagonalisation: cost, parameter training, readout."""

from typing import List, NamedTuple

import numpy as np

from . import _kernels
from .ansatz import Circuit, to_unitary
from .errors import DimensionMismatch
from .qcore import apply_unitary, dephase, purity

DEFAULT_BUDGET = 300
DEFAULT_STEP = np.pi / 2
DEFAULT_FATOL = 1e-8


class CostReport(NamedTuple):
    cost: float
    params_opt: np.ndarray
    evals_used: int


class EigenReadout(NamedTuple):
    inferred_eigenvalues: np.ndarray
    bitstrings: List[str]
    inferred_eigenvectors: np.ndarray  # rows are the inferred |v_b>


def _check_dims(rho, c):
    if np.shape(rho) != (2**c.n_qubits, 2**c.n_qubits):
        raise DimensionMismatch(f"state shape {np.shape(rho)} vs {c.n_qubits}-qubit circuit")


def unitary_cost(rho, u) -> float:
    """Purity lost by dephasing the evolved state, ``Tr rho^2 - Tr Z(U rho U^dag)^2``."""
    evolved = apply_unitary(rho, u)
    return float(purity(rho) - purity(dephase(evolved)))


def cost(rho, c: Circuit) -> float:
    _check_dims(rho, c)
    return unitary_cost(rho, to_unitary(c))


def fast_cost(rho, c: Circuit, params=None) -> float:
    _check_dims(rho, c)
    rho = np.ascontiguousarray(rho, dtype=np.complex128)
    p = c.params if params is None else np.asarray(params, dtype=float)
    return float(_kernels.circuit_cost(*c.as_arrays(), p, c.n_qubits, rho, float(purity(rho))))


def optimize_params(rho, c: Circuit, warm_start=None, budget=DEFAULT_BUDGET,
                    step=DEFAULT_STEP, fatol=DEFAULT_FATOL, restarts=1) -> CostReport:
    """Minimise :func:`cost` over the circuit parameters with Nelder-Mead.

    Starts at ``warm_start`` (default: the circuit's own parameters) and
    never returns a point worse than it. When the simplex collapses before
    the budget runs out the search restarts once around the best vertex.
    """
    _check_dims(rho, c)
    if budget < 1:
        raise ValueError("budget must be >= 1")
    x0 = c.params if warm_start is None else np.asarray(warm_start, dtype=float)
    if x0.shape != (c.n_params,):
        raise DimensionMismatch(f"warm start has {x0.size} entries, circuit has {c.n_params} parameters")
    rho = np.ascontiguousarray(rho, dtype=np.complex128)
    x, f, evals = _kernels.nelder_mead(
        np.array(x0, dtype=float), float(step), int(budget), float(fatol), int(restarts),
        *c.as_arrays(), c.n_qubits, rho, float(purity(rho)),
    )
    return CostReport(float(f), np.asarray(x), int(evals))


def eigen_readout(rho, c: Circuit) -> EigenReadout:
    """Read eigenvalues off the diagonal of ``U rho U^dag`` and eigenvectors off ``U^dag``."""
    _check_dims(rho, c)
    return unitary_readout(rho, to_unitary(c))


def unitary_readout(rho, u) -> EigenReadout:
    n_qubits = int(np.log2(len(u)))
    diag = np.real(np.diagonal(apply_unitary(rho, u, check=False)))
    order = np.argsort(-diag, kind="stable")
    labels = [format(int(b), f"0{n_qubits}b") for b in order]
    vecs = np.conj(u[order, :])
    return EigenReadout(np.clip(diag[order], 0.0, 1.0), labels, vecs)
