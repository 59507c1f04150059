"""Dense quantum-information primitives for small qubit systems.

Matrices are plain ``numpy`` arrays. Most functions accept a stack of
matrices with shape ``(..., d, d)`` so that ensemble studies can be
vectorised; qubit 0 is the most significant bit of a basis index, i.e. an
operator ``A`` on qubit 0 of a two-qubit register is ``kron(A, I)``.

Entropies are in bits.
"""

from typing import NamedTuple, Sequence

import numpy as np

from .errors import (
    BadIndex,
    DimensionMismatch,
    InvalidState,
    NoConvergence,
    NonHermitian,
    NonUnitary,
)

HERMITIAN_TOL = 1e-10
UNITARY_TOL = 1e-10
PSD_REJECT = 1e-8
TRACE_TOL = 1e-8
MAX_SWEEPS = 200
RANK_TOL = 1e-12

SIGMA_Y = np.array([[0, -1j], [1j, 0]])
_YY = np.kron(SIGMA_Y, SIGMA_Y)


class Spectrum(NamedTuple):
    eigenvalues: np.ndarray  # (..., d) descending
    eigenvectors: np.ndarray  # (..., d, d) columns aligned with eigenvalues


def _dagger(m):
    return np.conj(np.swapaxes(m, -1, -2))


def n_qubits_of(m) -> int:
    d = np.shape(m)[-1]
    n = int(round(np.log2(d)))
    if d < 2 or 2**n != d:
        raise DimensionMismatch(f"dimension {d} is not a power of two")
    return n


def check_hermitian(m, tol=HERMITIAN_TOL):
    m = np.asarray(m)
    if m.shape[-1] != m.shape[-2]:
        raise DimensionMismatch(f"matrix is not square: {m.shape}")
    scale = max(1.0, float(np.max(np.abs(m), initial=0.0)))
    err = float(np.max(np.abs(m - _dagger(m)), initial=0.0))
    if err > tol * scale:
        raise NonHermitian(f"matrix deviates from its adjoint by {err:.3e}")


def check_unitary(u, tol=UNITARY_TOL):
    u = np.asarray(u)
    d = u.shape[-1]
    if u.shape[-2] != d:
        raise DimensionMismatch(f"matrix is not square: {u.shape}")
    err = float(np.max(np.abs(_dagger(u) @ u - np.eye(d))))
    if err > tol:
        raise NonUnitary(f"U^dag U deviates from identity by {err:.3e}")


# --------------------------------------------------------------------------
# eigensolver


def _jacobi(a, want_vectors, max_sweeps):
    """Cyclic complex Jacobi on a stack of Hermitian matrices (in place)."""
    n = a.shape[-1]
    batch = a.shape[:-2]
    v = np.broadcast_to(np.eye(n, dtype=complex), batch + (n, n)).copy() if want_vectors else None
    if n == 1:
        return a, v
    fro = np.sqrt(np.sum(np.abs(a) ** 2, axis=(-1, -2)))
    target = 1e-15 * fro + 1e-300
    iu = np.triu_indices(n, 1)
    for _ in range(max_sweeps):
        off = np.sqrt(2.0 * np.sum(np.abs(a[..., iu[0], iu[1]]) ** 2, axis=-1))
        if np.all(off <= target):
            return a, v
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[..., p, q]
                mag = np.abs(apq)
                app = a[..., p, p].real
                aqq = a[..., q, q].real
                active = mag > 1e-300
                if not np.any(active):
                    continue
                safe = np.where(active, mag, 1.0)
                ph = np.where(active, apq / safe, 1.0)
                theta = (aqq - app) / (2.0 * safe)
                with np.errstate(over="ignore"):
                    t = np.where(theta >= 0, 1.0, -1.0) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
                t = np.where(active, t, 0.0)
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                sph = (s * ph)[..., None]
                sphc = np.conj(sph)
                c_ = c[..., None]

                colp = a[..., :, p].copy()
                colq = a[..., :, q]
                a[..., :, p] = c_ * colp - sphc * colq
                a[..., :, q] = sph * colp + c_ * colq
                rowp = a[..., p, :].copy()
                rowq = a[..., q, :]
                a[..., p, :] = c_ * rowp - sph * rowq
                a[..., q, :] = sphc * rowp + c_ * rowq
                a[..., p, q] = np.where(active, 0.0, a[..., p, q])
                a[..., q, p] = np.where(active, 0.0, a[..., q, p])
                if v is not None:
                    vp = v[..., :, p].copy()
                    vq = v[..., :, q]
                    v[..., :, p] = c_ * vp - sphc * vq
                    v[..., :, q] = sph * vp + c_ * vq
    raise NoConvergence(f"Jacobi iteration did not converge in {max_sweeps} sweeps")


def _first_nonzero(vec, tol=1e-12):
    idx = np.flatnonzero(np.abs(vec) > tol)
    return int(idx[0]) if idx.size else len(vec)


def _tidy_single(w, vecs, tie_tol):
    """Phase-fix eigenvectors and break eigenvalue ties for one matrix."""
    d = w.shape[0]
    for k in range(d):
        j = _first_nonzero(vecs[:, k])
        if j < d:
            vecs[:, k] *= np.conj(vecs[j, k]) / abs(vecs[j, k])
    order = list(range(d))
    start = 0
    while start < d:
        stop = start + 1
        while stop < d and abs(w[stop - 1] - w[stop]) <= tie_tol:
            stop += 1
        if stop - start > 1:
            grp = order[start:stop]
            grp.sort(key=lambda k: _first_nonzero(vecs[:, k]))
            order[start:stop] = grp
        start = stop
    return w[order], vecs[:, order]


def hermitian_eig(m, max_sweeps=MAX_SWEEPS) -> Spectrum:
    """Eigen-decomposition of a Hermitian matrix (or stack) by cyclic Jacobi.

    Eigenvalues come back in descending order. Each eigenvector is scaled so
    its first non-negligible component is real and positive; within a
    degenerate group vectors are ordered by the position of that component.

    Raises
    ------
    NonHermitian
        If ``m`` differs from its adjoint by more than 1e-10 (relative to
        its largest entry when that exceeds one).
    NoConvergence
        If the off-diagonal norm does not vanish within ``max_sweeps``.
    """
    m = np.asarray(m)
    check_hermitian(m)
    a = 0.5 * (m + _dagger(m)).astype(complex)
    a, v = _jacobi(a, True, max_sweeps)
    w = np.real(np.diagonal(a, axis1=-2, axis2=-1))
    order = np.argsort(-w, axis=-1, kind="stable")
    w = np.take_along_axis(w, order, axis=-1)
    v = np.take_along_axis(v, order[..., None, :], axis=-1)

    flat_w = w.reshape(-1, w.shape[-1])
    flat_v = v.reshape(-1, *v.shape[-2:])
    scale = np.maximum(1.0, np.max(np.abs(flat_w), axis=-1))
    for i in range(flat_w.shape[0]):
        flat_w[i], flat_v[i] = _tidy_single(flat_w[i], flat_v[i], 1e-12 * scale[i])
    return Spectrum(flat_w.reshape(w.shape), flat_v.reshape(v.shape))


def hermitian_eigvals(m, max_sweeps=MAX_SWEEPS):
    """Descending eigenvalues only; same solver as :func:`hermitian_eig`."""
    m = np.asarray(m)
    check_hermitian(m)
    a = 0.5 * (m + _dagger(m)).astype(complex)
    a, _ = _jacobi(a, False, max_sweeps)
    w = np.real(np.diagonal(a, axis1=-2, axis2=-1))
    return -np.sort(-w, axis=-1)


# --------------------------------------------------------------------------
# states


def validate_density(m, n_qubits=None):
    """Check density-matrix invariants, repairing tiny PSD violations.

    Eigenvalues in ``[-1e-8, 0)`` are projected to zero and the state is
    renormalised; anything more negative is rejected.
    """
    m = np.array(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidState(f"density matrix must be square, got shape {m.shape}")
    n = n_qubits_of(m)
    if n_qubits is not None and n != n_qubits:
        raise DimensionMismatch(f"expected {n_qubits} qubits, got {n}")
    try:
        check_hermitian(m)
    except NonHermitian as exc:
        raise InvalidState(str(exc)) from None
    tr = np.trace(m).real
    if abs(tr - 1.0) > TRACE_TOL:
        raise InvalidState(f"trace is {tr!r}, expected 1")
    m = 0.5 * (m + m.conj().T)
    w, vecs = hermitian_eig(m)
    if w[-1] < -PSD_REJECT:
        raise InvalidState(f"state has eigenvalue {w[-1]:.3e} < -{PSD_REJECT}")
    if w[-1] < 0:
        w = np.clip(w, 0.0, None)
        w = w / w.sum()
        m = (vecs * w) @ vecs.conj().T
        m = 0.5 * (m + m.conj().T)
    elif tr != 1.0:
        m = m / tr
    return m


def ket_to_dm(psi):
    psi = np.asarray(psi, dtype=complex)
    return psi[..., :, None] * np.conj(psi[..., None, :])


def basis_dm(bits: str):
    """Projector onto a computational basis state, e.g. ``basis_dm("10")``."""
    d = 2 ** len(bits)
    rho = np.zeros((d, d), dtype=complex)
    k = int(bits, 2)
    rho[k, k] = 1.0
    return rho


def bell_state():
    psi = np.zeros(4, dtype=complex)
    psi[0] = psi[3] = 1 / np.sqrt(2)
    return psi


def werner_state(p):
    return p * ket_to_dm(bell_state()) + (1 - p) * np.eye(4) / 4


def apply_unitary(rho, u, check=True):
    """Return ``U rho U^dag``."""
    rho = np.asarray(rho)
    u = np.asarray(u)
    if rho.shape[-1] != u.shape[-1]:
        raise DimensionMismatch(f"state dim {rho.shape[-1]} != unitary dim {u.shape[-1]}")
    if check:
        check_unitary(u)
    return u @ rho @ _dagger(u)


def dephase(rho):
    """Completely dephase in the computational basis (keep the diagonal)."""
    rho = np.asarray(rho)
    diag = np.diagonal(rho, axis1=-2, axis2=-1)
    out = np.zeros_like(rho)
    idx = np.arange(rho.shape[-1])
    out[..., idx, idx] = diag
    return out


def purity(rho):
    rho = np.asarray(rho)
    return np.real(np.einsum("...ij,...ji->...", rho, rho))


def partial_trace(rho, keep: Sequence[int]):
    """Reduced state on the qubits in ``keep`` (kept in ascending order)."""
    rho = np.asarray(rho)
    n = n_qubits_of(rho)
    keep = sorted(set(int(k) for k in keep))
    if not keep or keep[0] < 0 or keep[-1] >= n:
        raise BadIndex(f"keep={keep} is not a non-empty subset of range({n})")
    batch = rho.shape[:-2]
    nb = len(batch)
    t = rho.reshape(batch + (2,) * (2 * n))
    current = n
    for q in sorted(set(range(n)) - set(keep), reverse=True):
        t = np.trace(t, axis1=nb + q, axis2=nb + q + current)
        current -= 1
    dk = 2 ** len(keep)
    return t.reshape(batch + (dk, dk))


def _entropy_from_eigs(w):
    w = np.clip(w, 0.0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(w > 0, -w * np.log2(np.where(w > 0, w, 1.0)), 0.0)
    return np.sum(terms, axis=-1)


def von_neumann_entropy(rho):
    """Von Neumann entropy in bits, with ``0 log 0 = 0``."""
    return _entropy_from_eigs(hermitian_eigvals(rho))


def conditional_entropy(rho, target: int):
    """``S(target | other) = S(rho) - S(rho_other)`` for a two-qubit state."""
    rho = np.asarray(rho)
    if n_qubits_of(rho) != 2:
        raise DimensionMismatch("conditional_entropy is defined here for two qubits")
    if target not in (0, 1):
        raise BadIndex(f"target must be 0 or 1, got {target}")
    other = 1 - target
    return von_neumann_entropy(rho) - von_neumann_entropy(partial_trace(rho, [other]))


def conditional_entropies(rho):
    """Both per-qubit conditional entropies ``(S_{0|1}, S_{1|0})``, sharing the joint spectrum."""
    rho = np.asarray(rho)
    s_ab = von_neumann_entropy(rho)
    s_0 = von_neumann_entropy(partial_trace(rho, [0]))
    s_1 = von_neumann_entropy(partial_trace(rho, [1]))
    return s_ab - s_1, s_ab - s_0


def concurrence_mixed(rho):
    """Wootters concurrence of a two-qubit state (or stack of states).

    With ``rho = A A^dag`` the Wootters values ``lambda_i`` are the singular
    values of ``M = A^dag (Y x Y) conj(A)``, which avoids square roots of
    eigenvalue noise. Eigenvalues of ``rho`` below ``RANK_TOL`` count as zero.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape[-1] != 4 or rho.shape[-2] != 4:
        raise DimensionMismatch("concurrence is defined for two-qubit states")
    w, vecs = hermitian_eig(rho)
    w = np.where(w < RANK_TOL, 0.0, w)
    a = vecs * np.sqrt(w)[..., None, :]
    m = _dagger(a) @ _YY @ np.conj(a)
    lam = np.linalg.svd(m, compute_uv=False)
    c = lam[..., 0] - lam[..., 1] - lam[..., 2] - lam[..., 3]
    return np.maximum(c, 0.0)


def concurrence_pure(psi):
    psi = np.asarray(psi, dtype=complex)
    if psi.shape[-1] != 4:
        raise DimensionMismatch("concurrence_pure expects a two-qubit state vector")
    return 2.0 * np.abs(psi[..., 0] * psi[..., 3] - psi[..., 1] * psi[..., 2])


# --------------------------------------------------------------------------
# sampling


def make_rng(seed) -> np.random.Generator:
    """The package-wide generator: Philox (64-bit, counter based)."""
    return np.random.Generator(np.random.Philox(int(seed)))


def hs_random_states(n_qubits: int, count: int, rng: np.random.Generator):
    """``count`` Hilbert-Schmidt random states ``G G^dag / Tr(G G^dag)``."""
    if n_qubits < 1:
        raise ValueError("n_qubits must be >= 1")
    d = 2**n_qubits
    g = rng.standard_normal((count, d, d)) + 1j * rng.standard_normal((count, d, d))
    rho = g @ _dagger(g)
    tr = np.real(np.trace(rho, axis1=-2, axis2=-1))
    return rho / tr[:, None, None]


def sample_hs_random_state(n_qubits: int, rng_seed: int):
    return hs_random_states(n_qubits, 1, make_rng(rng_seed))[0]


def haar_pure_states(n_qubits: int, count: int, rng: np.random.Generator):
    d = 2**n_qubits
    psi = rng.standard_normal((count, d)) + 1j * rng.standard_normal((count, d))
    return psi / np.linalg.norm(psi, axis=-1, keepdims=True)
