"""Post-hoc studies over episode logs and random-state ensembles.

Everything here is a pure function of its inputs. Episode records are the
dicts written one per line by :mod:`rlvqsd.qas`.
"""

import csv
import json
import math
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .errors import InsufficientAnsatzes, InsufficientData, LengthMismatch, MalformedLog, NoSuccesses, ZeroVariance
from .qcore import concurrence_mixed, conditional_entropies, hermitian_eigvals, hs_random_states, make_rng

REQUIRED_KEYS = (
    "episode", "success", "state_id", "agent_seed", "final_cost", "circuit", "resources",
    "input_concurrence", "concurrence_evolved", "concurrence_of_ansatz",
    "cond_entropy_input", "cond_entropy_evolved", "inferred_eigenvalues", "reward_trace",
)


# --------------------------------------------------------------------------
# I/O


def load_episode_log(path) -> List[dict]:
    """Parse an ``episodes.jsonl`` file, rejecting bad lines with their line number."""
    path = Path(path)
    records = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedLog(path, line_no, exc.msg) from None
            if not isinstance(rec, dict):
                raise MalformedLog(path, line_no, "not a JSON object")
            missing = [k for k in REQUIRED_KEYS if k not in rec]
            if missing:
                raise MalformedLog(path, line_no, f"missing {', '.join(missing)}")
            records.append(rec)
    return records


def load_runs(paths: Iterable) -> List[dict]:
    """Records from run directories (``<dir>/episodes.jsonl``) or log files."""
    records = []
    for p in paths:
        p = Path(p)
        records += load_episode_log(p / "episodes.jsonl" if p.is_dir() else p)
    return records


def fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "nan" if math.isnan(x) else f"{float(x):.10g}"
    return str(x)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) for x in row])
    return path


# --------------------------------------------------------------------------
# correlation


def pcc(x, y) -> float:
    """Pearson correlation with population moments."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatch(f"lengths differ: {x.shape} vs {y.shape}")
    if x.size < 2:
        raise InsufficientData("need at least two points")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = math.sqrt(np.mean(dx * dx))
    sy = math.sqrt(np.mean(dy * dy))
    if sx <= 1e-12 * max(1.0, np.max(np.abs(x))) or sy <= 1e-12 * max(1.0, np.max(np.abs(y))):
        raise ZeroVariance("one of the samples is constant")
    return float(np.clip(np.mean(dx * dy) / (sx * sy), -1.0, 1.0))


def correlation_label(r: float) -> str:
    if r is None or math.isnan(r):
        return "undefined"
    kind = "correlation" if r >= 0 else "anti-correlation"
    a = abs(r)
    strength = "mild" if a < 0.3 else ("moderate" if a <= 0.7 else "strong")
    return f"{strength} {kind}"


# --------------------------------------------------------------------------
# entanglement bounds


@dataclass
class BoundsRecord:
    state_id: str
    input_concurrence: float
    per_seed: Dict[int, Dict[str, float]] = field(default_factory=dict)
    no_success_seeds: List[int] = field(default_factory=list)
    n_success: int = 0

    def _stat(self, key, fn):
        vals = [self.per_seed[s][key] for s in sorted(self.per_seed)]
        return float(fn(vals)) if vals else float("nan")

    def mean(self, key):
        return self._stat(key, np.mean)

    def std(self, key):
        return self._stat(key, lambda v: np.std(v, ddof=0))

    @property
    def upper(self):
        return self.mean("max_evolved")

    @property
    def lower(self):
        return self.mean("min_evolved")


BOUND_KEYS = ("max_evolved", "min_evolved", "max_ansatz", "min_ansatz")


def group_by_state(records):
    groups = defaultdict(list)
    for r in records:
        groups[r["state_id"]].append(r)
    return dict(sorted(groups.items()))


def extract_concurrence_bounds(records: Iterable[dict]) -> List[BoundsRecord]:
    """Max/min concurrence over admissible ansatzes, per state and DDQN seed.

    Both the evolved state ``U rho U^dag`` and the ansatz acting on ``|00>``
    are tracked. Across seeds the mean and population standard deviation
    are reported; seeds without successes are listed, not averaged.
    """
    out = []
    for state_id, recs in group_by_state(records).items():
        by_seed = defaultdict(list)
        for r in recs:
            by_seed[int(r["agent_seed"])].append(r)
        b = BoundsRecord(state_id, float(recs[0]["input_concurrence"]))
        for seed in sorted(by_seed):
            succ = [r for r in by_seed[seed] if r["success"]]
            if not succ:
                b.no_success_seeds.append(seed)
                continue
            ev = [float(r["concurrence_evolved"]) for r in succ]
            an = [float(r["concurrence_of_ansatz"]) for r in succ]
            b.per_seed[seed] = {"max_evolved": max(ev), "min_evolved": min(ev),
                                "max_ansatz": max(an), "min_ansatz": min(an)}
            b.n_success += len(succ)
        out.append(b)
    return out


def require_successes(bounds: List[BoundsRecord]):
    empty = [b.state_id for b in bounds if not b.per_seed]
    if empty:
        raise NoSuccesses(f"no admissible ansatz for state(s): {', '.join(empty)}")


BOUNDS_HEADER = ["state_id", "input_concurrence", "n_seeds", "n_success",
                 "max_concurrence_mean", "max_concurrence_std", "min_concurrence_mean", "min_concurrence_std",
                 "ansatz_max_concurrence_mean", "ansatz_max_concurrence_std",
                 "ansatz_min_concurrence_mean", "ansatz_min_concurrence_std", "seeds_without_success"]


def bounds_rows(bounds: List[BoundsRecord]):
    for b in bounds:
        yield [b.state_id, b.input_concurrence, len(b.per_seed), b.n_success,
               b.mean("max_evolved"), b.std("max_evolved"), b.mean("min_evolved"), b.std("min_evolved"),
               b.mean("max_ansatz"), b.std("max_ansatz"), b.mean("min_ansatz"), b.std("min_ansatz"),
               " ".join(str(s) for s in b.no_success_seeds)]


# --------------------------------------------------------------------------
# phase-transition scan


@dataclass
class EtaScan:
    k: np.ndarray
    n_ik: np.ndarray
    n_kj: np.ndarray
    pcc_ik: np.ndarray  # nan where the interval could not be evaluated
    pcc_kj: np.ndarray
    status_ik: List[str]
    status_kj: List[str]
    k_star: Optional[float]

    def eta(self, w):
        """``w PCC_ik + (1 - w) PCC_kj``; only ``w`` in {0, 1} is a known correlation measure."""
        if w == 1:
            return self.pcc_ik.copy()
        if w == 0:
            return self.pcc_kj.copy()
        warnings.warn("eta for 0 < w < 1 is experimental", stacklevel=2)
        return w * self.pcc_ik + (1 - w) * self.pcc_kj


def k_grid(k_min, k_max, k_step):
    n = int(math.floor((k_max - k_min) / k_step + 1e-9)) + 1
    return k_min + k_step * np.arange(n)


def _interval_pcc(u, l):
    if len(u) < 3:
        return float("nan"), "insufficient_data"
    try:
        return pcc(u, l), "ok"
    except ZeroVariance:
        return float("nan"), "zero_variance"


def eta_scan(points: Sequence[Tuple[float, float, float]], ks, lo=None, hi=None) -> EtaScan:
    """Correlation of upper vs lower bounds below and above each split ``k``.

    ``points`` are ``(input_concurrence, upper, lower)``. The range
    ``[lo, hi]`` defaults to the span of the input concurrences; for each
    ``k`` the intervals are ``[lo, k)`` and ``[k, hi]``. ``k_star`` is the
    first sign change of ``PCC_kj`` from negative to non-negative, located
    by linear interpolation between grid points.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    c, u, l = pts[:, 0], pts[:, 1], pts[:, 2]
    lo = c.min() if lo is None else lo
    hi = c.max() if hi is None else hi
    ks = np.asarray(ks, dtype=float)
    if np.any(np.diff(ks) <= 0):
        raise ValueError("k grid must be strictly increasing")
    res = {"n_ik": [], "n_kj": [], "pcc_ik": [], "pcc_kj": [], "status_ik": [], "status_kj": []}
    for k in ks:
        left = (c >= lo) & (c < k)
        right = (c >= k) & (c <= hi)
        for side, mask in (("ik", left), ("kj", right)):
            r, status = _interval_pcc(u[mask], l[mask])
            res[f"n_{side}"].append(int(mask.sum()))
            res[f"pcc_{side}"].append(r)
            res[f"status_{side}"].append(status)
    pkj = np.array(res["pcc_kj"])
    k_star = None
    valid = np.flatnonzero(~np.isnan(pkj))
    for a, b in zip(valid[:-1], valid[1:]):
        if pkj[a] < 0 <= pkj[b]:
            k_star = float(ks[a] + (0.0 - pkj[a]) * (ks[b] - ks[a]) / (pkj[b] - pkj[a]))
            break
    return EtaScan(ks, np.array(res["n_ik"]), np.array(res["n_kj"]), np.array(res["pcc_ik"]), pkj,
                   res["status_ik"], res["status_kj"], k_star)


def bounds_points(bounds: List[BoundsRecord]):
    return [(b.input_concurrence, b.upper, b.lower) for b in bounds if b.per_seed]


ETA_HEADER = ["k", "n_ik", "pcc_ik", "status_ik", "n_kj", "pcc_kj", "status_kj", "eta_w1", "eta_w0",
              "label_kj"]


def eta_rows(scan: EtaScan):
    eta1, eta0 = scan.eta(1), scan.eta(0)
    for i, k in enumerate(scan.k):
        yield [float(k), scan.n_ik[i], scan.pcc_ik[i], scan.status_ik[i], scan.n_kj[i], scan.pcc_kj[i],
               scan.status_kj[i], eta1[i], eta0[i], correlation_label(scan.pcc_kj[i])]


# --------------------------------------------------------------------------
# per-qubit contribution


def delta_from_entropies(s_in, s_out):
    """``[S01(out) - S01(in)] - [S10(out) - S10(in)]`` from ``(S_{0|1}, S_{1|0})`` pairs."""
    return (s_out[0] - s_in[0]) - (s_out[1] - s_in[1])


def delta_contribution(rho, rho_prime):
    """Relative per-qubit change of conditional entropy and the concurrence drop.

    Returns ``(delta, delta_c)`` with ``delta_c = C(rho) - C(rho')``.
    """
    d = delta_from_entropies(conditional_entropies(rho), conditional_entropies(rho_prime))
    dc = concurrence_mixed(rho) - concurrence_mixed(rho_prime)
    return float(d), float(dc)


def contribution_points(records):
    """``(delta_c, delta)`` for every admissible ansatz in the logs."""
    pts = []
    for r in records:
        if not r["success"]:
            continue
        delta = delta_from_entropies(r["cond_entropy_input"], r["cond_entropy_evolved"])
        pts.append((r["input_concurrence"] - r["concurrence_evolved"], delta, r["state_id"], r["episode"]))
    return pts


def cumulative_weight(points) -> Tuple[float, float]:
    """Total ``|delta|`` of points with ``delta < 0`` and with ``delta > 0``."""
    neg = sum(-p[1] for p in points if p[1] < 0)
    pos = sum(p[1] for p in points if p[1] > 0)
    return float(neg), float(pos)


# --------------------------------------------------------------------------
# eigenvalues vs qubit correlation


@dataclass
class EigenCorrelation:
    state_id: str
    n_ansatz: int
    pcc: float
    status: str
    median_eigenvalues: List[float]


def state_eigen_correlation(state_id, records, min_ansatz=3) -> EigenCorrelation:
    succ = [r for r in records if r["success"]]
    if len(succ) < min_ansatz:
        raise InsufficientAnsatzes(f"{state_id}: {len(succ)} admissible ansatz(es), need {min_ansatz}")
    s01 = [r["cond_entropy_evolved"][0] for r in succ]
    s10 = [r["cond_entropy_evolved"][1] for r in succ]
    try:
        r_, status = pcc(s01, s10), "ok"
    except ZeroVariance:
        r_, status = float("nan"), "zero_variance"
    eig = np.array([r["inferred_eigenvalues"] for r in succ], dtype=float)
    return EigenCorrelation(state_id, len(succ), r_, status, [float(x) for x in np.median(eig, axis=0)])


def eigenvalue_correlation_study(records, min_ansatz=3) -> Tuple[List[EigenCorrelation], List[str]]:
    """Per state: PCC between the two qubits' conditional entropies across ansatzes.

    Returns the per-state results and the ids of states skipped for having
    fewer than ``min_ansatz`` admissible ansatzes.
    """
    out, skipped = [], []
    for state_id, recs in group_by_state(records).items():
        try:
            out.append(state_eigen_correlation(state_id, recs, min_ansatz))
        except InsufficientAnsatzes:
            skipped.append(state_id)
    return out, skipped


EIGEN_HEADER = ["state_id", "rank", "median_inferred_eigenvalue", "pcc_cond_entropy", "label", "n_ansatz",
                "status"]


def eigen_rows(results: List[EigenCorrelation]):
    for res in results:
        for rank, lam in enumerate(res.median_eigenvalues, start=1):
            yield [res.state_id, rank, lam, res.pcc, correlation_label(res.pcc), res.n_ansatz, res.status]


# --------------------------------------------------------------------------
# random-state ensemble

ENSEMBLE_CHUNK = 10000
ENSEMBLE_HEADER = ["index", "concurrence", "eig1", "eig2", "eig3", "eig4", "delta_cond_entropy"]


def ensemble_rows(states):
    """Concurrence, descending spectrum and ``S_{0|1} - S_{1|0}`` for a stack of states."""
    states = np.asarray(states, dtype=complex).reshape(-1, 4, 4)
    s01, s10 = conditional_entropies(states)
    return {
        "concurrence": concurrence_mixed(states),
        "eigenvalues": hermitian_eigvals(states),
        "delta_s": s01 - s10,
    }


def ensemble_study(n_samples: int, seed: int):
    """Hilbert-Schmidt ensemble table; output depends only on ``(n_samples, seed)``."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = make_rng(seed)
    parts = []
    left = n_samples
    while left > 0:
        m = min(ENSEMBLE_CHUNK, left)
        parts.append(ensemble_rows(hs_random_states(2, m, rng)))
        left -= m
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


def ensemble_table_rows(table):
    for i in range(len(table["concurrence"])):
        yield [i, table["concurrence"][i], *table["eigenvalues"][i], table["delta_s"][i]]


def read_ensemble_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {"concurrence": data[:, 1], "eigenvalues": data[:, 2:6], "delta_s": data[:, 6]}


def ensemble_aggregates(table, n_bins=5, threshold=0.6):
    """Summary statistics behind the ensemble trends.

    ``quantile_mean_abs_delta`` splits the samples into ``n_bins`` equal
    groups by concurrence rank (ties in input order) and averages
    ``|S_{0|1} - S_{1|0}|`` in each.
    """
    c = np.asarray(table["concurrence"])
    lam1 = np.asarray(table["eigenvalues"])[:, 0]
    ads = np.abs(np.asarray(table["delta_s"]))
    order = np.argsort(c, kind="stable")
    bins = np.array_split(order, n_bins)
    frac = float(np.mean(c > threshold))
    return {
        "n": int(c.size),
        "spearman_concurrence_lambda1": float(stats.spearmanr(c, lam1).statistic),
        "quantile_mean_abs_delta": [float(ads[b].mean()) for b in bins],
        "quantile_mean_concurrence": [float(c[b].mean()) for b in bins],
        "fraction_above_threshold": frac,
        "fraction_above_threshold_se": math.sqrt(frac * (1 - frac) / c.size),
        "fraction_separable": float(np.mean(c == 0)),
    }


# --------------------------------------------------------------------------
# resources on the bounds


def _pick(succ, upper):
    if upper:
        key = lambda r: (-r["concurrence_evolved"], r["resources"]["one_qubit_gates"] + r["resources"]["two_qubit_gates"], r["episode"])
    else:
        key = lambda r: (r["concurrence_evolved"], r["resources"]["one_qubit_gates"] + r["resources"]["two_qubit_gates"], r["episode"])
    return min(succ, key=key)


RESOURCE_HEADER = ["state_id", "bound", "concurrence_evolved", "one_qubit_gates", "two_qubit_gates",
                   "total_gates", "depth", "episode"]


def resource_stats(records):
    """Resources of the max- and min-concurrence admissible ansatz per state, plus averages."""
    rows = []
    for state_id, recs in group_by_state(records).items():
        succ = [r for r in recs if r["success"]]
        if not succ:
            continue
        for bound in ("upper", "lower"):
            r = _pick(succ, bound == "upper")
            res = r["resources"]
            rows.append([state_id, bound, float(r["concurrence_evolved"]), res["one_qubit_gates"],
                         res["two_qubit_gates"], res["one_qubit_gates"] + res["two_qubit_gates"],
                         res["depth"], r["episode"]])
    if not rows:
        raise NoSuccesses("no admissible ansatz in any state")
    averages = {}
    for bound in ("upper", "lower"):
        sel = np.array([row[3:7] for row in rows if row[1] == bound], dtype=float)
        averages[bound] = dict(zip(("one_qubit_gates", "two_qubit_gates", "total_gates", "depth"),
                                   (float(x) for x in sel.mean(axis=0))))
    return rows, averages
