import json
import math
import random

import numpy as np
import pytest
from conftest import make_record

from rlvqsd import analysis as an
from rlvqsd.errors import InsufficientAnsatzes, LengthMismatch, MalformedLog, NoSuccesses, ZeroVariance
from rlvqsd.qcore import basis_dm, bell_state, hs_random_states, ket_to_dm

# per-state (max mean, max std, min mean, min std) over five DDQN seeds
TABLE_I = [
    (0.874, 0.002, 0.183, 0.004), (0.849, 0.002, 0.108, 0.028), (0.975, 0.001, 0.084, 0.006),
    (0.936, 0.002, 0.118, 0.009), (0.880, 0.001, 0.188, 0.013), (0.911, 0.003, 0.156, 0.024),
    (0.933, 0.001, 0.235, 0.013), (0.928, 0.005, 0.208, 0.013), (0.831, 0.011, 0.302, 0.010),
]
OFFSETS = (-1.5, -0.5, 0.0, 0.5, 1.5)  # population std of these is exactly 1


def table_i_records():
    recs = []
    ep = 0
    for i, (mx, sx, mn, sn) in enumerate(TABLE_I):
        for seed, k in enumerate(OFFSETS):
            hi, lo = mx + sx * k, mn + sn * k
            for conc in (hi, 0.5 * (hi + lo), lo):
                recs.append(make_record(state_id=f"state{i + 1}", agent_seed=seed, episode=ep, conc=conc))
                ep += 1
            recs.append(make_record(state_id=f"state{i + 1}", agent_seed=seed, episode=ep, success=False, conc=1.0))
            ep += 1
    return recs


def write_log(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records))
    return path


# ---- pcc


def test_pcc_examples():
    assert an.pcc([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8)
    with pytest.raises(ZeroVariance):
        an.pcc([0.1, 0.1, 0.1], [1, 2, 3])
    with pytest.raises(LengthMismatch):
        an.pcc([1, 2, 3], [1, 2])


@pytest.mark.parametrize("a,b", [(2.0, 1.0), (-0.5, 3.0), (1e-3, -7.0)])
def test_pcc_affine(a, b):
    x = np.random.default_rng(0).random(20)
    assert an.pcc(x, a * x + b) == pytest.approx(math.copysign(1, a), abs=1e-10)


def test_correlation_labels():
    assert an.correlation_label(0.1) == "mild correlation"
    assert an.correlation_label(-0.5) == "moderate anti-correlation"
    assert an.correlation_label(0.95) == "strong correlation"
    assert an.correlation_label(float("nan")) == "undefined"


# ---- bounds


def test_table_i_replay(tmp_path):
    recs = an.load_episode_log(write_log(tmp_path / "episodes.jsonl", table_i_records()))
    bounds = an.extract_concurrence_bounds(recs)
    assert [b.state_id for b in bounds] == [f"state{i}" for i in range(1, 10)]
    for b, (mx, sx, mn, sn) in zip(bounds, TABLE_I):
        assert abs(b.mean("max_evolved") - mx) <= 1e-12
        assert abs(b.std("max_evolved") - sx) <= 1e-12
        assert abs(b.mean("min_evolved") - mn) <= 1e-12
        assert abs(b.std("min_evolved") - sn) <= 1e-12
        assert b.n_success == 15 and not b.no_success_seeds


def test_bounds_permutation_invariant():
    recs = table_i_records()
    ref = list(an.bounds_rows(an.extract_concurrence_bounds(recs)))
    shuffled = recs[:]
    random.Random(3).shuffle(shuffled)
    assert list(an.bounds_rows(an.extract_concurrence_bounds(shuffled))) == ref


def test_bounds_seed_without_success():
    recs = [make_record(agent_seed=0, conc=0.4), make_record(agent_seed=0, conc=0.6),
            make_record(agent_seed=1, success=False)]
    (b,) = an.extract_concurrence_bounds(recs)
    assert b.no_success_seeds == [1]
    assert b.upper == 0.6 and b.lower == 0.4 and b.std("max_evolved") == 0.0
    with pytest.raises(NoSuccesses):
        an.require_successes(an.extract_concurrence_bounds([make_record(success=False)]))


def test_bounds_single_success_equal():
    (b,) = an.extract_concurrence_bounds([make_record(conc=0.3, conc_ansatz=0.9)])
    assert b.upper == b.lower == 0.3
    assert b.mean("max_ansatz") == b.mean("min_ansatz") == 0.9


# ---- log parsing


def test_malformed_log_reports_line(tmp_path):
    lines = [json.dumps(make_record(episode=i)) for i in range(20)]
    lines[16] = '{"episode": 16, "success": tru'
    path = tmp_path / "episodes.jsonl"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(MalformedLog) as info:
        an.load_episode_log(path)
    assert info.value.line_no == 17 and ":17:" in str(info.value)


def test_missing_key_is_malformed(tmp_path):
    rec = make_record()
    del rec["concurrence_evolved"]
    with pytest.raises(MalformedLog, match="concurrence_evolved"):
        an.load_episode_log(write_log(tmp_path / "x.jsonl", [rec]))


# ---- eta scan


def planted_points(k_true=0.32):
    """Below k_true: upper = 1 - lower (PCC -1); from k_true on: upper = 0.5 + lower (PCC +1).

    Lower bounds below the split sit far from the tight cluster above it,
    so any mixed interval stays anti-correlated.
    """
    pts = []
    for i, c in enumerate(np.linspace(0.05, k_true - 0.001, 15)):
        lower = (0.05 if i % 2 == 0 else 0.40) + 0.01 * (i % 5)
        pts.append((c, 1 - lower, lower))
    for i, c in enumerate(np.linspace(k_true, 0.6, 15)):
        lower = 0.30 + 0.001 * ((3 * i) % 7)
        pts.append((c, 0.5 + lower, lower))
    return pts


def test_eta_scan_planted_transition():
    ks = an.k_grid(0.05, 0.6, 0.005)
    assert len(ks) == 111  # floor(0.55 / 0.005) + 1 in exact arithmetic
    scan = an.eta_scan(planted_points(), ks)
    assert abs(scan.k_star - 0.32) <= 0.005
    # an interval lying wholly on one side recovers the planted sign exactly
    i = np.argmin(np.abs(ks - 0.3))
    assert scan.pcc_ik[i] == pytest.approx(-1.0, abs=1e-12)
    j = np.argmin(np.abs(ks - 0.35))
    assert scan.pcc_kj[j] == pytest.approx(1.0, abs=1e-12)


def test_eta_endpoints_are_exact():
    scan = an.eta_scan(planted_points(), an.k_grid(0.05, 0.6, 0.01))
    assert np.array_equal(scan.eta(1), scan.pcc_ik, equal_nan=True)
    assert np.array_equal(scan.eta(0), scan.pcc_kj, equal_nan=True)
    with pytest.warns(UserWarning):
        scan.eta(0.5)


def test_eta_scan_flags():
    pts = [(0.1, 0.5, 0.2), (0.2, 0.5, 0.3), (0.3, 0.5, 0.4), (0.4, 0.6, 0.1), (0.5, 0.7, 0.2), (0.6, 0.8, 0.3)]
    scan = an.eta_scan(pts, [0.15, 0.4])
    assert scan.status_ik[0] == "insufficient_data"
    assert scan.status_ik[1] == "zero_variance"
    assert scan.status_kj[1] == "ok" and scan.pcc_kj[1] == pytest.approx(1.0, abs=1e-12)
    assert 0.15 < scan.k_star < 0.4


def test_eta_rows_csv(tmp_path):
    scan = an.eta_scan(planted_points(), an.k_grid(0.05, 0.6, 0.005))
    path = an.write_csv(tmp_path / "eta_scan.csv", an.ETA_HEADER, an.eta_rows(scan))
    lines = path.read_text().splitlines()
    assert lines[0].startswith("k,") and len(lines) == 112


# ---- contribution


def test_delta_contribution_cases():
    bell = ket_to_dm(bell_state())
    assert an.delta_contribution(bell, bell) == (0.0, 0.0)
    d, dc = an.delta_contribution(bell, basis_dm("00"))
    assert d == pytest.approx(0.0, abs=1e-12) and dc == pytest.approx(1.0, abs=1e-9)


def test_delta_antisymmetric_under_swap(rng):
    swap = np.eye(4)[[0, 2, 1, 3]]
    a, b = hs_random_states(2, 2, rng)
    d, dc = an.delta_contribution(a, b)
    d2, dc2 = an.delta_contribution(swap @ a @ swap, swap @ b @ swap)
    assert d2 == pytest.approx(-d, abs=1e-12) and dc2 == pytest.approx(dc, abs=1e-9)


def test_cumulative_weight():
    pts = [(0.0, -0.2), (0.0, 0.3), (0.0, -0.1)]
    neg, pos = an.cumulative_weight(pts)
    assert neg == pytest.approx(0.3) and pos == pytest.approx(0.3)
    assert an.cumulative_weight([(0, 0.0), (1, 0.0)]) == (0.0, 0.0)


def test_contribution_points_from_records():
    recs = [make_record(input_conc=0.3, conc=0.8, s_in=(0.5, 0.5), s_out=(0.2, 0.6)),
            make_record(success=False)]
    (pt,) = an.contribution_points(recs)
    assert pt[0] == pytest.approx(-0.5) and pt[1] == pytest.approx(-0.4)


# ---- eigenvalue correlation


def test_eigen_correlation_identical_plus_one():
    recs = [make_record(s_out=(0.1, 0.2), eigs=(0.5, 0.3, 0.15, 0.05)),
            make_record(s_out=(0.1, 0.2), eigs=(0.5, 0.3, 0.15, 0.05)),
            make_record(s_out=(0.4, 0.9), eigs=(0.6, 0.2, 0.1, 0.1))]
    (res,), skipped = an.eigenvalue_correlation_study(recs)
    assert not skipped and np.isfinite(res.pcc)
    assert res.median_eigenvalues == [0.5, 0.3, 0.15, 0.05]


@pytest.mark.parametrize("sign", [1, -1])
def test_eigen_correlation_exact(sign):
    s = [0.1, 0.4, -0.3, 0.25, 0.0]
    recs = [make_record(s_out=(x, sign * x + 0.2)) for x in s]
    (res,), _ = an.eigenvalue_correlation_study(recs)
    assert abs(res.pcc - sign) <= 1e-10
    rows = list(an.eigen_rows([res]))
    assert len(rows) == 4 and rows[0][4] == ("strong correlation" if sign > 0 else "strong anti-correlation")


def test_eigen_correlation_needs_three():
    recs = [make_record(state_id="a"), make_record(state_id="a")]
    results, skipped = an.eigenvalue_correlation_study(recs)
    assert results == [] and skipped == ["a"]
    with pytest.raises(InsufficientAnsatzes):
        an.state_eigen_correlation("a", recs)


# ---- ensemble


def test_ensemble_single_row_deterministic():
    a, b = an.ensemble_study(1, 42), an.ensemble_study(1, 42)
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert a["eigenvalues"].shape == (1, 4)


def test_ensemble_product_state():
    prod = np.kron(np.diag([0.7, 0.3]), np.diag([0.6, 0.4])).astype(complex)
    rows = an.ensemble_rows(prod[None])
    assert rows["concurrence"][0] == pytest.approx(0.0, abs=1e-12)
    sym = np.kron(np.diag([0.7, 0.3]), np.diag([0.7, 0.3])).astype(complex)
    assert an.ensemble_rows(sym[None])["delta_s"][0] == pytest.approx(0.0, abs=1e-12)


def test_ensemble_rows_match_reference(rng):
    states = hs_random_states(2, 5, rng)
    rows = an.ensemble_rows(states)
    for i, rho in enumerate(states):
        assert np.allclose(rows["eigenvalues"][i], np.sort(np.linalg.eigvalsh(rho))[::-1], atol=1e-12)


def test_ensemble_chunking_is_seed_stable():
    small = an.ensemble_study(50, 3)
    assert np.array_equal(small["concurrence"], an.ensemble_study(50, 3)["concurrence"])
    assert not np.array_equal(small["concurrence"], an.ensemble_study(50, 4)["concurrence"])


def test_ensemble_aggregates_shape():
    agg = an.ensemble_aggregates(an.ensemble_study(2000, 0))
    assert len(agg["quantile_mean_abs_delta"]) == 5
    assert agg["spearman_concurrence_lambda1"] > 0
    assert 0 <= agg["fraction_above_threshold"] < 0.05


def test_ensemble_csv_round_trip(tmp_path):
    table = an.ensemble_study(20, 1)
    path = an.write_csv(tmp_path / "fig1_ensemble.csv", an.ENSEMBLE_HEADER, an.ensemble_table_rows(table))
    back = an.read_ensemble_csv(path)
    assert np.allclose(back["concurrence"], table["concurrence"], rtol=1e-9, atol=1e-12)


# ---- resources


def test_resource_stats_single_state():
    recs = [make_record(conc=0.9, one_q=4, two_q=2, depth=5, episode=0),
            make_record(conc=0.2, one_q=8, two_q=1, depth=7, episode=1),
            make_record(conc=0.9, one_q=2, two_q=1, depth=3, episode=2)]
    rows, avg = an.resource_stats(recs)
    upper = [r for r in rows if r[1] == "upper"][0]
    assert upper[3:8] == [2, 1, 3, 3, 2]  # tie on concurrence goes to fewer gates
    assert avg["lower"] == {"one_qubit_gates": 8.0, "two_qubit_gates": 1.0, "total_gates": 9.0, "depth": 7.0}


def test_resource_stats_averages():
    recs = [make_record(state_id="a", conc=0.9, one_q=4, two_q=2, depth=6),
            make_record(state_id="b", conc=0.8, one_q=2, two_q=0, depth=2)]
    _, avg = an.resource_stats(recs)
    assert avg["upper"] == {"one_qubit_gates": 3.0, "two_qubit_gates": 1.0, "total_gates": 4.0, "depth": 4.0}
    with pytest.raises(NoSuccesses):
        an.resource_stats([make_record(success=False)])


def test_csv_number_format(tmp_path):
    path = an.write_csv(tmp_path / "x.csv", ["a", "b", "c"], [[1 / 3, float("nan"), 7]])
    assert path.read_text().splitlines()[1] == "0.3333333333,nan,7"
