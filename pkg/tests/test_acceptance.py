"""Acceptance criteria 1-7, each at its stated tolerance and runtime.

Every test records one PASS/FAIL line, printed in the terminal summary.
Run alone with ``pytest tests/test_acceptance.py -v`` or
``python3 tests/test_acceptance.py``.
"""

import math
import sys
import time

import numpy as np
import pytest

import oracles
from mnac import capacity as cap
from mnac import cli, detector as det
from mnac import exponent as ex
from mnac import harness, report


# ------------------------------------------------------------------ 1

def test_criterion_1_capacity_values(criterion):
    t0 = time.perf_counter()
    a = cap.symmetric_capacity(cap.SystemParams(100, 10_000, 0.0025, 2.0))
    b_params = cap.SystemParams(1000, 10**9, 2.5e-7, 2.0)
    b = cap.symmetric_capacity(b_params)
    elapsed = time.perf_counter() - t0
    ok = abs(a.capacity - 0.87343) <= 1e-4 and b.theta > 1 and b.capacity == 0.0 and elapsed < 1.0
    criterion("1 capacity values", ok,
              f"C={a.capacity:.7f} (target 0.87343 +/- 1e-4), theta={b.theta:.6f}, C={b.capacity}, {elapsed:.3f}s")
    assert abs(a.capacity - float(oracles.capacity(100, 10_000, 0.0025, 2))) < 1e-12
    assert ok


# ------------------------------------------------------------------ 2

def test_criterion_2_fig1(criterion, tmp_path):
    t0 = time.perf_counter()
    paths = harness.run_fig1(tmp_path)
    elapsed = time.perf_counter() - t0
    _, rows = report.read(paths["csv"])
    curves = {}
    for r in rows:
        curves.setdefault(r["law"], []).append((r["n"], r["capacity_nats"]))
    ns = [n for n, _ in curves["n"]]
    c = {law: np.array([v for _, v in pts]) for law, pts in curves.items()}
    cube_zero = bool(np.all(c["n^3"] == 0.0))
    ordered = bool(np.all(c["n"] > c["n^1.5"]) and np.all(c["n^1.5"] > c["n^2"]))
    span = ns[0] == 100 and ns[-1] == 10_000
    # nonlinear growth: C(n)/n is not constant and the linear-law curve rises
    ratio = c["n"] / np.array(ns)
    nonlinear = bool(np.all(np.diff(c["n"]) > 0) and ratio.max() / ratio.min() > 1.5)
    svg = paths["svg"].exists() and paths["svg"].stat().st_size > 0
    ok = cube_zero and ordered and span and nonlinear and svg and elapsed < 5.0
    criterion("2 fig1 reconstruction", ok,
              f"n^3 identically 0: {cube_zero}, n > n^1.5 > n^2 pointwise: {ordered}, "
              f"nonlinear: {nonlinear}, {elapsed:.2f}s")
    assert ok


# ------------------------------------------------------------------ 3

def test_criterion_3_e0_properties(criterion):
    t0 = time.perf_counter()
    g, kp = np.meshgrid(np.linspace(0.1, 1.0, 10), np.geomspace(0.1, 1000.0, 10))
    rep = ex.certify_e0_properties(kp.ravel(), g.ravel())
    spot = ex.certify_e0_properties([50.0], [1.0])
    elapsed = time.perf_counter() - t0
    d = float(spot.derivative[0])
    spot_ok = abs(d - 0.5 * math.log(51)) <= 1e-6 and abs(d - 1.96592) <= 1e-5
    ok = rep.violations == 0 and rep.kp.size == 100 and float(rep.p3_error.max()) <= 1e-6 and spot_ok \
        and elapsed < 5.0
    criterion("3 E0 properties", ok,
              f"violations={rep.violations} on {rep.kp.size} points, max |FD - slope|={rep.p3_error.max():.2e}, "
              f"spot FD={d:.9f} (0.5 ln 51={0.5 * math.log(51):.9f}), {elapsed:.2f}s")
    assert ok


# ------------------------------------------------------------------ 4

@pytest.fixture(scope="module")
def er_run():
    t0 = time.perf_counter()
    v = ex.achievable_message_length(200, 50, 1.9, 0.2)
    res = ex.error_exponent_er(ex.ExponentParams(200, 50, 1.9, v))
    grid, _ = oracles.grid_er(200, 50, 1.9, v)
    return res, grid, time.perf_counter() - t0


def test_criterion_4_er_matches_grid_oracle(criterion, er_run):
    res, grid, elapsed = er_run
    ok = abs(res.er - grid) <= 1e-6 and elapsed < 30.0
    criterion("4b Er ternary search vs dense grid", ok,
              f"|Er - grid|={abs(res.er - grid):.2e} (tol 1e-6), {elapsed:.2f}s")
    assert ok


def test_criterion_4_er_positive(criterion, er_run):
    res, _, _ = er_run
    ok = res.er > 0
    criterion("4a Er > 0 at n=200, k=50, P'=1.9, eps=0.2", ok,
              f"Er={res.er:.7f} at gamma={res.argmin_gamma}")
    assert ok


# ------------------------------------------------------------------ 5

def test_criterion_5_solver_oracles(criterion):
    t0 = time.perf_counter()
    gen = np.random.default_rng(20140501)
    det_mismatch = dec_mismatch = greedy_beats = iter_beats = 0
    for _ in range(200):
        ell = int(gen.integers(2, 13))
        n0 = int(gen.integers(1, 17))
        k = float(gen.uniform(1.0, min(4.0, ell)))
        sig = gen.standard_normal((ell, n0)) * math.sqrt(float(gen.uniform(0.5, 10.0)))
        act = gen.random(ell) < k / ell
        y = sig[act].sum(axis=0) + gen.standard_normal(n0)
        ex_res = det.detect_activity_exhaustive(y, sig, k)
        ref, ref_obj = oracles.brute_force_support(y, sig, ex_res.budget)
        det_mismatch += ex_res.support_hat != ref or abs(ex_res.objective - ref_obj) > 1e-9 * (1 + ref_obj)
        greedy_beats += det.detect_activity_greedy(y, sig, k).objective < ex_res.objective - 1e-9 * (1 + ref_obj)

        s = int(gen.integers(1, 5))
        m = int(gen.integers(1, int(math.floor(10_000 ** (1 / s) + 1e-9)) + 1))
        n_b = int(gen.integers(1, 17))
        users = s + int(gen.integers(0, 4))
        parts = gen.standard_normal((users, n_b, m)) * math.sqrt(float(gen.uniform(0.5, 10.0)))
        support = tuple(sorted(gen.choice(users, size=s, replace=False).tolist()))
        truth = gen.integers(0, m, size=s)
        yb = sum(parts[u, :, w] for u, w in zip(support, truth)) + gen.standard_normal(n_b)
        dx = det.decode_messages_exhaustive(yb, parts, support)
        ref_w, ref_obj = oracles.brute_force_messages(yb, parts, support)
        dec_mismatch += dx.messages_hat != ref_w or abs(dx.objective - ref_obj) > 1e-9 * (1 + ref_obj)
        iter_beats += det.decode_messages_iterative(yb, parts, support).objective < dx.objective - 1e-9 * (1 + ref_obj)
    elapsed = time.perf_counter() - t0
    ok = det_mismatch == dec_mismatch == greedy_beats == iter_beats == 0 and elapsed < 120.0
    criterion("5 solver oracle equivalence", ok,
              f"200 detection + 200 decoding instances: mismatches {det_mismatch}/{dec_mismatch}, "
              f"heuristic beats exhaustive {greedy_beats}/{iter_beats}, {elapsed:.1f}s")
    assert ok


# ------------------------------------------------------------------ 6

@pytest.fixture(scope="module")
def validation(tmp_path_factory):
    cfg = harness.parse_config("small", {"trials": 2000})
    t0 = time.perf_counter()
    rep = harness.run_scheme_validation(cfg, tmp_path_factory.mktemp("validate"))
    return rep, time.perf_counter() - t0


def _rates(rows):
    return ", ".join(f"{x}:{e.p_hat:.4f}+/-{e.half_width:.4f}" for x, e in rows)


def test_criterion_6a_detection_vs_n0(criterion, validation):
    rep, _ = validation
    xs = [x for x, _ in rep.detection]
    ok = xs == [8, 16, 32, 64] and rep.verdicts["detection_non_increasing_in_n0"] \
        and all(e.trials == 2000 for _, e in rep.detection)
    criterion("6a detection error non-increasing in n0", ok, _rates(rep.detection))
    assert ok


def test_criterion_6b_genie_vs_n(criterion, validation):
    rep, _ = validation
    ok = [x for x, _ in rep.genie] == [16, 32, 64] and rep.verdicts["genie_strictly_decreasing_in_n"]
    detail = _rates(rep.genie) + " (decode-only " + ", ".join(
        f"{e.decode_error_rate:.4f}" for _, e in rep.genie) + ")"
    criterion("6b genie-aided ML error strictly decreasing in n", ok, detail)
    assert ok


def test_criterion_6c_end_to_end_doubling(criterion, validation):
    rep, elapsed = validation
    ok = rep.verdicts["end_to_end_decreases_when_n_doubles"]
    criterion("6c end-to-end error decreases when n doubles", ok, _rates(rep.end_to_end))
    assert ok


def test_criterion_6_runtime(criterion, validation):
    _, elapsed = validation
    ok = elapsed < 300.0
    criterion("6 runtime", ok, f"{elapsed:.1f}s (limit 300s)")
    assert ok


# ------------------------------------------------------------------ 7

COMMANDS = [
    ["sweep", "--n-min", "100", "--n-max", "10000", "--points", "21"],
    ["exponent", "--n", "200", "--k", "50", "--power", "2", "--epsilon", "0.2"],
    ["capacity", "--n", "100", "--ell", "10000", "--alpha", "0.0025", "--power", "2"],
    ["simulate", "--config", "tiny", "--trials", "40", "--seed", "77"],
]


def _bodies(tmp, tag, capsys):
    out = {}
    for i, argv in enumerate(COMMANDS):
        assert cli.main(argv) == 0
        out[i] = report.body(capsys.readouterr().out)
    d = tmp / tag
    assert cli.main(["fig1", "--out", str(d / "fig1")]) == 0
    assert cli.main(["validate", "--config", "tiny", "--trials", "25", "--seed", "5", "--out", str(d / "val")]) in (0, 1)
    capsys.readouterr()  # drop the printed file paths
    assert cli.main(["simulate", "--config", "tiny", "--trials", "40", "--seed", "77", "--workers", "2"]) == 0
    out["parallel"] = report.body(capsys.readouterr().out)
    for p in sorted(d.rglob("*.csv")):
        out[p.relative_to(d).as_posix()] = report.body(p.read_text())
    out["svg"] = (d / "fig1" / "fig1.svg").read_bytes()
    return out


def test_criterion_7_determinism(criterion, tmp_path, capsys):
    t0 = time.perf_counter()
    first = _bodies(tmp_path, "a", capsys)
    second = _bodies(tmp_path, "b", capsys)
    elapsed = time.perf_counter() - t0
    same = [k for k in first if first[k] == second[k]]
    serial_eq_parallel = first["parallel"] == first[3]
    ok = len(same) == len(first) and serial_eq_parallel
    criterion("7 determinism", ok,
              f"{len(same)}/{len(first)} outputs byte-identical, serial == 2 workers: {serial_eq_parallel}, "
              f"{elapsed:.1f}s")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
