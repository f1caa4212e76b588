"""Acceptance suite: one test and one printed PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` or directly as ``python3 tests/test_acceptance.py``.
Most criteria drive the CLI end-to-end and parse its key=value summary (printed with --precise).
"""

import csv
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from sidar.cli import main
from sidar.lambda_opt import GridSpec, Region, dp_oracle, solve_finite
from sidar.model import ProblemInstance, random_stable_system

sys.path.insert(0, str(Path(__file__).parent))
from conftest import SYSTEMS, instance  # noqa: E402
import test_appendix  # noqa: E402


def report(label, ok, detail):
    line = f"{label} {'PASS' if ok else 'FAIL'}: {detail}"
    capman = _CAPSYS.get("c")
    if capman is not None:
        with capman.disabled():
            print("\n" + line)
    else:
        print(line)
    return ok


_CAPSYS = {}


@pytest.fixture(autouse=True)
def _grab(capsys):
    _CAPSYS["c"] = capsys
    yield
    _CAPSYS.pop("c", None)


def cli(*argv):
    """Run the CLI in-process and return (exit code, parsed summary)."""
    capsys = _CAPSYS["c"]
    capsys.readouterr()
    code = main([*argv, "--precise"])
    out = capsys.readouterr().out.strip().splitlines()
    kv = dict(item.split("=", 1) for item in out[-1].split()) if out else {}
    return code, kv


def sysfile(k):
    return str(SYSTEMS / f"system{k}.json")


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_ac1_system1_steady_state():
    t = time.perf_counter()
    _, lmi = cli("steady", "--system", sysfile(1), "--method", "lmi")
    _, scan = cli("steady", "--system", sysfile(1), "--method", "scan")
    dt = time.perf_counter() - t
    errs = [abs(float(d[k]) - 2.0) for d in (lmi, scan) for k in ("lambda_bar", "pi_bar_norm")]
    slack = float(lmi["slack"])
    ok = max(errs) <= 1e-6 and slack <= 1e-7 and dt < 1.0
    assert report("AC1", ok, f"max|lam-2|,|Pi-2| = {max(errs):.2e} (tol 1e-6), slack = {slack:.2e} (<= 1e-7), "
                  f"{dt:.2f}s (< 1s)")


def test_ac2_system2_steady_state():
    t = time.perf_counter()
    _, kv = cli("steady", "--system", sysfile(2))
    dt = time.perf_counter() - t
    lam, pi, slack = float(kv["lambda_bar"]), float(kv["pi_bar"]), float(kv["slack"])
    ok = abs(lam - 0.444) <= 1e-3 and abs(pi - 0.4) <= 1e-3 and slack > 0.04 and dt < 1.0
    assert report("AC2", ok, f"lambda_bar = {lam:.6f} (0.444 +- 1e-3), Pi_bar = {pi:.6f} (0.4 +- 1e-3), "
                  f"slack = {slack:.4f} (> 0.04), {dt:.2f}s (< 1s)")


def test_ac3_classification():
    t = time.perf_counter()
    kinds = {}
    flags = {}
    for k in range(1, 6):
        _, kv = cli("classify", "--system", sysfile(k))
        kinds[k], flags[k] = kv["kind"], kv["assumptions"]
    dt = time.perf_counter() - t
    ok = (kinds[1] == kinds[4] == "nondegenerate" and kinds[2] == kinds[5] == "degenerate"
          and "range_inclusion" in flags[3] and dt < 5.0)
    assert report("AC3", ok, f"kinds = {kinds}, system 3 assumptions = {flags[3]}, {dt:.2f}s (< 5s)")


def test_ac4_linear_region_limit_system1():
    t = time.perf_counter()
    _, kv = cli("region", "--system", sysfile(1), "--N", "200")
    dt = time.perf_counter() - t
    x_hi = float(kv["x_hi"])
    ok = abs(x_hi - 2.0) <= 1e-3 and dt < 10.0
    assert report("AC4", ok, f"|x| boundary at N=200 = {x_hi:.6f} (2 +- 1e-3), {dt:.2f}s (< 10s)")


def test_ac5_finite_closed_form_and_dp():
    t = time.perf_counter()
    _, kv = cli("finite", "--system", sysfile(1), "--N", "2", "--x0", "2")
    lam, val = float(kv["lambda_star"]), float(kv["value"])
    dp = dp_oracle(instance(1, [2.0]), 2, GridSpec())
    dt = time.perf_counter() - t
    ok = abs(lam - 1.5) <= 1e-9 and abs(val - 4.25) <= 1e-9 and abs(dp - val) <= 0.05 and dt < 30.0
    assert report("AC5", ok, f"lambda* = {lam:.12f} (1.5 +- 1e-9), V* = {val:.12f} (4.25 +- 1e-9), "
                  f"dp = {dp:.4f} (|dp-V*| <= 0.05), {dt:.2f}s (< 30s)")


def test_ac6_budget_saturation():
    rng = np.random.default_rng(6)
    worst = 0.0
    count = 0
    seed = 0
    while count < 50:
        n = int(rng.integers(1, 5))
        sys_ = random_stable_system(n, seed)
        seed += 1
        x0 = rng.normal(size=n)
        x0 *= 10.0 / np.linalg.norm(x0)
        sol = solve_finite(ProblemInstance(sys_, x0, float(rng.uniform(0.5, 2.0))), int(rng.integers(2, 15)))
        if sol.region != Region.NONLINEAR:
            continue
        worst = max(worst, abs(sol.worst_energy - 1.0))
        count += 1
    ok = worst <= 1e-6
    assert report("AC6", ok, f"max |worst_energy - 1| over {count} nonlinear solves = {worst:.2e} (<= 1e-6)")


def test_ac7_convergence_system1(tmp_path):
    t = time.perf_counter()
    N_list = ",".join(str(N) for N in range(2, 101))
    parts = []
    ok = True
    for x0 in ("0", "2"):
        out = tmp_path / x0
        out.mkdir()
        _, kv = cli("sweep", "--system", sysfile(1), "--x0", x0, "--N-list", N_list, "--out", str(out))
        _, fin = cli("finite", "--system", sysfile(1), "--x0", x0, "--N", "100")
        lam = float(fin["lambda_star"])
        pi = float(fin["pi0_norm"])
        mono = kv["nondecreasing"] == "true"
        ok &= abs(lam - 2.0) <= 1e-4 and abs(pi - 2.0) <= 1e-4 and mono
        parts.append(f"x0={x0}: |lam*(100)-2| = {abs(lam - 2):.2e}, |Pi0-2| = {abs(pi - 2):.2e}, "
                     f"nondecreasing = {mono}")
    dt = time.perf_counter() - t
    ok &= dt < 30.0
    assert report("AC7", ok, "; ".join(parts) + f" (tol 1e-4), {dt:.2f}s (< 30s)")


def test_ac8_degenerate_convergence_system2():
    t = time.perf_counter()
    _, kv = cli("finite", "--system", sysfile(2), "--x0", "2", "--N", "250")
    dt = time.perf_counter() - t
    lam = float(kv["lambda_star"])
    ok = abs(lam - 0.444) <= 1e-2 and dt < 60.0
    assert report("AC8", ok, f"lambda*(250) = {lam:.6f} (0.444 +- 1e-2), {dt:.2f}s (< 60s)")


def test_ac9_turnpike_system2():
    t = time.perf_counter()
    _, k250 = cli("turnpike", "--system", sysfile(2), "--x0", "0", "--N", "250", "--eps", "1e-6")
    _, k100 = cli("turnpike", "--system", sysfile(2), "--x0", "0", "--N", "100", "--eps", "1e-6")
    dt = time.perf_counter() - t
    g = float(k250["g_eigmin"])
    frac = float(k250["plateau_fraction"])
    l100, l250 = int(k100["plateau_length"]), int(k250["plateau_length"])
    ok = g > 0 and frac >= 0.6 and l250 > l100 and dt < 60.0
    assert report("AC9", ok, f"eigmin g = {g:.3e} (> 0), plateau_fraction = {frac:.3f} (>= 0.6), "
                  f"plateau length {l100} -> {l250} (strictly grows), {dt:.2f}s (< 60s)")


def test_ac10_appendix_suites():
    t = time.perf_counter()
    failures = []
    for name in ("test_two_forms_of_the_step_agree", "test_lmi_equivalent_to_riccati_inequality",
                 "test_strict_lmi_equivalent_to_strict_riccati_inequality", "test_schur_complement_strict",
                 "test_schur_complement_semidefinite"):
        try:
            getattr(test_appendix, name)()
        except AssertionError as exc:
            failures.append(f"{name}: {exc}")
    dt = time.perf_counter() - t
    ok = not failures and dt < 60.0
    assert report("AC10", ok, f"1000 two-form draws, 2x500 LMI/Riccati, 2x500 Schur draws; "
                  f"failures = {failures or 'none'}, {dt:.2f}s (< 60s)")


def test_ac11_lmi_bounds():
    worst_q = 0.0
    worst_f = -np.inf
    for k in range(1, 6):
        for x0 in (None, "2"):
            argv = ["steady", "--system", sysfile(k)]
            if x0 is not None:
                argv += ["--x0", ",".join([x0] * (2 if k in (4, 5) else 1))]
            code, kv = cli(*argv)
            if code != 0:
                continue
            worst_q = max(worst_q, float(kv["qpq_max"]) - 1.0)
            worst_f = max(worst_f, float(kv["f_norm"]) - float(kv["f_bound"]))
    ok = worst_q <= 1e-8 and worst_f <= 1e-8
    assert report("AC11", ok, f"max eigmax(Q^.5 P Q^.5) - 1 = {worst_q:.2e}, max ||F|| - bound = {worst_f:.2e} "
                  f"(both <= 1e-8)")


def test_ac12_hinf_recovery():
    errs = {}
    for k in (1, 4):
        _, h = cli("hinf", "--system", sysfile(k))
        _, s = cli("steady", "--system", sysfile(k))
        errs[k] = abs(float(h["gamma2"]) - float(s["lambda_bar"]))
    ok = max(errs.values()) <= 1e-4
    assert report("AC12", ok, f"|gamma^2 - lambda_bar| = {errs} (<= 1e-4)")


def test_ac13_complexity(tmp_path):
    t = time.perf_counter()
    code, kv = cli("bench", "--dims", "4,8,16,32,48", "--samples", "4", "--seed", "0",
                   "--time-budget", "600", "--out", str(tmp_path))
    dt = time.perf_counter() - t
    slope = None if kv.get("slope", "none") == "none" else float(kv["slope"])
    complete = kv.get("complete") == "true"
    medians = {k: v for k, v in kv.items() if k.startswith("median_")}
    ok = code == 0 and complete and slope is not None and 2.3 <= slope <= 3.7 and dt < 600.0
    assert report("AC13", ok, f"slope = {slope} (in [2.3, 3.7]), complete = {complete}, medians = {medians}, "
                  f"{dt:.1f}s (< 600s)")


DETERMINISM_RUNS = [
    ("regions", ["figure", "--kind", "regions", "--system", sysfile(1), "--N-list", "2,5,10,50"]),
    ("regions2d", ["figure", "--kind", "regions2d", "--system", sysfile(4), "--N-list", "3,4,10,25"]),
    ("recursion", ["figure", "--kind", "recursion", "--system", sysfile(1), "--N-list", "50,100"]),
    ("lambda_sweep", ["figure", "--kind", "lambda_sweep", "--system", sysfile(2), "--x0", "2",
                      "--N-list", "2,10,50"]),
    ("turnpike", ["turnpike", "--system", sysfile(2), "--N", "60"]),
    ("simulate", ["simulate", "--system", sysfile(4), "--x0", "1,1", "--T", "8", "--policy", "random",
                  "--seed", "3"]),
]


def test_ac14_determinism(tmp_path):
    mismatched = []
    files = 0
    for name, argv in DETERMINISM_RUNS:
        blobs = []
        for rep in range(2):
            out = tmp_path / f"{name}{rep}"
            out.mkdir()
            code, _ = cli(*argv, "--out", str(out))
            assert code == 0, name
            blobs.append({p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))})
        files += len(blobs[0])
        if not blobs[0] or blobs[0] != blobs[1]:
            mismatched.append(name)
        for p in (tmp_path / f"{name}0").glob("*.csv"):
            read_csv(p)
    ok = not mismatched
    assert report("AC14", ok, f"{files} CSVs regenerated twice, mismatches = {mismatched or 'none'} "
                  f"(byte-identical required)")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", *sys.argv[1:]]))
