"""Exit criteria of the package.

Each test prints one ``CRITERION n: PASS|FAIL`` line with the measured
numbers and runtime, then asserts the same condition.
"""

import json
import time

import numpy as np
import pytest

from dfpmetro.cli import main
from dfpmetro.fisher import (
    ProbabilityVector,
    effective_fisher,
    fisher_from_dfp,
    fisher_from_probabilities,
    massar_ratio,
)
from dfpmetro.probe_search import optimize_single
from dfpmetro.qubit import ChannelParams, PureQubit, coefficient_derivatives, decompose, density_of, evolve, qfi_matrix
from dfpmetro.tomo import (
    ideal_povm,
    random_povm,
    random_projective_mixture,
    reconstruct_povm,
    synth_dfp,
    waveplate_povm,
)
from dfpmetro.wfh import (
    GaussianWigner,
    WfhDetector,
    dfp_table,
    outcome_fisher_table,
    probabilities_wigner,
    squeeze_tradeoff_scan,
    total_fisher,
    zeta,
)
from oracles import SX, SZ, born, channel, click_oracle, gauss_quadrature_2d, ket_from_bloch

pytestmark = pytest.mark.acceptance

GRID = (-0.3, 0.0, 0.1, 0.3)
Y_PROBE = PureQubit([0, 1, 0])
DOMINANT_OUTCOMES = [(1, 1), (1, 0), (0, 1), (2, 1), (3, 1), (4, 1)]


def report(n, ok, detail, elapsed, limit=None):
    within = limit is None or elapsed < limit
    budget = f" (limit {limit:g} s)" if limit else ""
    print(f"\nCRITERION {n}: {'PASS' if ok and within else 'FAIL'} {detail}; runtime {elapsed:.2f} s{budget}")
    assert ok, detail
    assert within, f"runtime {elapsed:.1f} s exceeds {limit} s"


def dfp_fisher(table, probe, params, names=("phi", "chi")):
    coeffs = decompose(density_of(evolve(probe, params)))
    d_phi, d_chi = coefficient_derivatives(probe, params)
    dc = {"phi": d_phi, "chi": d_chi}
    return np.asarray(fisher_from_dfp(coeffs, [dc[n] for n in names], table, labels=names))


def born_exact(elements, probe, params):
    """Born probabilities and exact spinor derivatives, no Bloch algebra involved."""
    psi0 = ket_from_bloch(probe.bloch)
    gz, gx = -0.5j * SZ, -0.5j * SX
    u = channel(params.phi, 0.0, "VU")
    v = channel(0.0, params.chi, "VU")
    if params.order.value == "VU":
        psi = v @ u @ psi0
        d = [v @ u @ gz @ psi0, v @ gx @ u @ psi0]
    else:
        psi = u @ v @ psi0
        d = [gz @ u @ v @ psi0, u @ v @ gx @ psi0]
    p = born(elements, psi)
    dp = np.array([[2 * np.vdot(psi, e @ di).real for e in elements] for di in d])
    return ProbabilityVector(p, dp)


def test_criterion_1_closed_forms():
    t0 = time.perf_counter()
    table = synth_dfp(ideal_povm("zx"))
    qfi_err = eff_err = 0.0
    for phi in GRID:
        for chi in GRID:
            vu, uv = ChannelParams(phi, chi, "VU"), ChannelParams(phi, chi, "UV")
            qfi_err = max(qfi_err, np.max(np.abs(np.asarray(qfi_matrix(Y_PROBE, vu)) - np.diag([1, np.cos(phi) ** 2]))))
            qfi_err = max(qfi_err, np.max(np.abs(np.asarray(qfi_matrix(Y_PROBE, uv)) - np.diag([np.cos(chi) ** 2, 1]))))
            other = np.cos(phi) ** 2 * np.cos(chi) ** 2 / (2 - 2 * np.cos(2 * phi) * np.sin(chi) ** 2)
            eff = effective_fisher(dfp_fisher(table, Y_PROBE, vu))
            eff_err = max(eff_err, np.max(np.abs(eff - [0.5, other])))
    origin = ChannelParams(0, 0)
    ratio = massar_ratio(dfp_fisher(table, Y_PROBE, origin), qfi_matrix(Y_PROBE, origin))
    ok = qfi_err <= 1e-9 and eff_err <= 1e-9 and abs(ratio - 1) <= 1e-9
    report(1, ok, f"QFI err {qfi_err:.1e}, F' err {eff_err:.1e}, Massar ratio {ratio:.12f}", time.perf_counter() - t0, 1)


def test_criterion_2_dfp_route_equals_born_route():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20)
    worst = 0.0
    for i in range(100):
        povm = random_povm(2 + i % 3, rng)
        r = rng.normal(size=3)
        probe = PureQubit(r / np.linalg.norm(r))
        params = ChannelParams(*rng.uniform(-1, 1, 2), ("VU", "UV")[i % 2])
        f_dfp = dfp_fisher(synth_dfp(povm), probe, params)
        f_born = np.asarray(fisher_from_probabilities(born_exact(povm.elements, probe, params)))
        worst = max(worst, np.max(np.abs(f_dfp - f_born)))
    report(2, worst <= 1e-10, f"max elementwise difference {worst:.2e} over 100 POVMs", time.perf_counter() - t0, 5)


def test_criterion_3_massar_bound():
    t0 = time.perf_counter()
    rng = np.random.default_rng(30)
    params = ChannelParams(0, 0)
    worst = 0.0
    for i in range(1000):
        povm = random_povm(2 + i % 3, rng) if i % 2 else random_projective_mixture(1 + i % 3, rng)
        # probes with r_x r_z = 0 keep the QFI diagonal at the origin
        a = rng.uniform(0, 2 * np.pi)
        r = [np.cos(a), np.sin(a), 0.0] if i % 4 < 2 else [0.0, np.cos(a), np.sin(a)]
        probe = PureQubit(r)
        worst = max(worst, massar_ratio(dfp_fisher(synth_dfp(povm), probe, params), qfi_matrix(probe, params)))
    zx = massar_ratio(dfp_fisher(synth_dfp(ideal_povm("zx")), Y_PROBE, params), qfi_matrix(Y_PROBE, params))
    ok = worst <= 1 + 1e-9 and zx >= 1 - 1e-9
    report(3, ok, f"max ratio {worst:.12f} over 1000 draws, Z/X mix {zx:.12f}", time.perf_counter() - t0, 10)


def test_criterion_4_waveplate_curve():
    t0 = time.perf_counter()
    thetas = np.round(np.arange(0, 90.0001, 2.5), 12)
    reports = [optimize_single(synth_dfp(waveplate_povm(np.deg2rad(t)))) for t in thetas]
    values = np.array([r.value for r in reports])
    k = int(np.argmax(values))
    h = np.asarray(qfi_matrix(reports[k].probe, ChannelParams(0, 0)))[0, 0]
    ratio = values[k] / h
    curve_err = np.max(np.abs(values - np.sin(np.deg2rad(4 * thetas)) ** 2))
    ok = abs(values[k] - 1) <= 1e-4 and abs(ratio - 1) <= 1e-4
    detail = f"max F {values[k]:.10f} at theta {thetas[k]} deg, F/H {ratio:.10f}, |F - sin^2 4theta| <= {curve_err:.1e}"
    report(4, ok, detail, time.perf_counter() - t0, 30)


def test_criterion_5_wfh_binomial_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(50)
    norm_err = oracle_err = 0.0
    for n in (1, 2, 4, 8):
        for _ in range(20):
            alpha, gamma = 3 * np.sqrt(rng.uniform(size=2)) * np.exp(2j * np.pi * rng.uniform(size=2))
            q = dfp_table(WfhDetector(gamma, n), alpha)
            norm_err = max(norm_err, abs(q.sum() - 1))
            oracle_err = max(oracle_err, np.max(np.abs(q - click_oracle(n, alpha, gamma))))
    ok = norm_err <= 1e-10 and oracle_err <= 1e-12
    report(5, ok, f"normalisation err {norm_err:.1e}, oracle err {oracle_err:.1e}", time.perf_counter() - t0, 5)


def test_criterion_6_coherent_consistency():
    t0 = time.perf_counter()
    det = WfhDetector(1.0, 4)
    closed = quad = 0.0
    for a0 in (0.0, 0.5, 1 + 0.3j):
        w = GaussianWigner.coherent(a0)
        q = dfp_table(det, a0)
        closed = max(closed, np.max(np.abs(probabilities_wigner(det, w) - q)))

        def fn(z, w=w):
            return np.stack([w(z) * zeta(det, x, z) for x in det.outcomes()], axis=-1)

        value, _ = gauss_quadrature_2d(fn, w.mean, abs(w.mean) + 6 * w.std_max)
        quad = max(quad, np.max(np.abs(value.reshape(5, 5) - q)))
    ok = closed <= 1e-8 and quad <= 1e-6
    report(6, ok, f"closed-form err {closed:.1e}, quadrature err {quad:.1e}", time.perf_counter() - t0, 60)


def test_criterion_7_peak_and_dominant_outcomes():
    t0 = time.perf_counter()
    det = WfhDetector(1.0, 4)
    alphas = np.round(np.arange(0, 2.0001, 0.02), 12)
    totals = np.array([total_fisher(det, a, 0.1) for a in alphas])
    peak = alphas[int(np.argmax(totals))]
    f = outcome_fisher_table(det, 1.0, 0.1)
    share = sum(f[x] for x in DOMINANT_OUTCOMES) / f.sum()
    ok = abs(peak - 1) <= 0.02 + 1e-12 and share > 0.5
    detail = f"total FI peaks at alpha {peak} (F = {totals.max():.5f}); six listed outcomes carry {share:.1%} at alpha 1"
    report(7, ok, detail, time.perf_counter() - t0, 60)


def test_criterion_8_squeezing_monotone():
    t0 = time.perf_counter()
    det = WfhDetector(1.0, 4)
    alphas = np.round(np.arange(0.2, 1.6001, 0.02), 12)
    sc = squeeze_tradeoff_scan(det, 1.0, [1.0, 0.95, 0.9], phi=0.1, alphas=alphas)
    mono = (sc.fisher[:, 0] > sc.fisher[:, 1]) & (sc.fisher[:, 1] > sc.fisher[:, 2])
    residual = float(np.max(np.abs(sc.residual)))
    bad = alphas[~mono]
    ok = bool(np.all(mono)) and residual <= 1e-10
    detail = (
        f"monotone at {mono.sum()}/{mono.size} alphas (holds on {alphas[mono].min() if mono.any() else '-'}"
        f"..{alphas[mono].max() if mono.any() else '-'}; first violation at {bad[0] if bad.size else '-'}); "
        f"photon residual {residual:.1e}"
    )
    report(8, ok, detail, time.perf_counter() - t0, 120)


def _notes(path):
    out = {}
    for line in path.read_text().splitlines():
        if line.startswith("# ") and not line.startswith("# config:"):
            key, value = line[2:].split(":", 1)
            out[key] = json.loads(value)
    return out


def test_criterion_9_tomography_round_trip(tmp_path):
    t0 = time.perf_counter()
    rng = np.random.default_rng(90)
    worst = 0.0
    for i in range(50):
        truth = random_povm(2 + i % 3, rng)
        worst = max(worst, np.max(np.abs(reconstruct_povm(synth_dfp(truth)).elements - truth.elements)))
    out = tmp_path / "tomo.csv"
    rc = main(["tomo-compare", "--povm", "zx", "--noise", "1e-3", "--seed", "7", "--phi", "0:0.5:0.05", "-o", str(out)])
    rel = _notes(out)["max_rel_diff_diagonal"] if rc == 0 else np.inf
    ok = worst <= 1e-6 and rel <= 0.05
    detail = f"noiseless reconstruction err {worst:.1e}; noisy FI max relative diff {rel:.2%} (diagonal entries)"
    report(9, ok, detail, time.perf_counter() - t0, 60)


def test_criterion_10_determinism(tmp_path):
    t0 = time.perf_counter()
    runs = [
        ["fisher-scan", "--model", "waveplate", "--noise", "2e-3", "--seed", "11", "--theta", "0:45:15", "--grid-step", "4"],
        ["optimize-probe", "--model", "bs", "--t-h", "0.55", "--t-v", "0.45", "--params", "phi,chi", "--noise", "1e-3", "--seed", "2", "--grid-step", "6"],
        ["tomo-compare", "--povm", "random", "--n-outcomes", "3", "--noise", "1e-3", "--seed", "5"],
        ["wfh-scan", "--alpha", "0:2:0.5", "--squeeze", "0.8"],
        ["wfh-squeeze", "--alpha", "0.5:1.5:0.5"],
    ]
    identical = []
    for k, args in enumerate(runs):
        blobs = []
        for rep in range(2):
            out = tmp_path / f"r{k}_{rep}.json"
            assert main(args + ["-o", str(out)]) == 0
            blobs.append(out.read_bytes())
        identical.append(blobs[0] == blobs[1])
    report(10, all(identical), f"{sum(identical)}/{len(runs)} commands byte-identical on rerun", time.perf_counter() - t0)
