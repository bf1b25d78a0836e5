from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from sklearn.base import clone

from dfpmetro import DfpError, InfeasibleProbeError
from dfpmetro.fisher import DfpTable, positivity_filter
from dfpmetro.probe_search import (
    DfpObjective,
    ProbeOptimizer,
    ProbeParam,
    evaluate_probe,
    optimize_single,
    optimize_two_parameter,
    search_sphere,
    sphere_grid,
)
from dfpmetro.qubit import ChannelParams, PureQubit, bloch_from_angles, coefficients
from dfpmetro.tomo import beamsplitter_povm, ideal_povm, synth_dfp, waveplate_povm


def fine_grid_best(objective, step=0.25):
    polar, azimuth = sphere_grid(step)
    pp, aa = np.meshgrid(polar, azimuth, indexing="ij")
    b = bloch_from_angles(pp, aa).reshape(-1, 3)
    ev = objective(b)
    return float(np.max(np.where(ev.valid, ev.value, -np.inf)))


def test_probe_param_wraps_angles():
    p = ProbeParam(-0.3, 7.0)
    assert 0 <= p.polar <= np.pi and 0 <= p.azimuth < 2 * np.pi
    np.testing.assert_allclose(p.bloch, bloch_from_angles(-0.3, 7.0), atol=1e-15)
    assert abs(np.linalg.norm(p.state().bloch) - 1) < 1e-12


@pytest.mark.parametrize("kind", ["da", "rl"])
def test_projective_equatorial_optimum(kind):
    rep = optimize_single(synth_dfp(ideal_povm(kind)), grid_step_deg=1.0)
    assert rep.value == pytest.approx(1.0, abs=1e-4)
    assert abs(rep.probe.bloch[2]) < 1e-3
    assert rep.rejected == 0
    assert not rep.non_identifiable


def test_hv_is_not_identifiable():
    rep = optimize_single(synth_dfp(ideal_povm("hv")))
    assert rep.value == 0.0
    assert rep.non_identifiable


def test_waveplate_tracks_sin_squared():
    for theta in (5.0, 10.0, 17.5, 30.0):
        rep = optimize_single(synth_dfp(waveplate_povm(np.deg2rad(theta))))
        assert rep.value == pytest.approx(np.sin(np.deg2rad(4 * theta)) ** 2, abs=1e-6)


def _spurious_table():
    q = synth_dfp(ideal_povm("da")).q.copy()
    q[2] = [1 + 5e-3, -5e-3]  # the D row leaks a negative reading
    return DfpTable(q, outcomes=("D", "A"))


@pytest.mark.parametrize("eps", [0.0, 1e-3, 1e-2])
def test_spurious_maximum_is_filtered(eps):
    table = _spurious_table()
    objective = DfpObjective(table, ChannelParams())
    rep = optimize_single(table, eps=eps)
    assert rep.rejected > 0
    coeffs = coefficients(rep.probe.bloch)
    assert positivity_filter(coeffs, table, eps)
    # exhaustive fine grid over feasible probes never beats the reported optimum
    assert rep.value >= fine_grid_best(DfpObjective(table, ChannelParams(), eps=eps)) - 1e-9
    if eps > 0:
        # probes rejected at this eps carry larger (spurious) values than the reported optimum
        polar, azimuth = sphere_grid(0.5)
        pp, aa = np.meshgrid(polar, azimuth, indexing="ij")
        b = bloch_from_angles(pp, aa).reshape(-1, 3)
        loose = objective(b)
        strict = DfpObjective(table, ChannelParams(), eps=eps)(b)
        assert loose.value[loose.valid & ~strict.feasible].max() > rep.value


def test_no_feasible_probe():
    q = np.tile([1.5, -0.5], (6, 1))
    with pytest.raises(InfeasibleProbeError):
        optimize_single(DfpTable(q, outcomes=("a", "b")))


def test_refinement_is_monotone():
    table = synth_dfp(waveplate_povm(np.deg2rad(11.0)), noise_sigma=2e-3, seed=3)
    objective = DfpObjective(table, ChannelParams(0.05))
    _, value, info = search_sphere(objective, 6.0, n_starts=3)
    grid = info["grid_eval"]
    assert value >= np.max(np.where(grid.valid, grid.value, -np.inf))
    _, raw, _ = search_sphere(objective, 6.0, n_starts=3, refine=False)
    assert value >= raw


def test_scalarization_scale_invariance():
    table = synth_dfp(beamsplitter_povm(0.6, 0.4))
    params = ChannelParams(0.2, 0.1)
    b1, v1, _ = search_sphere(DfpObjective(table, params, ("phi", "chi")), 4.0)
    b2, v2, _ = search_sphere(DfpObjective(table, params, ("phi", "chi"), scale=3.7), 4.0)
    np.testing.assert_allclose(b1, b2, atol=1e-6)
    assert v2 == pytest.approx(3.7 * v1, rel=1e-9)


def test_two_parameter_zx_origin():
    table = synth_dfp(ideal_povm("zx"))
    f, eff = evaluate_probe(table, PureQubit([0, 1, 0]), ChannelParams(0, 0))
    assert eff == pytest.approx([0.5, 0.5], abs=1e-12)
    assert f["chi", "phi"] == pytest.approx(0.0, abs=1e-12)
    rep = optimize_two_parameter(table, 0.0, 0.0)
    assert rep.effective == pytest.approx([0.5, 0.5], abs=1e-6)
    assert abs(abs(rep.probe.bloch[1]) - 1) < 1e-6
    assert set(rep.scan) >= {"Fp_phiphi", "Fp_chichi", "F_chiphi", "feasible"}
    assert rep.scan["polar"].size == 91 * 180


def test_two_parameter_uneven_split():
    # oracle values from explicit matrices, expm unitaries and finite differences
    table = synth_dfp(beamsplitter_povm(0.55, 0.45))
    f, eff = evaluate_probe(table, PureQubit([0, 1, 0]), ChannelParams(0, 0))
    assert eff == pytest.approx([0.495, 0.505], abs=1e-9)
    f, eff = evaluate_probe(table, PureQubit([0, 1, 0]), ChannelParams(0.2, 0.1))
    assert np.asarray(f) == pytest.approx(
        np.array([[0.499882253, 2.12951679e-4], [2.12951679e-4, 0.480378348]]), abs=1e-8
    )
    assert eff == pytest.approx([0.49988216, 0.48037826], abs=1e-7)
    assert eff[0] != pytest.approx(eff[1], abs=1e-3)


def test_duplicated_outcome_is_singular():
    da = synth_dfp(ideal_povm("da")).q
    table = DfpTable(np.column_stack([da[:, 0] / 2, da[:, 0] / 2, da[:, 1]]), outcomes=("D1", "D2", "A"))
    rep = optimize_two_parameter(table, 0.0, 0.0, grid_step_deg=6.0)
    assert rep.singular
    assert np.isnan(rep.value)
    assert np.all(rep.scan["singular"] | ~rep.scan["feasible"] | (rep.scan["F_phiphi"] == 0))


def test_two_parameter_needs_three_outcomes():
    with pytest.raises(DfpError):
        optimize_two_parameter(synth_dfp(ideal_povm("da")))


def test_local_maxima_listed():
    rep = optimize_single(synth_dfp(waveplate_povm(np.deg2rad(10.0))))
    values = [v for _, v in rep.local_maxima]
    assert len(values) >= 2
    assert rep.value == pytest.approx(max(values))


def test_concurrent_searches_agree():
    tables = [synth_dfp(waveplate_povm(np.deg2rad(t))) for t in (7.0, 13.0, 19.0, 7.0)]
    serial = [optimize_single(t, grid_step_deg=4.0).value for t in tables]
    with ThreadPoolExecutor(4) as pool:
        threaded = list(pool.map(lambda t: optimize_single(t, grid_step_deg=4.0).value, tables))
    assert serial == threaded


class TestEstimator:
    def test_fit_and_score(self):
        table = synth_dfp(ideal_povm("da"))
        est = ProbeOptimizer(grid_step_deg=4.0).fit(table)
        assert est.best_value_ == pytest.approx(1.0, abs=1e-4)
        assert est.score(table) == pytest.approx(est.best_value_)
        noisy = synth_dfp(ideal_povm("da"), noise_sigma=1e-3, seed=1)
        assert est.score(noisy) == pytest.approx(1.0, abs=0.05)

    def test_params_and_clone(self):
        est = ProbeOptimizer(parameters=("phi", "chi"), scalarization="min")
        twin = clone(est)
        assert twin.get_params() == est.get_params()
        twin.fit(synth_dfp(ideal_povm("zx")))
        assert twin.report_.effective == pytest.approx([0.5, 0.5], abs=1e-6)
        with pytest.raises(DfpError):
            est.fit("not a table")
