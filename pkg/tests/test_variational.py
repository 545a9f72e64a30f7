import json

import numpy as np
import pytest

from polytori.conical import tau
from polytori.cover import build_cycle_basis
from polytori.errors import GeometryError, InvariantError
from polytori.qdiff import QuadDiffSpec
from polytori.variational import (
    SUITES,
    ParameterVector,
    TestPoint as _TestPoint,
    coordinate_names,
    log_Q,
    period_jacobian,
    ring_indicators,
    select_test_points,
    verify_rauch,
    verify_suite,
)

SYMMETRIC = QuadDiffSpec(1j, (0.2 + 0.1j, -0.2 - 0.1j), (0.1 - 0.25j, -0.1 + 0.25j))


@pytest.fixture(scope="module")
def jac_l2(spec_l2):
    return period_jacobian(spec_l2)


def test_parameter_vector_round_trip(spec_l2, spec_l3):
    for spec in (spec_l2, spec_l3):
        pv = ParameterVector.from_spec(spec)
        assert pv.dim == 2 * spec.L
        assert pv.names[:2] == ["sigma", "c"]
        again = pv.with_array(pv.as_array()).to_spec()
        assert np.allclose(again.zeros, spec.zeros, atol=1e-14)
        assert np.allclose(again.poles, spec.poles, atol=1e-14)
        with pytest.raises(InvariantError):
            pv.with_array(np.zeros(pv.dim + 1))


def test_coordinate_names():
    assert coordinate_names(3) == ["A_alpha", "B_alpha", "A_1", "A_2", "B_1", "B_2"]


def test_scale_column_is_the_period_vector(jac_l2, spec_l2):
    # periods scale like kappa with c = kappa^2, so 2 c dP/dc = P
    col = jac_l2.J[:, 1] * 2 * spec_l2.scale
    assert np.allclose(col, jac_l2.periods, rtol=1e-9, atol=0)


def test_jacobian_diagnostics(jac_l2):
    assert jac_l2.J.shape == (4, 4)
    assert jac_l2.condition < 1e6
    assert jac_l2.richardson_gap < 1e-7
    assert jac_l2.cr_residual < 1e-6
    assert set(jac_l2.summary()) == {"condition_number", "richardson_gap", "cauchy_riemann_residual", "step"}


def test_richardson_refinement_improves_rauch(jac_l2):
    rep = verify_rauch(jac_l2.params, jac=jac_l2)
    rhs = np.array([e.rhs for e in rep.select("rauch")])

    def err(J):
        lhs = np.linalg.inv(J)[0]
        return float(np.max(np.abs(lhs - rhs) / np.abs(rhs)))

    coarse, fine, rich = err(jac_l2.J_coarse), err(jac_l2.J_fine), err(jac_l2.J)
    floor = 1e-9
    # second-order central differences: halving the step divides the error by about 4
    assert fine < coarse / 3 or coarse < floor
    assert rich <= max(fine, floor)


def test_rauch_report(rauch_l2):
    rep = rauch_l2.value
    assert rep.passed
    assert len(rep.select("rauch")) == 4
    assert rep.max_rel("rauch") < 1e-5
    ctrl = rep.select("rauch-half-factor-control")
    assert [e.coordinate for e in ctrl] == ["A_1", "B_1"]
    for e in ctrl:
        assert abs(e.lhs - 2) < 1e-3
    d = json.loads(rep.to_json())
    assert d["passed"] is True and d["suite"] == "rauch"
    assert "rauch" in rep.table()


def test_report_pass_flags_follow_tolerance(rauch_l2, values_l2, tau_l2):
    for rep in (rauch_l2.value, values_l2.value, tau_l2.value):
        for e in rep.entries:
            assert e.abs_mismatch >= 0 and e.rel_mismatch >= 0
            if e.identity.endswith("without-extra-term"):
                assert e.passed == (e.rel_mismatch >= 10 * e.tolerance)
            else:
                assert e.passed == (e.rel_mismatch < e.tolerance)


def test_rauch_symmetric_spec_under_relabelling():
    relabelled = QuadDiffSpec(SYMMETRIC.sigma, SYMMETRIC.zeros[::-1], SYMMETRIC.poles[::-1])
    a = verify_rauch(SYMMETRIC)
    b = verify_rauch(relabelled)
    assert a.passed and b.passed
    assert max(a.max_rel("rauch"), b.max_rel("rauch")) < 1e-5


def test_test_point_selection(spec_l2, spec_l3):
    for spec in (spec_l2, spec_l3):
        basis = build_cycle_basis(spec)
        tps = select_test_points(basis)
        assert isinstance(tps["outside"], _TestPoint)
        assert all(k == 0 for k in tps["outside"].multiplicity)
        assert any(k != 0 for k in tps["inside"].multiplicity)


def test_ring_indicator_rejects_points_on_cycles(spec_l2):
    basis = build_cycle_basis(spec_l2)
    (lp, _), = basis.cycles["a_1"].loops
    with pytest.raises(GeometryError):
        ring_indicators(basis, lp.waypoints[2])


def test_value_gradient_report(values_l2):
    rep = values_l2.value
    assert rep.passed
    for group in ("v0-outside", "v0-inside", "f-derivative", "h-derivative"):
        assert rep.select(group)
        assert rep.max_rel(group) < 1e-5
    controls = rep.select("v0-inside-without-extra-term")
    assert controls
    assert min(e.rel_mismatch for e in controls) >= 1e-4
    assert len(rep.select("f-derivative")) == 2 * 4


def test_tau_omega_q_report(tau_l2, spec_l2):
    rep = tau_l2.value
    assert rep.passed
    (euler,) = rep.select("tau-scaling-euler")
    assert abs(euler.lhs.real + spec_l2.L / 18) < 1e-6
    assert rep.info["omega_asymmetry"] < 1e-5
    assert len(rep.select("ibp-schwarzian")) == 2 * spec_l2.L
    assert rep.max_rel("logQ-reduction") < 1e-7


def test_log_q_tracks_abs_tau(spec_l2, spec_l2b):
    specs = [spec_l2, spec_l2b, spec_l2b.scaled(2.5 - 1.0j), spec_l2.translated(0.2 + 0.1j)]
    vals = [log_Q(s) - 2 * np.log(tau(s, check=False)[1]) for s in specs]
    assert np.ptp(vals) < 1e-10


def test_verify_suite_names(spec_l2):
    assert set(SUITES) == {"rauch", "v0", "fh", "tau", "omega-closed", "q-grad"}
    with pytest.raises(KeyError):
        verify_suite("nope", spec_l2)
    (rep,) = verify_suite("rauch", spec_l2)
    assert rep.passed
