import dataclasses
import json

import numpy as np
import pytest

from polytori.cover import (
    Cycle,
    Loop,
    build_cycle_basis,
    calibration_residuals,
    capsule,
    integrate_cycle,
    integrate_cycle_forms,
    intersection_number,
    period_coordinates,
    reference_sqrt,
)
from polytori.elliptic import eta_tilde
from polytori.errors import LatticeProximityError
from polytori.qdiff import BranchedPath, QuadDiffSpec, area, continue_sqrt, random_spec
from polytori.variational import ParameterVector

L3_SEEDS = [5, 6, 7, 8, 9, 12, 16, 17, 18, 19]


def _random(L, seed):
    return random_spec(L, sigma=1j if seed % 2 else 0.2 + 1.1j, rng=np.random.default_rng(seed))


@pytest.fixture(scope="module")
def basis2():
    return build_cycle_basis(random_spec(2, sigma=1j, rng=np.random.default_rng(1)))


@pytest.fixture(scope="module")
def basis3():
    return build_cycle_basis(random_spec(3, sigma=1j, rng=np.random.default_rng(12)))


def test_basis_shape_and_genus(basis2, basis3):
    for basis in (basis2, basis3):
        L = basis.L
        assert basis.order[:2] == ["a_alpha", "b_alpha"]
        assert len(basis.order) == 2 * L
        # the Greek pair has starred partners, so 2 g~ = 2L + 2 with g~ = L + 1
        assert len(basis.order) + 2 == 2 * basis.genus_of_cover()
        assert basis.genus_of_cover() == L + 1


def test_cycles_close_on_their_sheet(basis2):
    for name in basis2.order:
        for lp, _ in basis2.cycles[name].loops:
            path = BranchedPath(lp.waypoints, lp.sqrt_start)
            vals = continue_sqrt(basis2.spec, path)
            assert abs(vals[-1] - lp.sqrt_start) < 1e-8 * abs(lp.sqrt_start)


def test_latin_a_cycle_has_trivial_monodromy(basis3):
    for m in range(1, basis3.L):
        (lp, _), = basis3.cycles[f"a_{m}"].loops
        vals = continue_sqrt(basis3.spec, BranchedPath(lp.waypoints, lp.sqrt_start))
        assert abs(vals[-1] / vals[0] - 1) < 1e-10


def test_latin_intersection_matrix(basis3):
    L = basis3.L
    for m in range(1, L):
        for n in range(1, L):
            a, b = basis3.cycles[f"a_{m}"], basis3.cycles[f"b_{n}"]
            assert intersection_number(basis3, a, b) == (1 if m == n else 0)
            assert intersection_number(basis3, b, a) == -(1 if m == n else 0)
            if m != n:
                assert intersection_number(basis3, b, basis3.cycles[f"b_{m}"]) == 0


def _with_cycle(basis, cycle):
    return dataclasses.replace(basis, cycles={**basis.cycles, cycle.name: cycle})


def test_contractible_cycle_integrates_to_zero(basis2):
    sp = basis2.spec
    c = basis2.basepoint + 0.5 + 0.5 * sp.sigma.sigma
    c = min(
        (c + 0.1 * np.exp(1j * k) for k in range(12)),
        key=lambda z: -min(abs(z - p) for p in basis2.zeros + basis2.poles),
    )
    rad = 0.3 * min(abs(c - p) for p in basis2.zeros + basis2.poles)
    poly = tuple(c + rad * np.exp(1j * np.linspace(0, 2 * np.pi, 33)))
    loop = Loop(poly, reference_sqrt(basis2, poly[0]))
    b = _with_cycle(basis2, Cycle("tiny", ((loop, 1),)))
    assert abs(integrate_cycle(b, "tiny", "OMEGA")) < 1e-13


def test_integration_by_parts_identities(basis2):
    tags = ["SCHWARZIAN_R", "RPP_SQ", "RPPP_OVER_RP_SQ"]
    for name in basis2.order:
        s, p, ppp = integrate_cycle_forms(basis2, name, tags)
        assert abs(s - 0.5 * p) < 1e-8 * abs(p)
        assert abs(ppp - 2 * p) < 1e-8 * abs(p)


def test_wirtinger_bergman_difference(basis2):
    et = eta_tilde(basis2.spec.sigma)
    tags = ["SWIRT_MINUS_SOMEGA_OVER_OMEGA", "SB_MINUS_SOMEGA_OVER_OMEGA", "V0_SQ_OVER_OMEGA"]
    for name in basis2.order:
        w, b, v = integrate_cycle_forms(basis2, name, tags)
        assert abs((w - b) - 24j * np.pi * et * v) < 1e-10 * abs(w - b)


def test_period_coordinates_dimension_and_scaling(basis2):
    P = period_coordinates(basis2)
    assert P.as_vector().shape == (4,)
    assert P.names == ["A_alpha", "B_alpha", "A_1", "B_1"]
    kappa = 0.8 + 0.5j
    scaled = build_cycle_basis(basis2.spec.scaled(kappa**2), template=basis2)
    ratio = period_coordinates(scaled).as_vector() / P.as_vector()
    assert np.allclose(ratio, kappa, rtol=1e-11)


def test_area_from_riemann_bilinear_relation(basis2, basis3):
    sym = QuadDiffSpec(1j, (0.2 + 0.1j, -0.2 - 0.1j), (0.1 - 0.25j, -0.1 + 0.25j))
    for spec in (basis2, basis3, sym):
        P = period_coordinates(spec)
        bilinear = np.imag(np.conj(P.A_alpha) * P.B_alpha)
        bilinear += 0.5 * sum(np.imag(np.conj(a) * b) for a, b in zip(P.A_m, P.B_m))
        sp = spec.spec if hasattr(spec, "spec") else spec
        assert abs(bilinear / area(sp, 1e-11) - 1) < 1e-10


def test_rerouted_cycle_has_the_same_period(basis2):
    r, s = basis2.zeros[1], basis2.poles[1]
    rho = basis2.radii["a_1"]
    for factor in (0.5, 0.8):
        poly = capsule(r, s, factor * rho, 20)
        loop = Loop(poly, reference_sqrt(basis2, poly[0]))
        b = _with_cycle(basis2, Cycle("a_1_rerouted", ((loop, 1),)))
        assert abs(integrate_cycle(b, "a_1_rerouted", "OMEGA") - integrate_cycle(basis2, "a_1", "OMEGA")) < 1e-9


def test_involution_image_of_latin_cycle(basis2):
    (lp, _), = basis2.cycles["a_1"].loops
    swapped = Loop(tuple(reversed(lp.waypoints)), -lp.sqrt_start)
    b = _with_cycle(basis2, Cycle("a_1_star_reversed", ((swapped, 1),)))
    A1 = integrate_cycle(basis2, "a_1", "OMEGA")
    assert abs(integrate_cycle(b, "a_1_star_reversed", "OMEGA") - A1) < 1e-12 * abs(A1)


@pytest.mark.parametrize("L,seed", [(2, s) for s in range(10)] + [(3, s) for s in L3_SEEDS])
def test_z_coordinate_relations(L, seed):
    basis = build_cycle_basis(_random(L, seed))
    res = calibration_residuals(basis)
    assert len(res) == 2 * L - 1
    assert max(res.values()) < 1e-8


def test_point_on_cycle_is_rejected(basis2):
    (lp, _), = basis2.cycles["a_1"].loops
    with pytest.raises(LatticeProximityError):
        integrate_cycle(basis2, "a_1", "V0_B_OVER_OMEGA", lp.waypoints[3])


def test_basis_exports_json(basis3):
    d = json.loads(basis3.to_json())
    assert set(d["cycles"]) == set(basis3.order)
    for loops in d["cycles"].values():
        for lp in loops:
            assert lp["sheet"] in (1, -1)
            assert len(lp["waypoints"]) >= 2


def test_periods_deterministic(basis2):
    again = build_cycle_basis(basis2.spec)
    assert np.array_equal(period_coordinates(again).as_vector(), period_coordinates(basis2).as_vector())


def test_pair_permutation_is_an_integer_symplectic_change(basis3):
    spec = basis3.spec

    def permuted(sp):
        return QuadDiffSpec(sp.sigma, (sp.zeros[0], sp.zeros[2], sp.zeros[1]), (sp.poles[0], sp.poles[2], sp.poles[1]), sp.scale)

    other = build_cycle_basis(permuted(spec))
    pv = ParameterVector.from_spec(spec)
    rng = np.random.default_rng(0)
    X, Y = [], []
    for _ in range(4):
        d = np.zeros(pv.dim, dtype=complex)
        d[0] = 1e-2 * rng.standard_normal()
        d[2:] = 1e-2 * (rng.standard_normal(pv.dim - 2) + 1j * rng.standard_normal(pv.dim - 2))
        sp = pv.with_array(pv.as_array() + d).to_spec()
        X.append(period_coordinates(build_cycle_basis(sp, template=basis3)).as_vector())
        Y.append(period_coordinates(build_cycle_basis(permuted(sp), template=other)).as_vector())
    X, Y = np.array(X), np.array(Y)
    M = np.linalg.lstsq(np.vstack([X.real, X.imag]), np.vstack([Y.real, Y.imag]), rcond=None)[0].T
    assert np.max(np.abs(M - np.round(M))) < 1e-8
    M = np.round(M)
    n = basis3.L - 1
    J = np.zeros((2 * n + 2, 2 * n + 2))
    J[0, 1], J[1, 0] = 1, -1
    J[2 : 2 + n, 2 + n :] = np.eye(n)
    J[2 + n :, 2 : 2 + n] = -np.eye(n)
    assert np.array_equal(M @ J @ M.T, J)
