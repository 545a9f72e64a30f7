"""The canonical double cover of a torus with a quadratic differential.

Geometry is laid out in one fundamental parallelogram

    Pi = {z_b + s + u sigma : 0 < s, u < 1},

chosen so that a representative of every zero and pole lies strictly inside.
The branch cuts are the straight segments [R_k, S_k]; the basepoint is picked
so that sqrt(w) continued along the two edges of Pi returns to itself, which
makes the cover trivial over Pi minus the cuts.  On that set the *reference
branch* of sqrt(w) is defined by continuation along the straight segment from
z_b followed by a sign (-1)^(number of cuts crossed).  "Sheet +1" means
agreement with the reference branch.

Cycles
------
* ``a_alpha`` / ``b_alpha``: the edges z_b -> z_b + 1 and z_b -> z_b + sigma on
  sheet +1 (lifts of the lattice generators).
* ``a_m`` (m = 1..L-1): counterclockwise capsule around the cut
  [R_{m+1}, S_{m+1}] on sheet +1.
* ``b_m``: capsule around the segment [R_1, R_{m+1}]; it crosses the cuts 1 and
  m+1 once each.  Its orientation is chosen so that a_m . b_m = +1 on the
  cover, and b_n is corrected by integer multiples of a_m so that b_m . b_n = 0.
  Finally b_m is replaced by b_m - a_m for m >= 2.  This keeps the basis
  canonical and fixes the half-period classes of z(R_k), z(S_k) to

      z(R_2) = -B_1/2,  z(S_1) = sum_m A_m/2,  z(S_2) = (A_1 - B_1)/2,
      z(R_k) = -B_{k-1}/2 + sum_{j<k} A_j/2,  z(S_k) = -B_{k-1}/2 + sum_{j<k-1} A_j/2.

Intersection numbers are computed on the cover: a planar crossing counts only
when both paths are on the same sheet there, with sign of cross(T1, T2).
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .contour import continue_along, integrate_path
from .elliptic import bergman_projective_connection, eta_tilde, log_theta1_derivatives
from .errors import ContinuationError, GeometryError, LatticeProximityError
from .qdiff import (
    QuadDiffSpec,
    cone_leading_coefficients,
    complex_to_json,
    evaluator,
    lattice_coordinates,
)

__all__ = [
    "Loop",
    "Cycle",
    "CycleBasis",
    "PeriodCoordinates",
    "FORMS",
    "build_cycle_basis",
    "integrate_cycle",
    "integrate_cycle_forms",
    "period_coordinates",
    "reference_sqrt",
    "z_integral",
    "calibration_residuals",
    "intersection_number",
]

ARC_POINTS = 12
SHEET_TOL = 1e-8


# --------------------------------------------------------------------------
# one-forms along t, given s = sqrt(w) and the log-derivative data of w
# --------------------------------------------------------------------------

def _form_omega(t, s, d, sig, P):
    return s


def _form_v0sq(t, s, d, sig, P):
    return 1.0 / s


def _s_omega(d):
    return 0.5 * d["L2"] - 0.125 * d["L1"] ** 2


def _form_sb_minus(t, s, d, sig, P):
    return (bergman_projective_connection(sig) - _s_omega(d)) / s


def _form_swirt_minus(t, s, d, sig, P):
    return -_s_omega(d) / s


def _form_schwarzian_r(t, s, d, sig, P):
    return _s_omega(d) / s


def _form_rpp_sq(t, s, d, sig, P):
    return d["L1"] ** 2 / (4.0 * s)


def _form_rppp(t, s, d, sig, P):
    return (0.5 * d["L2"] + 0.25 * d["L1"] ** 2) / s


def _form_v0_b(t, s, d, sig, P):
    if P is None:
        raise ValueError("V0_B_OVER_OMEGA needs the point P")
    _, l2, _ = log_theta1_derivatives(complex(P) - t, sig)
    return -l2 / s


FORMS = {
    "OMEGA": _form_omega,
    "V0_SQ_OVER_OMEGA": _form_v0sq,
    "SB_MINUS_SOMEGA_OVER_OMEGA": _form_sb_minus,
    "SWIRT_MINUS_SOMEGA_OVER_OMEGA": _form_swirt_minus,
    "SCHWARZIAN_R": _form_schwarzian_r,
    "RPP_SQ": _form_rpp_sq,
    "RPPP_OVER_RP_SQ": _form_rppp,
    "V0_B_OVER_OMEGA": _form_v0_b,
}


# --------------------------------------------------------------------------
# planar geometry helpers
# --------------------------------------------------------------------------

def _cross(a, b):
    return (np.conj(a) * b).imag


def _segment_intersection(p1, p2, q1, q2):
    """Parameter (s, t) of the proper crossing of [p1,p2] and [q1,q2], or None."""
    r = p2 - p1
    d = q2 - q1
    den = _cross(r, d)
    if abs(den) < 1e-300:
        return None
    s = _cross(q1 - p1, d) / den
    t = _cross(q1 - p1, r) / den
    if 0.0 < s < 1.0 and 0.0 < t < 1.0:
        return s, t
    return None


def _point_segment_distance(p, a, b):
    d = b - a
    if d == 0:
        return abs(p - a)
    s = np.clip(((p - a) * np.conj(d)).real / abs(d) ** 2, 0.0, 1.0)
    return abs(a + s * d - p)


def _segment_distance(a1, b1, a2, b2):
    if _segment_intersection(a1, b1, a2, b2) is not None:
        return 0.0
    return min(
        _point_segment_distance(a1, a2, b2),
        _point_segment_distance(b1, a2, b2),
        _point_segment_distance(a2, a1, b1),
        _point_segment_distance(b2, a1, b1),
    )


def capsule(p, q, rho, n_arc: int = ARC_POINTS):
    """Closed counterclockwise polygon approximating the rho-neighbourhood of [p, q]."""
    e = (q - p) / abs(q - p)
    th1 = np.linspace(-np.pi / 2, np.pi / 2, n_arc + 1)
    th2 = np.linspace(np.pi / 2, 3 * np.pi / 2, n_arc + 1)
    pts = [q + rho * e * np.exp(1j * th) for th in th1]
    pts += [p + rho * e * np.exp(1j * th) for th in th2]
    pts.append(pts[0])
    return tuple(complex(z) for z in pts)


def winding_number(polygon, z) -> int:
    """Winding number of a closed polygon around z."""
    pts = np.asarray(polygon, dtype=complex) - z
    ang = np.angle(pts[1:] / pts[:-1])
    return int(np.round(ang.sum() / (2 * np.pi)))


def _polygon_distance(polygon, z) -> float:
    return min(_point_segment_distance(z, a, b) for a, b in zip(polygon[:-1], polygon[1:]))


# --------------------------------------------------------------------------
# data types
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Loop:
    """A closed path on the cover: polyline plus sqrt(w) at its first point."""

    waypoints: tuple
    sqrt_start: complex
    closed_on_torus: bool = False  # True for edges of the parallelogram


@dataclass(frozen=True)
class Cycle:
    """Integer combination of loops."""

    name: str
    loops: tuple  # of (Loop, int)
    region: tuple | None = None  # polygon bounding the ring domain (Latin cycles)


@dataclass(frozen=True)
class PeriodCoordinates:
    A_alpha: complex
    B_alpha: complex
    A_m: tuple
    B_m: tuple

    def as_vector(self) -> np.ndarray:
        return np.array([self.A_alpha, self.B_alpha, *self.A_m, *self.B_m], dtype=complex)

    @property
    def names(self) -> list[str]:
        L1 = len(self.A_m)
        return ["A_alpha", "B_alpha"] + [f"A_{m}" for m in range(1, L1 + 1)] + [f"B_{m}" for m in range(1, L1 + 1)]

    def to_dict(self) -> dict:
        return {n: complex_to_json(v) for n, v in zip(self.names, self.as_vector())}


@dataclass(frozen=True)
class Layout:
    """Discrete choices of a basis construction, reusable for nearby specs."""

    zero_shifts: tuple  # lattice (n, m) added to each zero to get its position in Pi
    pole_shifts: tuple
    b_orient: tuple  # +1 / -1 per Latin b cycle
    b_fix: tuple  # (m, n, k): b_n += k a_m


@dataclass(frozen=True)
class CycleBasis:
    spec: QuadDiffSpec
    basepoint: complex
    sqrt_base: complex
    zeros: tuple  # positions of the zeros inside Pi
    poles: tuple
    cycles: dict
    layout: Layout
    radii: dict = field(default_factory=dict)

    @property
    def L(self) -> int:
        return self.spec.L

    @property
    def order(self) -> list[str]:
        L1 = self.L - 1
        return ["a_alpha", "b_alpha"] + [f"a_{m}" for m in range(1, L1 + 1)] + [f"b_{m}" for m in range(1, L1 + 1)]

    @property
    def cuts(self) -> list[tuple[complex, complex]]:
        return list(zip(self.zeros, self.poles))

    def genus_of_cover(self) -> int:
        return self.L + 1

    def to_dict(self) -> dict:
        out = {
            "spec": self.spec.to_dict(),
            "basepoint": complex_to_json(self.basepoint),
            "sqrt_base": complex_to_json(self.sqrt_base),
            "cycles": {},
        }
        for name in self.order:
            cyc = self.cycles[name]
            out["cycles"][name] = [
                {
                    "coefficient": k,
                    "waypoints": [complex_to_json(z) for z in lp.waypoints],
                    "sqrt_start": complex_to_json(lp.sqrt_start),
                    "sheet": reference_sheet(self, lp.waypoints[0], lp.sqrt_start),
                }
                for lp, k in cyc.loops
            ]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


# --------------------------------------------------------------------------
# branch bookkeeping
# --------------------------------------------------------------------------

def _count_cut_crossings(a, b, cuts) -> int:
    return sum(1 for r, s in cuts if _segment_intersection(a, b, r, s) is not None)


def _continue_straight(spec, a, b, sqrt_a):
    if a == b:
        return sqrt_a
    samples = continue_along([a, b], evaluator(spec), sqrt_a)
    return samples.sqrt_w[-1]


def reference_sqrt(basis: CycleBasis, z) -> complex:
    """Reference branch of sqrt(w) at a point z of Pi minus the cuts."""
    z = complex(z)
    s = _continue_straight(basis.spec, basis.basepoint, z, basis.sqrt_base)
    return s * (-1) ** _count_cut_crossings(basis.basepoint, z, basis.cuts)


def reference_sheet(basis: CycleBasis, z, value) -> int:
    ratio = complex(value) / reference_sqrt(basis, z)
    if abs(abs(ratio) - 1) > 1e-6 or abs(ratio.imag) > 1e-6:
        raise ContinuationError("value is not a square root of w at this point")
    return 1 if ratio.real > 0 else -1


# --------------------------------------------------------------------------
# construction
# --------------------------------------------------------------------------

def _gap_choices(coords):
    """Midpoints of circular gaps between sorted coordinates, largest gap first."""
    c = np.sort(np.mod(coords, 1.0))
    gaps = []
    for i in range(len(c)):
        lo = c[i]
        hi = c[(i + 1) % len(c)] + (1.0 if i == len(c) - 1 else 0.0)
        gaps.append((hi - lo, (lo + hi) / 2 % 1.0))
    gaps.sort(key=lambda g: -g[0])
    return gaps


def _place(points, s_b, u_b, sigma):
    """Shift each point into the parallelogram based at s_b + u_b sigma; return positions and shifts."""
    pos, shifts = [], []
    for p in points:
        s, u = lattice_coordinates(p, sigma)
        n = int(np.floor(s - s_b))
        m = int(np.floor(u - u_b))
        pos.append(complex(p - n - m * sigma))
        shifts.append((-n, -m))
    return tuple(pos), tuple(shifts)


def _apply_shifts(points, shifts, sigma):
    return tuple(complex(p + n + m * sigma) for p, (n, m) in zip(points, shifts))


def _edge_monodromy(spec, z_b, sqrt_b):
    sig = spec.sigma.sigma
    out = []
    for step in (1.0, sig):
        s_end = _continue_straight(spec, z_b, z_b + step, sqrt_b)
        out.append(s_end / sqrt_b)
    return out


def _choose_basepoint(spec: QuadDiffSpec, sqrt_hint=None):
    sig = spec.sigma.sigma
    s_coords, u_coords = lattice_coordinates(np.array(spec.points), sig)
    ev = evaluator(spec)
    for (gs, s_b), (gu, u_b) in itertools.product(_gap_choices(s_coords), _gap_choices(u_coords)):
        z_b = s_b + u_b * sig
        w_b = complex(ev(z_b, np.zeros(1, dtype=complex))["w"][0])
        sqrt_b = _pick_branch(np.sqrt(w_b), sqrt_hint)
        chi = _edge_monodromy(spec, z_b, sqrt_b)
        if all(abs(c - 1) < 1e-6 for c in chi):
            return s_b, u_b, sqrt_b
    raise GeometryError("no basepoint makes the cover trivial over the parallelogram minus the cuts")


def _pick_branch(s, hint):
    s = complex(s)
    if hint is None:
        return s
    return s if (s / complex(hint)).real >= 0 else -s


def _clearance(seg, exclude_points, other_segments, parallelogram):
    a, b = seg
    d = np.inf
    for p in exclude_points:
        d = min(d, _point_segment_distance(p, a, b))
    for c1, c2 in other_segments:
        d = min(d, _segment_distance(a, b, c1, c2))
    for e1, e2 in parallelogram:
        d = min(d, _segment_distance(a, b, e1, e2))
    return d


def build_cycle_basis(spec: QuadDiffSpec, *, template: CycleBasis | None = None) -> CycleBasis:
    """Construct the canonical basis of cycles on the double cover.

    With ``template`` the discrete choices (placement of points, orientations,
    integer corrections) and the global branch are copied from a basis of a
    nearby spec, so that finite differences compare like with like.
    """
    sig = spec.sigma.sigma
    L = spec.L
    if template is None:
        s_b, u_b, sqrt_b = _choose_basepoint(spec)
        zeros, zshift = _place(spec.zeros, s_b, u_b, sig)
        poles, pshift = _place(spec.poles, s_b, u_b, sig)
        z_b = s_b + u_b * sig
    else:
        lay = template.layout
        zeros = _apply_shifts(spec.zeros, lay.zero_shifts, sig)
        poles = _apply_shifts(spec.poles, lay.pole_shifts, sig)
        zshift, pshift = lay.zero_shifts, lay.pole_shifts
        s0, u0 = lattice_coordinates(template.basepoint, template.spec.sigma.sigma)
        z_b = complex(s0 + u0 * sig)
        w_b = complex(evaluator(spec)(z_b, np.zeros(1, dtype=complex))["w"][0])
        sqrt_b = _pick_branch(np.sqrt(w_b), template.sqrt_base)

    corners = [z_b, z_b + 1, z_b + 1 + sig, z_b + sig]
    edges = list(zip(corners, corners[1:] + corners[:1]))
    for p in zeros + poles:
        s, u = lattice_coordinates(p - z_b, sig)
        if not (0 < s < 1 and 0 < u < 1):
            raise GeometryError("a zero or pole is not inside the fundamental parallelogram")
    cuts = list(zip(zeros, poles))
    for (i, c1), (j, c2) in itertools.combinations(enumerate(cuts), 2):
        if _segment_distance(c1[0], c1[1], c2[0], c2[1]) == 0.0:
            raise GeometryError(f"branch cuts {i + 1} and {j + 1} intersect")

    delta = spec.branch_margin()
    min_rho = 4 * delta
    cycles = {}
    radii = {}
    proto = CycleBasis(spec, z_b, sqrt_b, zeros, poles, {}, Layout(zshift, pshift, (), ()))

    cycles["a_alpha"] = Cycle("a_alpha", ((Loop((z_b, z_b + 1), sqrt_b, True), 1),))
    cycles["b_alpha"] = Cycle("b_alpha", ((Loop((z_b, z_b + sig), sqrt_b, True), 1),))

    all_pts = list(zeros) + list(poles)
    for m in range(1, L):
        r, s = zeros[m], poles[m]
        others = [p for p in all_pts if p not in (r, s)]
        other_cuts = [c for k, c in enumerate(cuts) if k != m]
        rho = 0.3 * _clearance((r, s), others, other_cuts, edges)
        if rho < min_rho:
            raise GeometryError(f"no room for the cycle a_{m}: clearance {rho:.2e}")
        poly = capsule(r, s, rho)
        sq = reference_sqrt(proto, poly[0])
        cycles[f"a_{m}"] = Cycle(f"a_{m}", ((Loop(poly, sq), 1),), region=poly)
        radii[f"a_{m}"] = rho

    b_orient = []
    for m in range(1, L):
        r1, rm = zeros[0], zeros[m]
        others = [p for p in all_pts if p not in (r1, rm)]
        other_cuts = [c for k, c in enumerate(cuts) if k not in (0, m)]
        rho = 0.25 * _clearance((r1, rm), others, other_cuts, edges) * (1.0 - 0.15 * (m - 1) / max(L - 1, 1))
        if rho < min_rho:
            raise GeometryError(f"no room for the cycle b_{m}: clearance {rho:.2e}")
        poly = capsule(r1, rm, rho)
        if template is not None:
            orient = template.layout.b_orient[m - 1]
        else:
            trial = Cycle(f"b_{m}", ((Loop(poly, reference_sqrt(proto, poly[0])), 1),))
            orient = 1 if intersection_number(proto, cycles[f"a_{m}"], trial) > 0 else -1
        if orient < 0:
            poly = poly[::-1]
        sq = reference_sqrt(proto, poly[0])
        cycles[f"b_{m}"] = Cycle(f"b_{m}", ((Loop(poly, sq), 1),), region=poly)
        radii[f"b_{m}"] = rho
        b_orient.append(orient)

    # integer corrections making the Latin b cycles pairwise orthogonal
    if template is not None:
        fixes = template.layout.b_fix
    else:
        fixes = []
        for m in range(1, L):
            for n in range(m + 1, L):
                k = intersection_number(proto, cycles[f"b_{m}"], cycles[f"b_{n}"])
                if k != 0:
                    fixes.append((m, n, k))
        # b_m -> b_m - a_m for m >= 2: an integer symplectic change that puts
        # the half-period classes of z(R_k), z(S_k) in the standard form
        # (z(R_k) = -B_{k-1}/2 + sum_{j<k} A_j/2 for k >= 3)
        fixes += [(m, m, -1) for m in range(2, L)]
        fixes = tuple(fixes)
    for m, n, k in fixes:
        cyc = cycles[f"b_{n}"]
        extra = tuple((lp, k * c) for lp, c in cycles[f"a_{m}"].loops)
        cycles[f"b_{n}"] = Cycle(cyc.name, cyc.loops + extra, region=cyc.region)

    layout = Layout(zshift, pshift, tuple(b_orient), tuple(fixes))
    basis = CycleBasis(spec, z_b, sqrt_b, zeros, poles, cycles, layout, radii)
    if template is None:
        _check_basis(basis)
    return basis


def _check_basis(basis: CycleBasis):
    """Closed-loop sheet consistency and the canonical intersection matrix."""
    for name in basis.order:
        for lp, _ in basis.cycles[name].loops:
            samples = continue_along(lp.waypoints, evaluator(basis.spec), lp.sqrt_start)
            if abs(samples.sqrt_w[-1] - lp.sqrt_start) > 1e-6 * abs(lp.sqrt_start):
                raise GeometryError(f"cycle {name} does not close on the cover")
    L = basis.L
    for m in range(1, L):
        for n in range(1, L):
            want_ab = 1 if m == n else 0
            if intersection_number(basis, basis.cycles[f"a_{m}"], basis.cycles[f"b_{n}"]) != want_ab:
                raise GeometryError(f"a_{m} . b_{n} != {want_ab}")
            if m < n:
                if intersection_number(basis, basis.cycles[f"b_{m}"], basis.cycles[f"b_{n}"]) != 0:
                    raise GeometryError(f"b_{m} . b_{n} != 0")
                if intersection_number(basis, basis.cycles[f"a_{m}"], basis.cycles[f"a_{n}"]) != 0:
                    raise GeometryError(f"a_{m} . a_{n} != 0")


# --------------------------------------------------------------------------
# intersections on the cover
# --------------------------------------------------------------------------

def _sqrt_at(spec, waypoints, sqrt_start, seg_index, point):
    pts = list(waypoints[: seg_index + 1]) + [point]
    if len(pts) < 2:
        return sqrt_start
    return continue_along(pts, evaluator(spec), sqrt_start).sqrt_w[-1]


def _loop_intersection(basis, lp1: Loop, lp2: Loop) -> int:
    total = 0
    w1, w2 = lp1.waypoints, lp2.waypoints
    for i in range(len(w1) - 1):
        for j in range(len(w2) - 1):
            hit = _segment_intersection(w1[i], w1[i + 1], w2[j], w2[j + 1])
            if hit is None:
                continue
            x = w1[i] + hit[0] * (w1[i + 1] - w1[i])
            s1 = _sqrt_at(basis.spec, w1, lp1.sqrt_start, i, x)
            s2 = _sqrt_at(basis.spec, w2, lp2.sqrt_start, j, x)
            if (s1 / s2).real <= 0:
                continue  # different sheets
            total += 1 if _cross(w1[i + 1] - w1[i], w2[j + 1] - w2[j]) > 0 else -1
    return total


def intersection_number(basis: CycleBasis, c1: Cycle, c2: Cycle) -> int:
    """Intersection number of two cycles lying inside the parallelogram."""
    total = 0
    for lp1, k1 in c1.loops:
        for lp2, k2 in c2.loops:
            if lp1.closed_on_torus or lp2.closed_on_torus:
                raise ValueError("intersection numbers are computed for interior cycles only")
            total += k1 * k2 * _loop_intersection(basis, lp1, lp2)
    return total


# --------------------------------------------------------------------------
# integration
# --------------------------------------------------------------------------

def _make_forms(tags, sig, P):
    funcs = []
    for tag in tags:
        if tag not in FORMS:
            raise ValueError(f"unknown form tag {tag!r}")
        funcs.append(FORMS[tag])

    def forms(t, s, d):
        return np.array([f(t, s, d, sig, P) for f in funcs])

    return forms


def _check_point_clear(basis: CycleBasis, cycle: Cycle, P):
    if P is None:
        return
    for lp, _ in cycle.loops:
        wp = lp.waypoints
        for a, b in zip(wp[:-1], wp[1:]):
            for n in (-1, 0, 1):
                for m in (-1, 0, 1):
                    q = complex(P) + n + m * basis.spec.sigma.sigma
                    if _point_segment_distance(q, a, b) < 10 * basis.spec.branch_margin():
                        raise LatticeProximityError("the point P lies on (or too close to) the cycle")


def integrate_cycle_forms(basis: CycleBasis, cycle_id: str, tags, P=None, *, rtol=1e-13) -> np.ndarray:
    """Integrals of several tagged forms over one cycle (array in tag order)."""
    cycle = basis.cycles[cycle_id]
    _check_point_clear(basis, cycle, P)
    forms = _make_forms(list(tags), basis.spec.sigma, P)
    total = np.zeros(len(tags), dtype=complex)
    for lp, k in cycle.loops:
        res = integrate_path(lp.waypoints, evaluator(basis.spec), forms, lp.sqrt_start, rtol=rtol)
        if abs(res.sqrt_end - lp.sqrt_start) > 1e-6 * abs(lp.sqrt_start):
            raise ContinuationError(f"cycle {cycle_id} did not close on the cover")
        total += k * res.integrals
    return total


def integrate_cycle(basis: CycleBasis, cycle_id: str, form_tag: str, P=None) -> complex:
    """Integral of one tagged form over a named cycle."""
    return complex(integrate_cycle_forms(basis, cycle_id, [form_tag], P)[0])


def period_coordinates(spec_or_basis) -> PeriodCoordinates:
    basis = spec_or_basis if isinstance(spec_or_basis, CycleBasis) else build_cycle_basis(spec_or_basis)
    vals = {name: integrate_cycle(basis, name, "OMEGA") for name in basis.order}
    L1 = basis.L - 1
    return PeriodCoordinates(
        vals["a_alpha"],
        vals["b_alpha"],
        tuple(vals[f"a_{m}"] for m in range(1, L1 + 1)),
        tuple(vals[f"b_{m}"] for m in range(1, L1 + 1)),
    )


# --------------------------------------------------------------------------
# the coordinate z(P) = int_{R_1}^P omega
# --------------------------------------------------------------------------

def start_branch_at_zero(basis: CycleBasis, k: int, direction_point, sheet: int = 1) -> complex:
    """sqrt(w'(R_k) (b - R_k)) with the sign matching ``sheet`` just off R_k towards b."""
    a1, _ = cone_leading_coefficients(basis.spec)
    r = basis.zeros[k]
    d = complex(direction_point) - r
    s0 = complex(np.sqrt(a1[k] * d))
    eps = 1e-3
    probe = r + eps**2 * d
    ref = reference_sqrt(basis, probe)
    # along the singular start sqrt(w) ~ u sqrt(a1 d) with u = eps
    return s0 if (s0 * eps / ref).real * sheet > 0 else -s0


def z_integral(basis: CycleBasis, waypoints, sheet: int = 1, tags=("OMEGA",)) -> np.ndarray:
    """Integrals of forms from the zero R_1 along a polyline starting at R_1.

    The path starts on the given sheet (relative to the reference branch just
    off R_1 along the first segment).
    """
    wp = [basis.zeros[0]] + [complex(p) for p in waypoints]
    a1, _ = cone_leading_coefficients(basis.spec)
    s0 = start_branch_at_zero(basis, 0, wp[1], sheet)
    forms = _make_forms(list(tags), basis.spec.sigma, None)
    res = integrate_path(_from_spec_point(basis, "R", 0, wp), evaluator(basis.spec), forms, s0, start_kind="zero", start_coeff=a1[0])
    return res.integrals, res.sqrt_end


def _from_spec_point(basis: CycleBasis, kind: str, index: int, waypoints):
    """Translate a path starting at a zero/pole in Pi so it starts at the spec's own lift.

    w is periodic, so the integrals are unchanged, but the singular start then
    sits exactly on the floating-point value used inside the theta products.
    """
    own = basis.spec.zeros[index] if kind == "R" else basis.spec.poles[index]
    shift = own - waypoints[0]
    return [own] + [complex(p) + shift for p in waypoints[1:]]


def z_of_divisor_point(basis: CycleBasis, kind: str, index: int, sheet: int = 1) -> complex:
    """int_{R_1}^{P} omega along the straight segment, P a zero or pole (index from 0)."""
    target = basis.zeros[index] if kind == "R" else basis.poles[index]
    wp = [basis.zeros[0], target]
    a1, b = cone_leading_coefficients(basis.spec)
    # integrate to the midpoint regularly, then from the target backwards with a singular start
    mid = 0.5 * (wp[0] + wp[1])
    first, s_mid = z_integral(basis, [mid], sheet)
    coeff = a1[index] if kind == "R" else b[index]
    kind_t = "zero" if kind == "R" else "pole"
    d = mid - target
    s_t = complex(np.sqrt(coeff * d) if kind_t == "zero" else np.sqrt(coeff / d))
    res = integrate_path(
        _from_spec_point(basis, kind, index, [target, mid]),
        evaluator(basis.spec),
        lambda t, s, dd: s,
        s_t,
        start_kind=kind_t,
        start_coeff=coeff,
    )
    if (res.sqrt_end / s_mid).real < 0:
        res_val = -res.integrals[0]
    else:
        res_val = res.integrals[0]
    return complex(first[0] - res_val)


def predicted_z(periods: PeriodCoordinates, kind: str, k: int) -> complex:
    """The expression of z(P) for P = R_k or S_k (k from 1) in the period coordinates."""
    A = periods.A_m
    B = periods.B_m
    if kind == "R":
        if k == 1:
            return 0j
        if k == 2:
            return -B[0] / 2
        return -B[k - 2] / 2 + sum(A[j] for j in range(k - 1)) / 2
    if k == 1:
        return sum(A) / 2
    if k == 2:
        return (A[0] - B[0]) / 2
    return -B[k - 2] / 2 + sum(A[j] for j in range(k - 2)) / 2


def calibration_residuals(basis: CycleBasis, periods: PeriodCoordinates | None = None, max_coeff: int = 2) -> dict:
    """Residuals of the z-coordinate relations, minimised over sign and small period combinations.

    z(P) is defined on the cover only up to the sheet (sign) and the periods
    of omega; both ambiguities are factored out by searching integer
    combinations with coefficients in [-max_coeff, max_coeff].
    """
    if periods is None:
        periods = period_coordinates(basis)
    vec = periods.as_vector()
    combos = np.array(list(itertools.product(range(-max_coeff, max_coeff + 1), repeat=len(vec))))
    lattice = combos @ vec
    out = {}
    for kind in ("R", "S"):
        for k in range(1, basis.L + 1):
            if kind == "R" and k == 1:
                continue
            z = z_of_divisor_point(basis, kind, k - 1)
            pred = predicted_z(periods, kind, k)
            best = min(np.min(np.abs(sg * z - pred - lattice)) for sg in (1, -1))
            out[f"z({kind}_{k})"] = float(best)
    return out
