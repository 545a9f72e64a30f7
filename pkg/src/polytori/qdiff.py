"""Meromorphic quadratic differentials W = w(t) dt^2 on a torus.

The weight is realised by theta quotients,

    w(t) = c * exp(-2 pi i m t) * prod_k theta1(t - R_k) / prod_i theta1(t - S_i),

where R_k are the simple zeros, S_i the simple poles and the integer m is the
sigma-component of the lattice vector sum(R) - sum(S) = n + m sigma.  The
exponential factor compensates the quasi-periodicity of theta1, so the points
may be given as arbitrary lifts (typically inside the fundamental cell) and w
is still doubly periodic.

Everything about sqrt(w) is expressed through the logarithmic derivatives
L1 = (log w)', L2 = (log w)'' and L3 = (log w)''', which come from a single
pass of the theta series.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .contour import continue_along, integrate_path
from .elliptic import (
    EXCLUSION_RADIUS,
    Modulus,
    _lattice_distance,
    as_modulus,
    dedekind_eta,
    reduce_to_cell,
    theta1_all,
)
from .errors import ContinuationError, InvariantError, LatticeProximityError
from .quadrature import adaptive_area

__all__ = [
    "QuadDiffSpec",
    "BranchedPath",
    "random_spec",
    "weight",
    "weight_data",
    "continue_sqrt",
    "area",
    "cone_values",
    "cone_leading_coefficients",
    "s_omega",
    "schwarzian_from_log_derivatives",
    "complex_to_json",
    "complex_from_json",
]

PRINCIPAL_TOL = 1e-10
CONE_CHECK_TOL = 1e-8


def complex_to_json(z) -> list[float]:
    z = complex(z)
    return [z.real, z.imag]


def complex_from_json(v) -> complex:
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(float(v[0]), float(v[1]))
    if isinstance(v, (int, float)):
        return complex(v)
    raise InvariantError(f"complex numbers must be [re, im] pairs, got {v!r}")


def lattice_coordinates(z, sigma):
    """Real coordinates (s, u) with z = s + u sigma."""
    sigma = complex(sigma)
    z = np.asarray(z, dtype=complex)
    u = z.imag / sigma.imag
    s = z.real - u * sigma.real
    return s, u


@dataclass(frozen=True)
class QuadDiffSpec:
    """A quadratic differential with L simple zeros and L simple poles.

    The constructor checks the divisor condition sum(R) - sum(S) in Z + sigma Z
    to ``PRINCIPAL_TOL`` and then moves the last pole by the (tiny) residual
    so that the condition holds exactly in floating point.
    """

    sigma: Modulus
    zeros: tuple
    poles: tuple
    scale: complex = 1.0 + 0j
    winding: tuple = field(init=False)

    def __post_init__(self):
        mod = as_modulus(self.sigma)
        object.__setattr__(self, "sigma", mod)
        zeros = tuple(complex(r) for r in self.zeros)
        poles = tuple(complex(s) for s in self.poles)
        scale = complex(self.scale)
        for v in zeros + poles + (scale,):
            if not (np.isfinite(v.real) and np.isfinite(v.imag)):
                raise InvariantError("spec contains non-finite values")
        if len(zeros) != len(poles):
            raise InvariantError(f"need as many zeros as poles, got {len(zeros)} and {len(poles)}")
        if len(zeros) < 2:
            raise InvariantError("L >= 2 required: there is no differential with one simple zero and one simple pole")
        if scale == 0:
            raise InvariantError("scale must be nonzero")
        resid = sum(zeros) - sum(poles)
        su = lattice_coordinates(resid, mod.sigma)
        n, m = int(np.round(su[0])), int(np.round(su[1]))
        defect = resid - (n + m * mod.sigma)
        if abs(defect) > PRINCIPAL_TOL:
            raise InvariantError(
                f"divisor not principal: sum(zeros) - sum(poles) misses the lattice by {abs(defect):.3e}"
            )
        poles = poles[:-1] + (sum(zeros) - sum(poles[:-1]) - (n + m * mod.sigma),)
        pts = zeros + poles
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                d = reduce_to_cell(pts[i] - pts[j], mod)
                if _lattice_distance(d, mod) < EXCLUSION_RADIUS:
                    raise InvariantError(f"zeros and poles must be distinct mod the lattice (points {i} and {j} coincide)")
        object.__setattr__(self, "zeros", zeros)
        object.__setattr__(self, "poles", poles)
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "winding", (n, m))

    @property
    def L(self) -> int:
        return len(self.zeros)

    @property
    def points(self) -> tuple:
        return self.zeros + self.poles

    def min_separation(self) -> float:
        pts = self.points
        best = np.inf
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                best = min(best, float(_lattice_distance(reduce_to_cell(pts[i] - pts[j], self.sigma), self.sigma)))
        return best

    def branch_margin(self) -> float:
        """Default margin delta kept between paths and branch points."""
        return 1e-3 * self.min_separation()

    def scaled(self, factor) -> "QuadDiffSpec":
        """Spec with W multiplied by ``factor`` (kappa^2 in the usual notation)."""
        return QuadDiffSpec(self.sigma, self.zeros, self.poles, self.scale * complex(factor))

    def translated(self, shift) -> "QuadDiffSpec":
        shift = complex(shift)
        # w(t - shift) picks up exp(2 pi i m shift); fold it into the scale so the
        # translated differential is exactly the pull-back
        n, m = self.winding
        c = self.scale * np.exp(2j * np.pi * m * shift)
        return QuadDiffSpec(
            self.sigma,
            tuple(r + shift for r in self.zeros),
            tuple(s + shift for s in self.poles),
            c,
        )

    def to_dict(self) -> dict:
        return {
            "sigma": complex_to_json(self.sigma.sigma),
            "zeros": [complex_to_json(r) for r in self.zeros],
            "poles": [complex_to_json(s) for s in self.poles],
            "scale": complex_to_json(self.scale),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "QuadDiffSpec":
        allowed = {"sigma", "zeros", "poles", "scale"}
        unknown = set(d) - allowed
        if unknown:
            raise InvariantError(f"unknown spec keys: {sorted(unknown)}")
        missing = {"sigma", "zeros", "poles"} - set(d)
        if missing:
            raise InvariantError(f"missing spec keys: {sorted(missing)}")
        return cls(
            Modulus(complex_from_json(d["sigma"])),
            tuple(complex_from_json(v) for v in d["zeros"]),
            tuple(complex_from_json(v) for v in d["poles"]),
            complex_from_json(d.get("scale", [1.0, 0.0])),
        )

    @classmethod
    def from_json(cls, text: str) -> "QuadDiffSpec":
        return cls.from_dict(json.loads(text))


def random_spec(L: int, sigma=1j, rng=None, min_sep: float = 0.15, scale=1.0, max_tries: int = 10_000) -> QuadDiffSpec:
    """Random spec with all 2L points in the cell and pairwise torus distance >= min_sep.

    The last pole is determined by the divisor condition; it is reduced into the
    cell and the sample is rejected if it lands too close to another point.
    """
    mod = as_modulus(sigma)
    rng = np.random.default_rng(rng)
    for _ in range(max_tries):
        su = rng.uniform(0.0, 1.0, size=(2 * L - 1, 2))
        pts = list(su[:, 0] + su[:, 1] * mod.sigma)
        zeros, poles = pts[:L], pts[L:]
        last = sum(zeros) - sum(poles)
        s, u = lattice_coordinates(last, mod.sigma)
        last = (s % 1.0) + (u % 1.0) * mod.sigma
        allp = zeros + poles + [last]
        ok = True
        for i in range(len(allp)):
            for j in range(i + 1, len(allp)):
                if _lattice_distance(reduce_to_cell(allp[i] - allp[j], mod), mod) < min_sep:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            return QuadDiffSpec(mod, tuple(zeros), tuple(poles) + (last,), complex(scale))
    raise InvariantError(f"could not place {2 * L} points with separation {min_sep}")


def _check_poles(spec: QuadDiffSpec, t, radius):
    for s in spec.poles:
        d = reduce_to_cell(t - s, spec.sigma)
        if np.any(_lattice_distance(d, spec.sigma) < radius):
            raise LatticeProximityError("weight evaluated within the exclusion radius of a pole")


def weight_data(spec: QuadDiffSpec, t, *, exclusion_radius: float = EXCLUSION_RADIUS, base=None) -> dict:
    """w and the logarithmic derivatives L1, L2, L3 of w at t (arrays allowed).

    If ``base`` is given the evaluation point is base + t; the differences to
    the zeros and poles are then formed as (base - p) + t, which is exact when
    base coincides with a zero or pole.
    """
    t = np.asarray(t, dtype=complex)
    if base is not None:
        offset = t
        t = base + offset
    if exclusion_radius > 0:
        _check_poles(spec, t, exclusion_radius)
    sig = spec.sigma
    m = spec.winding[1]
    num = np.full(t.shape, spec.scale, dtype=complex) * np.exp(-2j * np.pi * m * t)
    den = np.ones(t.shape, dtype=complex)
    L1 = np.full(t.shape, -2j * np.pi * m, dtype=complex)
    L2 = np.zeros(t.shape, dtype=complex)
    L3 = np.zeros(t.shape, dtype=complex)
    for pts, sgn in ((spec.zeros, 1), (spec.poles, -1)):
        for p in pts:
            arg = t - p if base is None else (base - p) + offset
            t0, t1, t2, t3 = theta1_all(arg, sig)
            if sgn > 0:
                num = num * t0
            else:
                den = den * t0
            # the log-derivatives are infinite exactly at a zero or pole
            with np.errstate(divide="ignore", invalid="ignore"):
                l1 = t1 / t0
                r2 = t2 / t0
                L1 = L1 + sgn * l1
                L2 = L2 + sgn * (r2 - l1**2)
                L3 = L3 + sgn * (t3 / t0 - 3 * l1 * r2 + 2 * l1**3)
    return {"w": num / den, "L1": L1, "L2": L2, "L3": L3}


def weight(spec: QuadDiffSpec, z, *, exclusion_radius: float = EXCLUSION_RADIUS):
    """The coefficient w with W = w(z) dz^2."""
    w = weight_data(spec, z, exclusion_radius=exclusion_radius)["w"]
    return w[()] if np.ndim(w) == 0 else w


def evaluator(spec: QuadDiffSpec):
    """Closure suitable for the contour engine (no proximity check on the nodes)."""
    return lambda base, offset: weight_data(spec, offset, exclusion_radius=0.0, base=base)


def s_omega(spec: QuadDiffSpec, z, *, exclusion_radius: float = EXCLUSION_RADIUS):
    """Schwarzian {F, z} of a primitive F of sqrt(w): L2/2 - L1^2/8."""
    z = np.asarray(z, dtype=complex)
    for r in spec.zeros:
        if np.any(_lattice_distance(reduce_to_cell(z - r, spec.sigma), spec.sigma) < exclusion_radius):
            raise LatticeProximityError("s_omega evaluated within the exclusion radius of a zero")
    d = weight_data(spec, z, exclusion_radius=exclusion_radius)
    out = schwarzian_from_log_derivatives(d["L1"], d["L2"])
    return out[()] if np.ndim(out) == 0 else out


def schwarzian_from_log_derivatives(L1, L2):
    """{F, z} for F' = sqrt(w), given L1 = (log w)' and L2 = (log w)''."""
    return 0.5 * np.asarray(L2) - 0.125 * np.asarray(L1) ** 2


@dataclass
class BranchedPath:
    """A polyline in the torus coordinate with a chosen value of sqrt(w) at its start."""

    waypoints: tuple
    initial_branch: complex
    samples: np.ndarray | None = None
    values: np.ndarray | None = None

    def __post_init__(self):
        self.waypoints = tuple(complex(p) for p in self.waypoints)
        if len(self.waypoints) < 2:
            raise InvariantError("a path needs at least two waypoints")


def path_distance_to_points(waypoints, points, sigma) -> float:
    """Minimum torus distance between a polyline and a set of points."""
    best = np.inf
    for a, b in zip(waypoints[:-1], waypoints[1:]):
        for p in points:
            # nearest lattice translate of p to the segment; candidates from 3x3 neighbours
            for k in (-1, 0, 1):
                for j in (-1, 0, 1):
                    q = p + k + j * complex(sigma)
                    d = b - a
                    if d == 0:
                        dist = abs(q - a)
                    else:
                        tpar = np.clip(((q - a) * np.conj(d)).real / abs(d) ** 2, 0.0, 1.0)
                        dist = abs(a + tpar * d - q)
                    best = min(best, dist)
    return best


def continue_sqrt(spec: QuadDiffSpec, path: BranchedPath, *, margin: float | None = None) -> list:
    """Values of sqrt(w) continued along ``path``; also stored on the path object.

    Raises :class:`ContinuationError` if the path passes within ``margin``
    (default: the spec's branch margin) of a zero or pole.
    """
    delta = spec.branch_margin() if margin is None else margin
    lifted = [reduce_to_cell(p, spec.sigma) for p in spec.points]
    if path_distance_to_points(path.waypoints, lifted, spec.sigma.sigma) < delta:
        raise ContinuationError("path passes within the branch-point margin")
    samples = continue_along(path.waypoints, evaluator(spec), path.initial_branch)
    path.samples = samples.t
    path.values = samples.sqrt_w
    return list(samples.sqrt_w)


def area(spec: QuadDiffSpec, tol: float = 1e-9) -> float:
    """Area of the flat metric |W| over the torus."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    cones = [(reduce_to_cell(r, spec.sigma), 0.5) for r in spec.zeros]
    cones += [(reduce_to_cell(s, spec.sigma), -0.5) for s in spec.poles]
    density = lambda z: np.abs(weight_data(spec, z, exclusion_radius=0.0)["w"])
    value, _, _ = adaptive_area(spec.sigma, density, cones, tol=tol)
    return value


def cone_leading_coefficients(spec: QuadDiffSpec):
    """(w'(R_k), Res_{S_i} w) from the theta series."""
    sig = spec.sigma
    m = spec.winding[1]
    th1p0 = theta1_all(0.0, sig)[1]
    a1 = []
    for k, r in enumerate(spec.zeros):
        v = spec.scale * np.exp(-2j * np.pi * m * r) * th1p0
        for j, rj in enumerate(spec.zeros):
            if j != k:
                v *= theta1_all(r - rj, sig)[0]
        for s in spec.poles:
            v /= theta1_all(r - s, sig)[0]
        a1.append(complex(v))
    b = []
    for i, s in enumerate(spec.poles):
        v = spec.scale * np.exp(-2j * np.pi * m * s) / th1p0
        for r in spec.zeros:
            v *= theta1_all(s - r, sig)[0]
        for j, sj in enumerate(spec.poles):
            if j != i:
                v /= theta1_all(s - sj, sig)[0]
        b.append(complex(v))
    return a1, b


def _richardson_zero(values, ratio=2.0):
    """Polynomial extrapolation to r = 0 of values at r0 / ratio^j (Neville tableau)."""
    T = list(values)
    n = len(T)
    for k in range(1, n):
        fac = ratio**k
        T = [(fac * T[j + 1] - T[j]) / (fac - 1) for j in range(len(T) - 1)]
    return T[0]


def _ray_limit(spec, point, coeff, kind, direction, r0, levels=5):
    """lim Z^2 / delta^p along a ray (p = 3 at a zero, p = 1 at a pole, inverted)."""
    ev = evaluator(spec)
    vals = []
    for j in range(levels):
        r = r0 / 2**j
        end = point + r * direction
        d = end - point
        s0 = np.sqrt(coeff * d) if kind == "zero" else np.sqrt(coeff / d)
        res = integrate_path([point, end], ev, lambda t, s, data: s, s0, start_kind=kind, start_coeff=coeff)
        Z = res.integrals[0]
        vals.append(Z * Z / d**3 if kind == "zero" else d / (Z * Z))
    return complex(_richardson_zero(vals))


def cone_values(spec: QuadDiffSpec, *, check: bool = True, tol: float = CONE_CHECK_TOL):
    """Leading coefficients f_k, h_i of v0 = dz in the distinguished parameters.

    f_k = ((4/9) w'(R_k))^(-1/3) and h_i = 1 / (4 Res_{S_i} w), principal
    branches.  With ``check`` each value is recomputed as a limit of the
    integrated primitive Z = int omega along a ray, extrapolated in the ray
    length, and the two must agree to ``tol`` (relative).
    """
    a1, b = cone_leading_coefficients(spec)
    f = [complex(((4.0 / 9.0) * a) ** (-1.0 / 3.0)) for a in a1]
    h = [complex(1.0 / (4.0 * bb)) for bb in b]
    if check:
        r0 = 0.02 * spec.min_separation()
        direction = np.exp(0.3j)
        for k, r in enumerate(spec.zeros):
            lim = _ray_limit(spec, r, a1[k], "zero", direction, r0)
            ref = f[k] ** -3
            if abs(lim - ref) > tol * abs(ref):
                raise InvariantError(f"cone value at zero {k}: series and ray limit differ by {abs(lim / ref - 1):.2e}")
        for i, s in enumerate(spec.poles):
            lim = _ray_limit(spec, s, b[i], "pole", direction, r0)
            if abs(lim - h[i]) > tol * abs(h[i]):
                raise InvariantError(f"cone value at pole {i}: series and ray limit differ by {abs(lim / h[i] - 1):.2e}")
    return f, h


def fundamental_eta_factor(spec: QuadDiffSpec) -> float:
    """Im(sigma) |eta(sigma)|^4, the smooth part of the determinant formula."""
    return spec.sigma.sigma.imag * abs(dedekind_eta(spec.sigma)) ** 4
