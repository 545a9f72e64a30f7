"""Spectral oracle: P1 finite elements for Laplacians of conformal metrics on tori.

For a metric m(z)|dz|^2 on C / (Z + sigma Z) the Laplacian is m^-1 times the
flat one, so the weak eigenproblem

    int grad(phi) . grad(psi) dx dy = lambda int m phi psi dx dy

has a metric-independent stiffness matrix and a weighted mass matrix.  The
mesh is a uniform periodic triangulation in the flat coordinate; conical
singularities only enter through the weight, which near a cone behaves like
|z - P|^(2 beta) and is integrated with a Duffy (collapsed-coordinate) rule
centred at the cone, which removes the singular factor exactly.

Determinant ratios use the heat-trace form of the zeta-regularized
determinant: for two metrics with identical heat-trace constant terms,

    ln(det_1 / det_2) = -int_0^oo (Theta_1(t) - Theta_2(t)) dt / t,

whose truncation at t0 is the sum of E1(lambda t0) over the two spectra.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import exp1

from .conical import FlatConicalMetric, det_formula, divisor_of_spec
from .elliptic import Modulus, as_modulus
from .errors import EigensolverError, InvariantError
from .qdiff import QuadDiffSpec, area as qd_area, weight

__all__ = [
    "DensityField",
    "SpectralMesh",
    "SpectrumResult",
    "build_mesh",
    "assemble",
    "spectrum",
    "exact_flat_spectrum",
    "epstein_zeta_derivative",
    "zeta_det_smooth",
    "heat_log_ratio",
    "det_ratio_conical",
    "polyakov_check",
    "polyakov_exponent",
    "bump_density",
    "convergence_order",
]

DENSE_LIMIT = 2000
MIN_ANGLE_DEG = 20.0
NEAR_CONE_CELLS = 2.0
_GL_REGULAR = 4
_GL_SINGULAR = 12


# --------------------------------------------------------------------------
# densities
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DensityField:
    """A doubly periodic conformal factor m(z) of the metric m |dz|^2.

    ``cones`` lists (point, beta) with m ~ |z - P|^(2 beta) near P; an empty
    list means the density is smooth.
    """

    sigma: Modulus
    func: object
    cones: tuple = ()
    label: str = ""

    def __call__(self, z):
        return np.asarray(self.func(np.asarray(z, dtype=complex)), dtype=float)

    def scaled(self, factor: float) -> "DensityField":
        f = self.func
        return DensityField(self.sigma, lambda z: factor * f(z), self.cones, self.label)

    @staticmethod
    def flat(sigma, area: float = 1.0) -> "DensityField":
        mod = as_modulus(sigma)
        c = area / mod.sigma.imag
        return DensityField(mod, lambda z: np.full(np.shape(z), c), (), "flat")

    @staticmethod
    def from_spec(spec: QuadDiffSpec, area: float | None = None, *, tol: float = 1e-9) -> "DensityField":
        """The metric |W|, rescaled to ``area`` when given."""
        factor = 1.0 if area is None else area / qd_area(spec, tol)
        div = divisor_of_spec(spec)
        return DensityField(
            spec.sigma,
            lambda z: factor * np.abs(weight(spec, z, exclusion_radius=0.0)),
            tuple(zip(div.points, div.orders)),
            "|W|",
        )

    @staticmethod
    def from_metric(metric: FlatConicalMetric) -> "DensityField":
        return DensityField(metric.sigma, metric.density, tuple(metric.cones()), "conical")


def _as_density(obj) -> DensityField:
    if isinstance(obj, DensityField):
        return obj
    if isinstance(obj, QuadDiffSpec):
        return DensityField.from_spec(obj)
    if isinstance(obj, FlatConicalMetric):
        return DensityField.from_metric(obj)
    raise TypeError("expected a DensityField, QuadDiffSpec or FlatConicalMetric")


def bump_density(sigma, amplitude: float = 0.3, center=None, width: float = 0.15) -> DensityField:
    """exp(2 phi) with a smooth periodic bump phi (sum of Gaussians over lattice images)."""
    mod = as_modulus(sigma)
    sig = mod.sigma
    c = 0.5 * (1 + sig) if center is None else complex(center)

    def phi(z):
        z = np.asarray(z, dtype=complex)
        out = np.zeros(z.shape)
        for a in range(-2, 3):
            for b in range(-2, 3):
                d = z - c - a - b * sig
                out = out + np.exp(-np.abs(d) ** 2 / (2 * width**2))
        return amplitude * out

    return DensityField(mod, lambda z: np.exp(2 * phi(z)), (), "bump")


# --------------------------------------------------------------------------
# mesh
# --------------------------------------------------------------------------

@dataclass
class SpectralMesh:
    """Uniform periodic triangulation of the cell spanned by 1 and sigma.

    Vertex (i, j) sits at (i / n1) + (j / n2) sigma; triangles store wrapped
    vertex indices together with the lattice offsets that unwrap them, which
    is the periodic identification.
    """

    sigma: Modulus
    n1: int
    n2: int
    vertices: np.ndarray  # complex, shape (n1 * n2,)
    triangles: np.ndarray  # int, shape (T, 3)
    offsets: np.ndarray  # complex lattice vectors, shape (T, 3)
    near_cone: np.ndarray = field(default=None)  # bool, shape (T,): triangles using the singular rule

    @property
    def dof(self) -> int:
        return len(self.vertices)

    def corners(self) -> np.ndarray:
        """Unwrapped corner positions, shape (T, 3)."""
        return self.vertices[self.triangles] + self.offsets

    def min_angle_deg(self) -> float:
        c = self.corners()
        best = 180.0
        for k in range(3):
            a = c[:, (k + 1) % 3] - c[:, k]
            b = c[:, (k + 2) % 3] - c[:, k]
            ang = np.degrees(np.abs(np.angle(b / a)))
            best = min(best, float(ang.min()))
        return best

    def to_dict(self) -> dict:
        return {
            "sigma": [self.sigma.sigma.real, self.sigma.sigma.imag],
            "n1": self.n1,
            "n2": self.n2,
            "vertices": [[v.real, v.imag] for v in self.vertices],
            "triangles": self.triangles.tolist(),
            "offsets": [[[o.real, o.imag] for o in row] for row in self.offsets],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def build_mesh(sigma, resolution: int) -> SpectralMesh:
    """Periodic mesh with ``resolution`` cells along 1 and about resolution |sigma| along sigma."""
    mod = as_modulus(sigma)
    sig = mod.sigma
    if resolution < 2:
        raise InvariantError("resolution must be at least 2")
    n1 = int(resolution)
    n2 = max(2, int(round(resolution * abs(sig))))
    I, J = np.meshgrid(np.arange(n1), np.arange(n2), indexing="ij")
    verts = (I / n1 + J * sig / n2).ravel()

    def idx(i, j):
        return (i % n1) * n2 + (j % n2)

    def off(i, j):
        return (i // n1) + (j // n2) * sig

    e1, e2 = 1 / n1, sig / n2
    short_main = abs(e1 + e2) <= abs(e2 - e1)
    i, j = I.ravel(), J.ravel()
    if short_main:
        tri_ij = [((0, 0), (1, 0), (1, 1)), ((0, 0), (1, 1), (0, 1))]
    else:
        tri_ij = [((0, 0), (1, 0), (0, 1)), ((1, 0), (1, 1), (0, 1))]
    tris, offs = [], []
    for pattern in tri_ij:
        tris.append(np.stack([idx(i + a, j + b) for a, b in pattern], axis=1))
        offs.append(np.stack([off(i + a, j + b) for a, b in pattern], axis=1))
    mesh = SpectralMesh(mod, n1, n2, verts, np.concatenate(tris), np.concatenate(offs).astype(complex))
    # orient counter-clockwise
    c = mesh.corners()
    cw = np.imag(np.conj(c[:, 1] - c[:, 0]) * (c[:, 2] - c[:, 0])) < 0
    mesh.triangles[cw] = mesh.triangles[cw][:, [0, 2, 1]]
    mesh.offsets[cw] = mesh.offsets[cw][:, [0, 2, 1]]
    if mesh.min_angle_deg() < MIN_ANGLE_DEG:
        raise EigensolverError(f"mesh quality: minimum angle {mesh.min_angle_deg():.1f} deg is below {MIN_ANGLE_DEG} deg")
    return mesh


def _reduced_sigma(sigma) -> Modulus:
    """The same lattice with Re(sigma) moved into [-1/2, 1/2]."""
    mod = as_modulus(sigma)
    s = mod.sigma
    return Modulus(complex(s.real - np.round(s.real), s.imag))


# --------------------------------------------------------------------------
# quadrature
# --------------------------------------------------------------------------

def _collapsed_rule(order: int):
    """Nodes (barycentric b1, b2 relative to the apex vertex 0) and weights on the unit triangle."""
    x, w = np.polynomial.legendre.leggauss(order)
    x = 0.5 * (x + 1)
    w = 0.5 * w
    U, V = np.meshgrid(x, x, indexing="ij")
    WU, WV = np.meshgrid(w, w, indexing="ij")
    # point = apex + u (edge1) + u v (edge2 - edge1); Jacobian u
    b1 = (U * (1 - V)).ravel()
    b2 = (U * V).ravel()
    weights = (WU * WV * U).ravel()
    return b1, b2, weights


def _closest_point_in_triangle(p, a, b, c):
    """Closest point of the triangle abc to p (p itself when inside)."""
    def bary(q):
        v0, v1, v2 = b - a, c - a, q - a
        d = np.imag(np.conj(v0) * v1)
        l1 = np.imag(np.conj(v2) * v1) / d
        l2 = np.imag(np.conj(v0) * v2) / d
        return l1, l2

    l1, l2 = bary(p)
    if l1 >= 0 and l2 >= 0 and l1 + l2 <= 1:
        return p
    best, bd = a, abs(p - a)
    for s, e in ((a, b), (b, c), (c, a)):
        d = e - s
        t = float(np.clip(np.real(np.conj(d) * (p - s)) / abs(d) ** 2, 0.0, 1.0))
        q = s + t * d
        if abs(p - q) < bd:
            best, bd = q, abs(p - q)
    return best


def _p1_values(corners, pts):
    """Barycentric coordinates of pts (array) in the triangle ``corners``."""
    a, b, c = corners
    v0, v1 = b - a, c - a
    d = np.imag(np.conj(v0) * v1)
    v2 = pts - a
    l1 = np.imag(np.conj(v2) * v1) / d
    l2 = np.imag(np.conj(v0) * v2) / d
    return np.stack([1 - l1 - l2, l1, l2])


def _singular_local_mass(density: DensityField, corners, apex, order=_GL_SINGULAR):
    """Weighted local mass matrix by Duffy rules on the sub-triangles with common apex."""
    b1, b2, w = _collapsed_rule(order)
    a, b, c = corners
    M = np.zeros((3, 3))
    for s, e in ((a, b), (b, c), (c, a)):
        area2 = np.imag(np.conj(s - apex) * (e - apex))
        if abs(area2) < 1e-14 * abs(np.imag(np.conj(b - a) * (c - a))):
            continue
        pts = apex + b1 * (s - apex) + b2 * (e - apex)
        m = density(pts)
        phi = _p1_values(corners, pts)
        M += abs(area2) * np.einsum("q,iq,jq->ij", w * m, phi, phi)
    return M


# --------------------------------------------------------------------------
# assembly
# --------------------------------------------------------------------------

def _mark_near_cones(mesh: SpectralMesh, cones) -> list:
    """For every cone, the triangles within NEAR_CONE_CELLS cell diameters, with the image used."""
    c = mesh.corners()
    cent = c.mean(axis=1)
    sig = mesh.sigma.sigma
    h = max(abs(1 / mesh.n1 + sig / mesh.n2), abs(1 / mesh.n1 - sig / mesh.n2))
    near = np.zeros(len(c), dtype=bool)
    hits = []
    for p, beta in cones:
        for a in (-1, 0, 1, 2):
            for b in (-1, 0, 1, 2):
                q = complex(p) + a + b * sig
                d = np.abs(cent - q)
                sel = np.nonzero(d < NEAR_CONE_CELLS * h)[0]
                for t in sel:
                    near[t] = True
                    hits.append((int(t), q))
    mesh.near_cone = near
    return hits


def assemble(mesh: SpectralMesh, density) -> tuple:
    """Flat stiffness matrix K and m-weighted mass matrix M (scipy CSR)."""
    density = _as_density(density)
    c = mesh.corners()
    T = len(c)
    # stiffness: grad phi_k = i (opposite edge) / (2 area) in complex notation
    e = np.stack([c[:, 2] - c[:, 1], c[:, 0] - c[:, 2], c[:, 1] - c[:, 0]], axis=1)
    area = 0.5 * np.imag(np.conj(c[:, 1] - c[:, 0]) * (c[:, 2] - c[:, 0]))
    Kloc = np.real(e[:, :, None] * np.conj(e[:, None, :])) / (4 * area[:, None, None])
    # mass: collapsed Gauss rule on every triangle, Duffy at cones
    b1, b2, w = _collapsed_rule(_GL_REGULAR)
    pts = c[:, 0:1] + b1[None, :] * (c[:, 1:2] - c[:, 0:1]) + b2[None, :] * (c[:, 2:3] - c[:, 0:1])
    phi = np.stack([1 - b1 - b2, b1, b2])
    m = density(pts)
    Mloc = 2 * area[:, None, None] * np.einsum("q,tq,iq,jq->tij", w, m, phi, phi)
    hits = _mark_near_cones(mesh, density.cones)
    redone = {}
    for t, q in hits:
        apex = _closest_point_in_triangle(q, *c[t])
        # several images may be near one triangle: the closest one governs the rule
        if t in redone and abs(redone[t][0] - q) <= abs(apex - q):
            continue
        redone[t] = (apex, q)
    for t, (apex, q) in redone.items():
        Mloc[t] = _singular_local_mass(density, c[t], apex)
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = mesh.dof
    K = sp.coo_matrix((Kloc.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    M = sp.coo_matrix((Mloc.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    if not np.all(np.isfinite(M.data)) or np.any(M.diagonal() <= 0):
        raise EigensolverError("weight is not positive and finite at the quadrature nodes")
    return K, M


# --------------------------------------------------------------------------
# eigenvalues
# --------------------------------------------------------------------------

@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray  # sorted, including lambda_0 ~ 0
    resolution: int
    dof: int
    area: float
    est_error: np.ndarray = None  # per eigenvalue; NaN when not estimated
    extrapolated: np.ndarray = None  # Richardson (h, h/2) values when estimated
    eigenvectors: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["index", "lambda", "est_error"])
        err = self.est_error if self.est_error is not None else np.full(len(self.eigenvalues), np.nan)
        for k, (lam, e) in enumerate(zip(self.eigenvalues, err)):
            wr.writerow([k, repr(float(lam)), repr(float(e))])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "resolution": self.resolution,
            "dof": self.dof,
            "area": self.area,
            "eigenvalues": [float(x) for x in self.eigenvalues],
            "est_error": None if self.est_error is None else [float(x) for x in self.est_error],
            "meta": self.meta,
        }


def _solve(K, M, k: int, seed: int = 0):
    n = K.shape[0]
    if k >= n:
        raise EigensolverError(f"requested {k} eigenvalues from {n} degrees of freedom")
    if n <= DENSE_LIMIT:
        vals, vecs = scipy.linalg.eigh(K.toarray(), M.toarray(), subset_by_index=[0, k - 1])
        return vals, vecs
    scale = float(K.diagonal().mean() / M.diagonal().mean())
    shift = -1e-3 * scale
    v0 = np.random.default_rng(seed).standard_normal(n)
    try:
        op = spla.splu((K - shift * M).tocsc())
        OPinv = spla.LinearOperator((n, n), matvec=op.solve, dtype=float)
        vals, vecs = spla.eigsh(K, k=k, M=M, sigma=shift, which="LM", OPinv=OPinv, v0=v0, tol=1e-12)
    except (spla.ArpackNoConvergence, RuntimeError) as exc:
        raise EigensolverError(f"shift-invert Lanczos failed: {exc}") from exc
    order = np.argsort(vals)
    return vals[order], vecs[:, order]


def _mesh_for(density: DensityField, resolution: int) -> SpectralMesh:
    return build_mesh(_reduced_sigma(density.sigma), resolution)


def _area_from_mass(M) -> float:
    return float(M.sum())


def spectrum(
    metric,
    resolution: int,
    n: int,
    *,
    estimate_error: bool = True,
    seed: int = 0,
    keep_vectors: bool = False,
) -> SpectrumResult:
    """First ``n`` nonzero eigenvalues (plus lambda_0) of the Laplacian of ``metric``.

    ``metric`` is a QuadDiffSpec (metric |W|), a FlatConicalMetric or a
    DensityField.  With ``estimate_error`` the problem is also solved at half
    the resolution; est_error = |lambda_h - lambda_2h| / 3 and the Richardson
    values (4 lambda_h - lambda_2h) / 3 are stored.
    """
    density = _as_density(metric)
    mesh = _mesh_for(density, resolution)
    K, M = assemble(mesh, density)
    vals, vecs = _solve(K, M, n + 1, seed)
    if abs(vals[0]) > 1e-8 * max(abs(vals[1]), 1.0):
        raise EigensolverError(f"lowest eigenvalue {vals[0]:.3e} is not the zero mode")
    res = SpectrumResult(
        vals,
        resolution,
        mesh.dof,
        _area_from_mass(M),
        meta={"lambda0": float(vals[0]), "sigma": [density.sigma.sigma.real, density.sigma.sigma.imag], "label": density.label},
    )
    if keep_vectors:
        res.eigenvectors = vecs
    if estimate_error:
        coarse_mesh = _mesh_for(density, resolution // 2)
        Kc, Mc = assemble(coarse_mesh, density)
        vc, _ = _solve(Kc, Mc, n + 1, seed)
        res.est_error = np.abs(vals - vc) / 3
        res.extrapolated = (4 * vals - vc) / 3
        res.extrapolated[0] = 0.0
    else:
        res.est_error = np.full(len(vals), np.nan)
    return res


def exact_flat_spectrum(sigma, area: float, n: int) -> SpectrumResult:
    """First n + 1 eigenvalues (lambda_0 = 0 included, with multiplicity) of the flat torus.

    Eigenvalues are 4 pi^2 |p sigma - q|^2 / (Im(sigma) Area) over integer pairs (p, q).
    """
    if n < 1:
        raise InvariantError("n must be at least 1")
    if not area > 0:
        raise InvariantError("area must be positive")
    sig = as_modulus(sigma).sigma
    R = 2
    while True:
        p, q = np.meshgrid(np.arange(-R, R + 1), np.arange(-R * 4 - 4, R * 4 + 5), indexing="ij")
        norms = np.abs(p * sig - q).ravel() ** 2
        norms.sort()
        # the enumeration box contains the disc |p sigma - q| <= R Im(sigma)
        radius2 = (R * sig.imag) ** 2
        if len(norms) > n and norms[n] < radius2 and (R * 4 + 4) > R * abs(sig.real) + R * sig.imag:
            break
        R *= 2
    vals = 4 * np.pi**2 * norms[: n + 1] / (sig.imag * area)
    return SpectrumResult(vals, 0, 0, float(area), np.zeros(n + 1), vals.copy(), meta={"exact": True})


def convergence_order(resolutions, errors) -> float:
    """Least-squares slope of log(error) against log(mesh size 1 / resolution)."""
    h = 1.0 / np.asarray(resolutions, dtype=float)
    return float(np.polyfit(np.log(h), np.log(np.asarray(errors, dtype=float)), 1)[0])


# --------------------------------------------------------------------------
# smooth determinants
# --------------------------------------------------------------------------

def _lattice_norms(A, cutoff):
    """Values x^T A x over nonzero integer x with value <= cutoff (A is 2x2 positive definite)."""
    lam_min = np.linalg.eigvalsh(A)[0]
    R = int(np.ceil(np.sqrt(cutoff / lam_min))) + 1
    p, q = np.meshgrid(np.arange(-R, R + 1), np.arange(-R, R + 1), indexing="ij")
    p, q = p.ravel(), q.ravel()
    keep = (p != 0) | (q != 0)
    p, q = p[keep], q[keep]
    vals = A[0, 0] * p * p + 2 * A[0, 1] * p * q + A[1, 1] * q * q
    return vals[vals <= cutoff]


def epstein_zeta_derivative(sigma, split: float = 1.0) -> float:
    """Z'(0) for Z(s) = sum' |p sigma - q|^(-2 s), by the theta-transform split of the Mellin integral.

    Gamma(s) Z(s) = sum' Q^-s Gamma(s, t0 Q) + (pi / sqrt D) sum' (pi^2 Q*)^(s-1) Gamma(1 - s, pi^2 Q* / t0)
                    + pi / (sqrt(D) t0^(1 - s) (s - 1)) - t0^s / s,
    with Q the form |p sigma - q|^2, D = det Q and Q* the dual form.  At s = 0
    this gives Z(0) = -1 and Z'(0) = F(0) - gamma + ln(t0), where F is the
    regular part.  ``split`` is t0; the result does not depend on it.
    """
    sig = as_modulus(sigma).sigma
    A = np.array([[abs(sig) ** 2, -sig.real], [-sig.real, 1.0]])
    D = float(np.linalg.det(A))
    Ainv = np.linalg.inv(A)
    t0 = float(split)
    cut = 60.0
    Q = _lattice_norms(A, cut / t0)
    Qs = _lattice_norms(Ainv, cut * t0 / np.pi**2)
    sD = np.sqrt(D)
    # s -> 0 expansions: Gamma(s, x) -> E1(x); (pi^2 Q*)^(s-1) Gamma(1-s, y) -> e^-y / (pi^2 Q*)
    F0 = float(np.sum(exp1(t0 * Q)))
    F0 += float(np.pi / sD * np.sum(np.exp(-np.pi**2 * Qs / t0) / (np.pi**2 * Qs)))
    F0 += -np.pi / (sD * t0)
    # -t0^s / s = -1/s - ln(t0) + O(s)
    F0 += -np.log(t0)
    return float(F0 - np.euler_gamma)


def zeta_det_smooth(sigma, area: float | None = None, split: float = 1.0) -> float:
    """Zeta-regularized determinant (zero mode excluded) of the flat torus metric.

    The default area is Im(sigma), the metric |v0|^2.  The eigenvalues are
    c |p sigma - q|^2 with c = 4 pi^2 / (Im(sigma) Area), so
    zeta'(0) = -ln(c) Z(0) + Z'(0) = ln(c) + Z'(0) and det = exp(-zeta'(0)).
    """
    sig = as_modulus(sigma).sigma
    A = sig.imag if area is None else float(area)
    if not A > 0:
        raise InvariantError("area must be positive")
    c = 4 * np.pi**2 / (sig.imag * A)
    return float(np.exp(-np.log(c) - epstein_zeta_derivative(sig, split)))


# --------------------------------------------------------------------------
# determinant ratios
# --------------------------------------------------------------------------

def heat_log_ratio(lam1, lam2, t0: float) -> float:
    """-int_{t0}^oo (Theta_1 - Theta_2) dt / t from two truncated spectra (zero modes dropped)."""
    l1 = np.asarray(lam1, dtype=float)
    l2 = np.asarray(lam2, dtype=float)
    l1 = l1[l1 > 0]
    l2 = l2[l2 > 0]
    k = min(len(l1), len(l2))
    return float(np.sum(exp1(l2[:k] * t0)) - np.sum(exp1(l1[:k] * t0)))


@dataclass
class DetRatioResult:
    ratio: float  # det_1 / det_2 from the spectra
    log_ratio: float
    t0: float
    profile: list  # (t0, log ratio estimate) along the cutoff scan
    spread: float  # max deviation of the estimates in the scan
    n: int
    resolution: int
    formula_ratio: float | None = None
    mismatch: float | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


SCAN = 2.0 ** np.arange(3, 7.01, 0.25)  # cutoffs t0 = x / lambda_n


def _stationary_estimate(profile):
    """Value where the cutoff profile is flattest, and the change over one octave around it."""
    x = np.array([p[0] for p in profile])
    F = np.array([p[1] for p in profile])
    dF = np.abs(np.diff(F))
    k = int(np.argmin(dF))
    value = 0.5 * (F[k] + F[k + 1])
    lo, hi = max(k - 4, 0), min(k + 5, len(F) - 1)
    return float(value), float(np.max(np.abs(F[lo : hi + 1] - value))), float(np.sqrt(x[k] * x[k + 1]))


def det_ratio_conical(
    spec1: QuadDiffSpec,
    spec2: QuadDiffSpec,
    n: int = 300,
    resolution: int = 128,
    *,
    area: float = 1.0,
    with_formula: bool = True,
) -> DetRatioResult:
    """det(Delta_1) / det(Delta_2) for the |W| metrics normalised to equal ``area``.

    Matched cone-angle multisets (same L) and areas make the heat-trace
    constant terms agree, so the log ratio is the heat-trace integral above,
    whose integrand is exponentially small as t -> 0.  Eigenvalues are
    Richardson-extrapolated in the mesh size (resolution and resolution / 2).
    The truncated integral is scanned over cutoffs t0 = x / lambda_n: for
    small x the discretization error of the high eigenvalues dominates,
    for large x the neglected small-t part does, and the estimate is taken
    where the profile is stationary.
    """
    if spec1.L != spec2.L:
        raise InvariantError("the two surfaces must have the same cone angles (same L)")
    if spec1 == spec2:
        res = DetRatioResult(1.0, 0.0, 0.0, [], 0.0, n, resolution)
        if with_formula:
            res.formula_ratio, res.mismatch = 1.0, 0.0
        return res
    d1 = DensityField.from_spec(spec1, area)
    d2 = DensityField.from_spec(spec2, area)
    s1 = spectrum(d1, resolution, n)
    s2 = spectrum(d2, resolution, n)
    lam1, lam2 = s1.extrapolated, s2.extrapolated
    lam_n = min(lam1[-1], lam2[-1])
    profile = [(float(x), heat_log_ratio(lam1, lam2, x / lam_n)) for x in SCAN]
    log_ratio, spread, x_star = _stationary_estimate(profile)
    if not np.isfinite(log_ratio):
        raise EigensolverError("determinant ratio extrapolation is not finite")
    res = DetRatioResult(float(np.exp(log_ratio)), log_ratio, x_star / lam_n, profile, spread, n, resolution)
    if with_formula:
        D1 = det_formula(spec1.sigma, divisor_of_spec(spec1), area)
        D2 = det_formula(spec2.sigma, divisor_of_spec(spec2), area)
        res.formula_ratio = D1 / D2
        res.mismatch = abs(res.ratio / res.formula_ratio - 1)
    return res


# --------------------------------------------------------------------------
# Polyakov
# --------------------------------------------------------------------------

def _spectral_grid(sigma, n: int):
    sig = as_modulus(sigma).sigma
    s = np.arange(n) / n
    S, U = np.meshgrid(s, s, indexing="ij")
    return S + U * sig


def _laplacian_periodic(f, sigma):
    """Flat Laplacian of a periodic sample grid f(s, u) on z = s + u sigma (spectral)."""
    sig = as_modulus(sigma).sigma
    n = f.shape[0]
    k = np.fft.fftfreq(n, d=1.0 / n) * 2j * np.pi
    Ks, Ku = np.meshgrid(k, k, indexing="ij")
    Dx = Ks
    Dy = (Ku - sig.real * Ks) / sig.imag
    return np.real(np.fft.ifft2((Dx**2 + Dy**2) * np.fft.fft2(f)))


def polyakov_exponent(m0: DensityField, m1: DensityField, grid: int = 256) -> float:
    """(1/3 pi) int ln(rho_1/rho_0) d_z d_zbar ln(rho_1 rho_0) dx dy with rho = m^(-1/2).

    For the metrics m |dz|^2 this equals (1 / 48 pi) int ln(m1/m0) Lap ln(m1 m0) dx dy.
    """
    sig = as_modulus(m0.sigma).sigma
    Z = _spectral_grid(sig, grid)
    l0 = np.log(m0(Z))
    l1 = np.log(m1(Z))
    integrand = (l1 - l0) * _laplacian_periodic(l1 + l0, sig)
    return float(integrand.mean() * sig.imag / (48 * np.pi))


def _area_spectral(m: DensityField, grid: int = 256) -> float:
    sig = as_modulus(m.sigma).sigma
    return float(m(_spectral_grid(sig, grid)).mean() * sig.imag)


def polyakov_check(
    rho0: DensityField,
    rho1: DensityField,
    resolution: int = 128,
    n: int = 300,
    *,
    tol: float = 0.01,
):
    """Spectral determinant ratio of two smooth metrics against the Polyakov formula.

    The spectral side uses matched truncation (same n, same cutoffs) after
    rescaling the second metric to the area of the first, so that the
    t^-1 and constant heat-trace terms cancel.  The remaining difference is
    O(t) at small t, so the log ratio is the intercept of a straight-line
    fit of the cutoff profile over t0 = x / lambda_n, 16 <= x <= 64.
    """
    from .variational import VerificationEntry, VerificationReport

    for m in (rho0, rho1):
        if m.cones:
            raise InvariantError("the Polyakov check needs smooth densities")
    A0, A1 = _area_spectral(rho0), _area_spectral(rho1)
    expo = polyakov_exponent(rho0, rho1)
    predicted = A1 / A0 * np.exp(expo)
    s0 = spectrum(rho0, resolution, n)
    s1 = spectrum(rho1, resolution, n)
    lam0 = s0.extrapolated
    lam1 = s1.extrapolated * (A1 / A0)
    lam_n = min(lam0[-1], lam1[-1])
    xs = 2.0 ** np.arange(4, 6.01, 0.25)
    ts = xs / lam_n
    F = np.array([heat_log_ratio(lam1, lam0, t) for t in ts])
    slope, intercept = np.polyfit(ts, F, 1)
    # a torus has zeta(0) = -1, so det scales like the metric: restore the area ratio
    ratio = float(np.exp(intercept) * A1 / A0)
    rel = abs(ratio / predicted - 1)
    fit_resid = float(np.max(np.abs(F - (intercept + slope * ts))))
    est = max(fit_resid, float(np.max(s0.est_error[1:21] / lam0[1:21])), float(np.max(s1.est_error[1:21] / s1.extrapolated[1:21])))
    entry = VerificationEntry("polyakov", "det ratio", complex(ratio), complex(predicted), abs(ratio - predicted), rel, float(ts[0]), tol, bool(rel < tol))
    info = {
        "exponent": expo,
        "area_ratio": A1 / A0,
        "n": n,
        "resolution": resolution,
        "cutoffs": ts.tolist(),
        "profile": F.tolist(),
        "fit_residual": fit_resid,
        "error_estimate": est,
        "insufficient_resolution": bool(est > tol),
    }
    return VerificationReport("polyakov", [entry], info)
