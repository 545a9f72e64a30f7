"""Flat conical metrics on a torus and the closed-form determinant functionals.

For a divisor sum_k beta_k P_k with sum beta_k = 0 the flat metric with cone
angle 2 pi (beta_k + 1) at P_k is, up to homothety,

    m(z) = K * prod_k |theta1(z - P_k)|^(2 beta_k) * exp(4 pi Im(z) sum_k beta_k Im(P_k) / Im(sigma)).

The exponential restores single-valuedness: under z -> z + sigma the theta
product picks up exp(-4 pi sum beta_k Im P_k), which it cancels exactly.
Near a cone point m = |g(0)|^2 |z - P_k|^(2 beta_k) (1 + O(z - P_k)), and the
coordinate zeta with m = |zeta|^(2 beta) |dzeta|^2 has |dz / dzeta| = |g(0)|^(-1/(beta + 1)).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .elliptic import (
    EXCLUSION_RADIUS,
    Modulus,
    _lattice_distance,
    as_modulus,
    dedekind_eta,
    reduce_to_cell,
    theta1_all,
)
from .errors import InvariantError, LatticeProximityError
from .qdiff import QuadDiffSpec, area as qd_area, complex_from_json, complex_to_json, cone_values
from .quadrature import adaptive_area

__all__ = [
    "ConicalDivisor",
    "FlatConicalMetric",
    "troyanov_metric",
    "cone_f_values",
    "det_formula",
    "det_formula_from_metric",
    "tau",
    "divisor_of_spec",
]

BETA_SUM_TOL = 1e-12
RAY_CHECK_TOL = 1e-7


@dataclass(frozen=True)
class ConicalDivisor:
    """Cone points P_k with orders beta_k > -1 summing to zero."""

    points: tuple = ()
    orders: tuple = ()

    def __post_init__(self):
        pts = tuple(complex(p) for p in self.points)
        betas = tuple(float(b) for b in self.orders)
        if len(pts) != len(betas):
            raise InvariantError("points and orders must have the same length")
        if any(not np.isfinite(b) for b in betas) or any(not np.isfinite(abs(p)) for p in pts):
            raise InvariantError("divisor contains non-finite values")
        if any(b <= -1 for b in betas):
            raise InvariantError("cone orders must satisfy beta > -1")
        if abs(sum(betas)) > BETA_SUM_TOL * max(1.0, sum(abs(b) for b in betas)):
            raise InvariantError(f"orders must sum to zero on a torus, got {sum(betas):.3e}")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "orders", betas)

    def __len__(self):
        return len(self.points)

    def check_distinct(self, sigma):
        mod = as_modulus(sigma)
        for i in range(len(self.points)):
            for j in range(i + 1, len(self.points)):
                d = reduce_to_cell(self.points[i] - self.points[j], mod)
                if _lattice_distance(d, mod) < EXCLUSION_RADIUS:
                    raise InvariantError(f"cone points {i} and {j} coincide mod the lattice")

    def to_dict(self, sigma) -> dict:
        return {
            "sigma": complex_to_json(as_modulus(sigma).sigma),
            "points": [complex_to_json(p) for p in self.points],
            "orders": list(self.orders),
        }

    @staticmethod
    def from_dict(d: dict):
        """Returns (Modulus, ConicalDivisor)."""
        unknown = set(d) - {"sigma", "points", "orders"}
        if unknown:
            raise InvariantError(f"unknown divisor keys: {sorted(unknown)}")
        if "sigma" not in d:
            raise InvariantError("divisor file needs sigma")
        mod = Modulus(complex_from_json(d["sigma"]))
        div = ConicalDivisor(
            tuple(complex_from_json(p) for p in d.get("points", [])),
            tuple(float(b) for b in d.get("orders", [])),
        )
        div.check_distinct(mod)
        return mod, div

    def to_json(self, sigma) -> str:
        return json.dumps(self.to_dict(sigma))


def divisor_of_spec(spec: QuadDiffSpec) -> ConicalDivisor:
    """beta = +1/2 at the zeros and -1/2 at the poles of W."""
    return ConicalDivisor(spec.zeros + spec.poles, (0.5,) * spec.L + (-0.5,) * spec.L)


@dataclass(frozen=True)
class FlatConicalMetric:
    sigma: Modulus
    divisor: ConicalDivisor
    log_scale: float  # log K
    slope: float = field(init=False)  # coefficient of Im z in the exponential correction

    def __post_init__(self):
        b = np.array(self.divisor.orders)
        p = np.array(self.divisor.points, dtype=complex)
        slope = 4 * np.pi * float(np.sum(b * p.imag)) / self.sigma.sigma.imag if len(b) else 0.0
        object.__setattr__(self, "slope", slope)

    def log_density(self, z, *, exclusion_radius: float = 0.0):
        z = np.asarray(z, dtype=complex)
        out = np.full(z.shape, self.log_scale) + self.slope * z.imag
        for p, beta in zip(self.divisor.points, self.divisor.orders):
            if exclusion_radius > 0 and np.any(
                _lattice_distance(reduce_to_cell(z - p, self.sigma), self.sigma) < exclusion_radius
            ):
                raise LatticeProximityError("density evaluated at a cone point")
            out = out + 2 * beta * np.log(np.abs(theta1_all(z - p, self.sigma)[0]))
        return out

    def density(self, z):
        """Conformal factor m(z) of the metric m |dz|^2."""
        out = np.exp(self.log_density(z))
        return out[()] if np.ndim(out) == 0 else out

    def cones(self):
        return [(complex(reduce_to_cell(p, self.sigma)), b) for p, b in zip(self.divisor.points, self.divisor.orders)]

    def area(self, tol: float = 1e-10) -> float:
        if len(self.divisor) == 0:
            return float(np.exp(self.log_scale) * self.sigma.sigma.imag)
        value, _, _ = adaptive_area(self.sigma, self.density, self.cones(), tol=tol)
        return value

    def rescaled(self, factor: float) -> "FlatConicalMetric":
        """The metric factor * m (areas multiply by factor)."""
        return FlatConicalMetric(self.sigma, self.divisor, self.log_scale + float(np.log(factor)))

    def local_factor_sq(self, k: int) -> float:
        """|g(0)|^2 = lim m(z) / |z - P_k|^(2 beta_k) from the theta series."""
        pk = self.divisor.points[k]
        val = self.log_scale + self.slope * pk.imag
        for j, (p, beta) in enumerate(zip(self.divisor.points, self.divisor.orders)):
            if j == k:
                val += 2 * beta * np.log(abs(theta1_all(0.0, self.sigma)[1]))
            else:
                val += 2 * beta * np.log(abs(theta1_all(pk - p, self.sigma)[0]))
        return float(np.exp(val))

    def sample_grid(self, n: int = 64):
        """Rows (x, y, density) on an n x n grid over the cell, skipping cone points."""
        s = (np.arange(n) + 0.5) / n
        S, U = np.meshgrid(s, s, indexing="ij")
        Z = (S + U * self.sigma.sigma).ravel()
        return np.column_stack([Z.real, Z.imag, self.density(Z)])


def troyanov_metric(sigma, divisor: ConicalDivisor, area: float = 1.0, *, tol: float = 1e-10) -> FlatConicalMetric:
    """The flat metric with the given cone divisor, normalised to ``area``."""
    mod = as_modulus(sigma)
    divisor.check_distinct(mod)
    if not area > 0:
        raise InvariantError("area must be positive")
    raw = FlatConicalMetric(mod, divisor, 0.0)
    return raw.rescaled(area / raw.area(tol))


def _radial_limit(metric: FlatConicalMetric, k: int, r0: float, levels: int = 5, direction=np.exp(0.7j)):
    pk = metric.divisor.points[k]
    beta = metric.divisor.orders[k]
    vals = []
    for j in range(levels):
        r = r0 / 2**j
        vals.append(metric.density(pk + r * direction) / r ** (2 * beta))
    T = vals
    for lev in range(1, levels):
        fac = 2.0**lev
        T = [(fac * T[i + 1] - T[i]) / (fac - 1) for i in range(len(T) - 1)]
    return T[0]


def cone_f_values(metric: FlatConicalMetric, *, check: bool = True, tol: float = RAY_CHECK_TOL) -> list:
    """f_k = |g(0)|^(-1/(beta_k + 1)), the coefficient of dz in the distinguished parameter.

    Only the modulus is determined by the metric; the values are returned as
    positive reals (complex type), which is the phase convention of this
    package.  With ``check`` each |g(0)|^2 is re-derived as a radial limit of
    the density (extrapolated in the radius) and must agree to ``tol``.
    """
    out = []
    pts = metric.divisor.points
    for k, beta in enumerate(metric.divisor.orders):
        g2 = metric.local_factor_sq(k)
        if check:
            dmin = min(
                [float(_lattice_distance(reduce_to_cell(pts[k] - q, metric.sigma), metric.sigma)) for j, q in enumerate(pts) if j != k]
                + [1.0]
            )
            lim = _radial_limit(metric, k, 0.01 * dmin)
            if abs(lim - g2) > tol * g2:
                raise InvariantError(f"cone {k}: local factor and radial limit differ by {abs(lim / g2 - 1):.2e}")
        out.append(complex(g2 ** (-0.5 / (beta + 1))))
    return out


def det_formula_from_metric(metric: FlatConicalMetric, area: float, f_values=None) -> float:
    """Im(sigma) * Area * |eta|^4 * prod |f_k|^(-beta_k / 6)."""
    if not area > 0:
        raise InvariantError("area must be positive")
    f = cone_f_values(metric) if f_values is None else f_values
    sig = metric.sigma
    val = sig.sigma.imag * area * abs(dedekind_eta(sig)) ** 4
    log_prod = sum(-beta / 6 * np.log(abs(fk)) for fk, beta in zip(f, metric.divisor.orders))
    return float(val * np.exp(log_prod))


def det_formula(sigma, divisor: ConicalDivisor, area: float, *, tol: float = 1e-10) -> float:
    """Determinant of the Laplacian of the flat conical metric of total ``area``, up to a constant.

    The constant depends only on the cone orders, so ratios between
    surfaces with the same orders are meaningful.
    """
    metric = troyanov_metric(sigma, divisor, area, tol=tol)
    return det_formula_from_metric(metric, area)


def tau(spec: QuadDiffSpec, *, check: bool = True):
    """(tau^24, |tau|) with tau^24 = prod h_i / prod f_k."""
    f, h = cone_values(spec, check=check)
    t24 = complex(np.prod(h) / np.prod(f))
    return t24, abs(t24) ** (1.0 / 24.0)


def spec_area(spec: QuadDiffSpec, tol: float = 1e-10) -> float:
    return qd_area(spec, tol)
