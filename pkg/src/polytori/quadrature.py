"""Area integrals of conical densities over the fundamental parallelogram.

The density m(z) behaves like |z - P|^{2 beta} near each cone point P.  We
split it with a smooth radial partition of unity chi_P:

* m * (1 - sum chi_P) is smooth and doubly periodic, so the trapezoidal rule on
  a uniform (s, u) grid (z = s + u sigma) converges super-algebraically;
* m * chi_P is integrated in polar coordinates around P.  On the inner disk
  (chi = 1) Gauss-Jacobi nodes carry the weight r^{2 beta + 1} exactly; on the
  transition annulus plain Gauss-Legendre is used.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy.special import roots_jacobi

from .elliptic import as_modulus, reduce_to_cell
from .errors import QuadratureError


def _smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    x = np.clip(x, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        f = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        g = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return f / (f + g)


def cutoff(r, r_in, r_out):
    """Radial cutoff equal to 1 for r <= r_in and 0 for r >= r_out."""
    return _smooth_step((r_out - r) / (r_out - r_in))


def torus_offsets(z, p, sigma):
    """z - p moved by the lattice vector that makes it shortest."""
    mod = as_modulus(sigma)
    d = reduce_to_cell(np.asarray(z, dtype=complex) - p, mod)
    best = np.array(d, dtype=complex)
    for m in (-1, 0, 1):
        for n in (-1, 0, 1):
            cand = d - n - m * mod.sigma
            best = np.where(np.abs(cand) < np.abs(best), cand, best)
    return best[()] if best.ndim == 0 else best


def default_cone_radius(points: Sequence[complex], sigma) -> float:
    mod = as_modulus(sigma)
    pts = list(points)
    cell = min(1.0, mod.sigma.imag, abs(1 + mod.sigma), abs(1 - mod.sigma))
    dmin = cell
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            dmin = min(dmin, abs(torus_offsets(pts[i], pts[j], mod)))
    return 0.49 * dmin


def integrate_conical_density(
    sigma,
    density: Callable[[np.ndarray], np.ndarray],
    cones: Sequence[tuple[complex, float]],
    n_grid: int = 256,
    *,
    cone_radius: float | None = None,
    n_radial: int = 32,
    n_angular: int = 96,
    inner_fraction: float = 0.2,
) -> float:
    """Integral of ``density`` over the torus with respect to dx dy."""
    mod = as_modulus(sigma)
    pts = [complex(p) for p, _ in cones]
    r_out = default_cone_radius(pts, mod) if cone_radius is None else cone_radius
    r_in = inner_fraction * r_out

    s = (np.arange(n_grid) + 0.5) / n_grid
    S, U = np.meshgrid(s, s, indexing="ij")
    Z = (S + U * mod.sigma).ravel()
    chi = np.zeros(Z.shape)
    for p in pts:
        chi += cutoff(np.abs(torus_offsets(Z, p, mod)), r_in, r_out)
    keep = chi < 1.0
    smooth_part = np.zeros(Z.shape)
    smooth_part[keep] = density(Z[keep]) * (1.0 - chi[keep])
    total = smooth_part.sum() * mod.sigma.imag / n_grid**2

    phi = 2 * np.pi * np.arange(n_angular) / n_angular
    gl_x, gl_w = np.polynomial.legendre.leggauss(n_radial)
    for p, beta in cones:
        if beta <= -1:
            raise QuadratureError(f"cone order {beta} <= -1 is not integrable")
        # inner disk: int_0^{r_in} r^{2b+1} G dr with x = 2r/r_in - 1
        xj, wj = roots_jacobi(n_radial, 0.0, 2 * beta + 1)
        r = 0.5 * r_in * (xj + 1)
        R, PHI = np.meshgrid(r, phi, indexing="ij")
        zz = p + R * np.exp(1j * PHI)
        g = density(zz.ravel()).reshape(R.shape) / R ** (2 * beta)
        radial = g.mean(axis=1) * 2 * np.pi
        total += (0.5 * r_in) ** (2 * beta + 2) * np.dot(wj, radial)
        # transition annulus
        r = r_in + 0.5 * (r_out - r_in) * (gl_x + 1)
        R, PHI = np.meshgrid(r, phi, indexing="ij")
        zz = p + R * np.exp(1j * PHI)
        vals = density(zz.ravel()).reshape(R.shape) * cutoff(R, r_in, r_out) * R
        total += 0.5 * (r_out - r_in) * np.dot(gl_w, vals.mean(axis=1) * 2 * np.pi)
    return float(total)


def adaptive_area(sigma, density, cones, tol: float = 1e-9, n_start: int = 64, n_max: int = 2048) -> tuple[float, float, int]:
    """Double the grid until two successive estimates agree to ``tol`` (relative).

    Returns (value, estimated relative error, final grid size).
    """
    n = n_start
    prev = integrate_conical_density(sigma, density, cones, n)
    while n < n_max:
        n *= 2
        cur = integrate_conical_density(sigma, density, cones, n)
        err = abs(cur - prev) / abs(cur)
        if err < tol:
            return cur, err, n
        prev = cur
    raise QuadratureError(f"area quadrature did not reach tol={tol} with grid {n_max}")
