"""Theta, eta and Weierstrass functions on the torus C/(Z + sigma Z).

Conventions: nome q = exp(i pi sigma), and

    theta1(z) = 2 sum_{n>=0} (-1)^n q^{(n+1/2)^2} sin((2n+1) pi z),
    eta(sigma) = q^{1/12} prod_{n>=1} (1 - q^{2n}).

The Weierstrass function is obtained from theta quotients,

    wp(z) = -(log theta1)''(z) + 4 pi i eta_tilde(sigma),

which follows from theta1'''(0) / theta1'(0) = 12 pi i eta_tilde (heat equation
for theta1).  Consequently the canonical bidifferential of the torus is simply
``-(log theta1)''(x - y)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvariantError, LatticeProximityError, SeriesDivergenceError

__all__ = [
    "Modulus",
    "as_modulus",
    "theta1",
    "theta1_all",
    "log_theta1_derivatives",
    "dedekind_eta",
    "eta_tilde",
    "eisenstein_e2",
    "weierstrass_p",
    "weierstrass_p_lattice_sum",
    "bergman_B",
    "bergman_diagonal",
    "bergman_projective_connection",
    "reduce_to_cell",
    "EXCLUSION_RADIUS",
]

SERIES_RTOL = 1e-16
MAX_TERMS = 10_000
EXCLUSION_RADIUS = 1e-6


@dataclass(frozen=True)
class Modulus:
    """A point of the upper half-plane fixing the lattice Z + sigma Z."""

    sigma: complex

    def __post_init__(self):
        s = complex(self.sigma)
        if not (np.isfinite(s.real) and np.isfinite(s.imag)):
            raise InvariantError(f"sigma must be finite, got {s!r}")
        if s.imag <= 0:
            raise InvariantError(f"Im(sigma) must be > 0, got sigma={s!r}")
        object.__setattr__(self, "sigma", s)

    @property
    def nome(self) -> complex:
        return complex(np.exp(1j * np.pi * self.sigma))

    @property
    def lattice(self) -> tuple[complex, complex]:
        return (1.0 + 0j, self.sigma)

    def __complex__(self):
        return self.sigma


def as_modulus(sigma) -> Modulus:
    if isinstance(sigma, Modulus):
        return sigma
    return Modulus(complex(sigma))


def _check_nome(q: complex):
    if not abs(q) < 1:
        raise SeriesDivergenceError(f"|q| = {abs(q)} >= 1: theta series diverges")


def theta1(z, sigma, deriv_order: int = 0):
    """d-th z-derivative of theta1(z; sigma), d in {0, 1, 2, 3}.

    Works on scalars or arrays.  The series is summed until the next term is
    below ``1e-16`` times the partial sum (hard cap of 10^4 terms).
    """
    if deriv_order not in (0, 1, 2, 3):
        raise ValueError(f"deriv_order must be 0..3, got {deriv_order}")
    mod = as_modulus(sigma)
    q = mod.nome
    _check_nome(q)
    z = np.asarray(z, dtype=complex)
    total = np.zeros_like(z)
    log_abs_q = np.log(abs(q))
    for n in range(MAX_TERMS):
        k = 2 * n + 1
        coef = 2.0 * (-1) ** n * np.exp(1j * np.pi * mod.sigma * (n + 0.5) ** 2) * (k * np.pi) ** deriv_order
        term = coef * np.sin(k * np.pi * z + deriv_order * np.pi / 2)
        total = total + term
        # magnitude bound of the next term, used as the stopping rule
        kn = k + 2
        nxt = (
            2.0
            * np.exp(log_abs_q * (n + 1.5) ** 2 + kn * np.pi * np.abs(z.imag))
            * (kn * np.pi) ** deriv_order
        )
        floor = np.maximum(np.abs(total), np.exp(log_abs_q * 0.25) * 1e-300)
        if np.all(nxt <= SERIES_RTOL * floor) or np.all(nxt == 0):
            break
    else:
        raise SeriesDivergenceError("theta1 series hit the term cap")
    return total[()] if total.ndim == 0 else total


def theta1_all(z, sigma):
    """theta1 and its first three z-derivatives in a single series pass."""
    mod = as_modulus(sigma)
    q = mod.nome
    _check_nome(q)
    z = np.asarray(z, dtype=complex)
    out = [np.zeros_like(z) for _ in range(4)]
    log_abs_q = np.log(abs(q))
    aim = np.abs(z.imag)
    for n in range(MAX_TERMS):
        k = 2 * n + 1
        coef = 2.0 * (-1) ** n * np.exp(1j * np.pi * mod.sigma * (n + 0.5) ** 2)
        kp = k * np.pi
        sn = np.sin(kp * z)
        cs = np.cos(kp * z)
        out[0] += coef * sn
        out[1] += coef * kp * cs
        out[2] -= coef * kp**2 * sn
        out[3] -= coef * kp**3 * cs
        kn = k + 2
        nxt = 2.0 * np.exp(log_abs_q * (n + 1.5) ** 2 + kn * np.pi * aim) * (kn * np.pi) ** 3
        floor = np.maximum(np.abs(out[3]), 1e-300)
        if np.all(nxt <= SERIES_RTOL * floor) or np.all(nxt == 0):
            break
    else:
        raise SeriesDivergenceError("theta1 series hit the term cap")
    return tuple(o[()] if o.ndim == 0 else o for o in out)


def log_theta1_derivatives(z, sigma):
    """Return ((log th1)', (log th1)'', (log th1)''') at z."""
    t0, t1, t2, t3 = theta1_all(z, sigma)
    l1 = t1 / t0
    l2 = t2 / t0 - l1**2
    l3 = t3 / t0 - 3 * l1 * (t2 / t0) + 2 * l1**3
    return l1, l2, l3


def dedekind_eta(sigma) -> complex:
    """Dedekind eta by the q-product."""
    mod = as_modulus(sigma)
    q = mod.nome
    _check_nome(q)
    q2 = q * q
    prod = 1.0 + 0j
    qn = q2
    for _ in range(MAX_TERMS):
        prod *= 1.0 - qn
        if abs(qn) < SERIES_RTOL * 1e-2:
            break
        qn *= q2
    else:
        raise SeriesDivergenceError("eta product hit the term cap")
    return complex(np.exp(1j * np.pi * mod.sigma / 12) * prod)


def eta_tilde(sigma) -> complex:
    """d log(eta)/d sigma from the termwise differentiated product."""
    mod = as_modulus(sigma)
    q = mod.nome
    _check_nome(q)
    q2 = q * q
    s = 0j
    qn = q2
    for n in range(1, MAX_TERMS):
        term = n * qn / (1.0 - qn)
        s += term
        if abs(term) < SERIES_RTOL * max(abs(s), 1e-300):
            break
        qn *= q2
    else:
        raise SeriesDivergenceError("eta_tilde series hit the term cap")
    return complex(1j * np.pi / 12 - 2j * np.pi * s)


def eisenstein_e2(sigma) -> complex:
    """E2 = 1 - 24 sum sigma_1(n) q^{2n}, summed with explicit divisor sums.

    Kept independent of :func:`eta_tilde` so it can act as a cross-check.
    """
    mod = as_modulus(sigma)
    q2 = mod.nome**2
    _check_nome(q2)
    s = 0j
    for n in range(1, MAX_TERMS):
        d = np.arange(1, n + 1)
        sig1 = int(d[n % d == 0].sum())
        term = sig1 * q2**n
        s += term
        if abs(term) < SERIES_RTOL * max(abs(s), 1e-300) and n > 2:
            break
    return complex(1 - 24 * s)


def reduce_to_cell(z, sigma):
    """Translate z by a lattice vector into the cell |s|, |t| <= 1/2 (z = s + t sigma)."""
    mod = as_modulus(sigma)
    z = np.asarray(z, dtype=complex)
    t = z.imag / mod.sigma.imag
    m = np.round(t)
    z = z - m * mod.sigma
    n = np.round(z.real - (z.imag / mod.sigma.imag) * mod.sigma.real)
    z = z - n
    return z[()] if z.ndim == 0 else z


def _lattice_distance(z, sigma):
    """Distance from z (already reduced) to the nearest lattice point."""
    mod = as_modulus(sigma)
    best = np.full(np.shape(z), np.inf)
    for m in (-1, 0, 1):
        for n in (-1, 0, 1):
            best = np.minimum(best, np.abs(z - n - m * mod.sigma))
    return best


def weierstrass_p(z, sigma, exclusion_radius: float = EXCLUSION_RADIUS):
    """Weierstrass p-function for the lattice Z + sigma Z."""
    mod = as_modulus(sigma)
    zr = reduce_to_cell(z, mod)
    if np.any(_lattice_distance(zr, mod) < exclusion_radius):
        raise LatticeProximityError("weierstrass_p evaluated within the exclusion radius of a lattice point")
    _, l2, _ = log_theta1_derivatives(zr, mod)
    return -l2 + 4j * np.pi * eta_tilde(mod)


def weierstrass_p_lattice_sum(z, sigma, rows: int | None = None):
    """Independent p evaluation: Weierstrass series summed row by row.

    Each row m of the absolutely convergent series is summed in closed form,
    sum_n 1/(z - n - m sigma)^2 = pi^2 / sin^2(pi (z - m sigma)).
    Test-only oracle.
    """
    mod = as_modulus(sigma)
    z = np.asarray(reduce_to_cell(z, mod), dtype=complex)
    if rows is None:
        rows = int(np.ceil(40.0 / (np.pi * mod.sigma.imag))) + 2
    total = np.pi**2 / np.sin(np.pi * z) ** 2 - np.pi**2 / 3
    for m in range(1, rows + 1):
        for sgn in (1, -1):
            w = sgn * m * mod.sigma
            total = total + np.pi**2 / np.sin(np.pi * (z - w)) ** 2 - np.pi**2 / np.sin(np.pi * w) ** 2
    return total[()] if total.ndim == 0 else total


def bergman_B(x, y, sigma, exclusion_radius: float = EXCLUSION_RADIUS):
    """Coefficient of the canonical bidifferential relative to dx dy.

    B(x, y) = wp(x - y) - 4 pi i eta_tilde(sigma) = -(log theta1)''(x - y).
    """
    mod = as_modulus(sigma)
    d = reduce_to_cell(np.asarray(x, dtype=complex) - np.asarray(y, dtype=complex), mod)
    if np.any(_lattice_distance(d, mod) < exclusion_radius):
        raise LatticeProximityError("bergman_B evaluated at (nearly) coincident points")
    _, l2, _ = log_theta1_derivatives(d, mod)
    return -l2


def bergman_diagonal(sigma) -> complex:
    """Limit of B(x, y) - (x - y)^-2 on the diagonal: -4 pi i eta_tilde = S_B / 6."""
    return -4j * np.pi * eta_tilde(sigma)


def bergman_projective_connection(sigma) -> complex:
    """Bergman projective connection in the flat coordinate: -24 pi i eta_tilde."""
    return -24j * np.pi * eta_tilde(sigma)
