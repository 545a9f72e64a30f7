"""Adaptive path integration with analytic continuation of sqrt(w).

A path is a polyline in the flat torus coordinate t.  Along it the value of
sqrt(w) is continued by the ratio rule

    sqrt(w(t1)) = sqrt(w(t0)) * principal_sqrt(w(t1) / w(t0)),

which is exact as long as w(t1)/w(t0) stays off the negative real axis between
the two points.  Segments are bisected until every Gauss node satisfies
Re(w / w_start) > 0 and the 16-point rule agrees with the composite rule on the
two halves.

Integrands are supplied as a callable ``forms(t, s, data) -> (k, n) array``,
where ``s`` is the tracked sqrt(w) at the nodes and ``data`` whatever the
``evaluate`` callable returned there.  A path may start at a simple zero or
a simple pole of w (``start_kind``); the first segment is then parametrised as
t = a + u^2 (b - a), under which sqrt(w) / u (zero) or u sqrt(w) (pole) is
analytic and nonvanishing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ContinuationError

_GL_N = 16
_GL_X, _GL_W = np.polynomial.legendre.leggauss(_GL_N)
MAX_DEPTH = 48


@dataclass
class PathResult:
    integrals: np.ndarray
    sqrt_end: complex
    n_evals: int = 0


@dataclass
class _Seg:
    a: complex
    b: complex
    kind: str | None = None  # None, "zero" or "pole"
    coeff: complex = 0j  # w'(a) at a zero, residue of w at a pole


def _param(seg: _Seg, u):
    """Offset t - a and dt/du at parameter values u."""
    d = seg.b - seg.a
    if seg.kind is not None:
        return u * u * d, 2 * u * d
    return u * d, np.full_like(np.asarray(u, dtype=complex), d)


def _tracked(seg: _Seg, u, w):
    """Quantity whose sqrt is tracked: w, w / u^2 (zero start) or w u^2 (pole start)."""
    if seg.kind == "zero":
        return w / (u * u)
    if seg.kind == "pole":
        return w * (u * u)
    return w


def integrate_path(
    waypoints,
    evaluate: Callable,
    forms: Callable,
    sqrt_start: complex,
    *,
    start_kind: str | None = None,
    start_coeff: complex | None = None,
    rtol: float = 1e-13,
    atol: float = 1e-14,
) -> PathResult:
    """Integrate ``forms`` along a polyline while continuing sqrt(w).

    ``evaluate(base, offset)`` must return a mapping with key ``"w"`` holding w
    at t = base + offset; receiving the offset separately lets the callee form
    differences t - t0 without cancellation near a branch point.
    With ``start_kind="zero"`` the path begins at a simple zero of w,
    ``start_coeff`` is w'(t0) and ``sqrt_start`` is a branch of
    sqrt(w'(t0) (t1 - t0)).  With ``start_kind="pole"``, ``start_coeff`` is the
    residue b of w at t0 and ``sqrt_start`` a branch of sqrt(b / (t1 - t0)).
    Either choice fixes the sheet of the whole path.
    """
    pts = [complex(p) for p in waypoints]
    if len(pts) < 2:
        raise ValueError("a path needs at least two waypoints")
    total_len = sum(abs(pts[i + 1] - pts[i]) for i in range(len(pts) - 1))
    acc = None
    s_cur = complex(sqrt_start)
    counter = [0]
    for i in range(len(pts) - 1):
        seg = _Seg(pts[i], pts[i + 1])
        if i == 0 and start_kind is not None:
            if start_kind not in ("zero", "pole") or start_coeff is None:
                raise ValueError("start_kind must be 'zero' or 'pole' and needs start_coeff")
            seg.kind = start_kind
            seg.coeff = complex(start_coeff)
        seg_atol = atol * max(abs(seg.b - seg.a), 1e-300) / max(total_len, 1e-300)
        res, s_cur = _integrate_segment(seg, evaluate, forms, s_cur, rtol, seg_atol, counter)
        acc = res if acc is None else acc + res
    return PathResult(np.asarray(acc), s_cur, counter[0])


def _integrate_segment(seg, evaluate, forms, s_start, rtol, atol, counter):
    # stack of (u0, u1, tracked sqrt at u0, depth); processed left to right
    results = None
    s0 = s_start
    if seg.kind == "zero":
        w0 = seg.coeff * (seg.b - seg.a)
    elif seg.kind == "pole":
        w0 = seg.coeff / (seg.b - seg.a)
    else:
        w0 = complex(evaluate(seg.a, np.zeros(1, dtype=complex))["w"][0])
        counter[0] += 1
    stack = [(0.0, 1.0, s0, w0, 0)]
    gscale = 0.0
    while stack:
        u0, u1, s_a, w_a, depth = stack.pop()
        half = 0.5 * (u1 - u0)
        mid = 0.5 * (u1 + u0)
        # nodes: whole interval, left half, right half, plus the right endpoint
        uw = mid + half * _GL_X
        ul = u0 + 0.5 * half * (_GL_X + 1)
        ur = mid + 0.5 * half * (_GL_X + 1)
        uall = np.concatenate([uw, ul, ur, [mid, u1]])
        off, dt = _param(seg, uall)
        t = seg.a + off
        data = evaluate(seg.a, off)
        counter[0] += len(uall)
        w = np.asarray(data["w"], dtype=complex)
        tw = _tracked(seg, uall, w)
        ratio = tw / w_a
        if np.any(ratio.real <= 0) or np.any(~np.isfinite(ratio)):
            if depth >= MAX_DEPTH:
                raise ContinuationError("sqrt continuation ambiguous: refinement cap reached near a branch point")
            stack.append((mid, u1, None, None, depth + 1))
            stack.append((u0, mid, s_a, w_a, depth + 1))
            continue
        s_nodes = s_a * np.sqrt(ratio)
        if seg.kind == "zero":
            s_true = s_nodes * uall
        elif seg.kind == "pole":
            s_true = s_nodes / uall
        else:
            s_true = s_nodes
        vals = np.asarray(forms(t, s_true, data), dtype=complex)
        if vals.ndim == 1:
            vals = vals[None, :]
        jac = dt
        n = _GL_N
        f = vals * jac[None, :]
        i_whole = half * (f[:, :n] @ _GL_W)
        i_halves = 0.5 * half * (f[:, n : 2 * n] @ _GL_W + f[:, 2 * n : 3 * n] @ _GL_W)
        width = u1 - u0
        # per-form tolerance: relative to the local value or to the running
        # density scale of the segment, whichever is larger.  The second term
        # stops endless refinement where rounding in t - t0 dominates.
        gscale = np.maximum(gscale, np.abs(i_halves) / width)
        err = np.abs(i_whole - i_halves)
        tol_here = rtol * np.maximum(np.abs(i_halves), gscale * width) + atol * width
        if np.any(err > tol_here) and depth < MAX_DEPTH:
            s_mid, w_mid = s_nodes[-2], tw[-2]
            stack.append((mid, u1, s_mid, w_mid, depth + 1))
            stack.append((u0, mid, s_a, w_a, depth + 1))
            continue
        results = i_halves if results is None else results + i_halves
        s_end, w_end = s_nodes[-1], tw[-1]
        # the next interval on the stack starts where this one ends
        if stack and stack[-1][2] is None:
            u0n, u1n, _, _, dn = stack.pop()
            stack.append((u0n, u1n, s_end, w_end, dn))
        s0 = s_end
    s_final = s0  # at u = 1 the tracked quantity equals sqrt(w) in both parametrisations
    return results, complex(s_final)


@dataclass
class ContinuationSamples:
    t: np.ndarray
    sqrt_w: np.ndarray
    sheet_end: int = 1
    info: dict = field(default_factory=dict)


def continue_along(waypoints, evaluate, sqrt_start: complex, *, n_initial: int = 8, max_depth: int = 40) -> ContinuationSamples:
    """Samples of continued sqrt(w) along a polyline.

    Each segment starts with ``n_initial`` equal steps; a step is bisected
    until Re(w_end / w_start) > 0, i.e. sqrt(w) turns by less than pi/4, which
    makes the continuation unambiguous.
    """
    pts = [complex(p) for p in waypoints]
    w0 = complex(evaluate(pts[0], np.zeros(1, dtype=complex))["w"][0])
    s_cur = complex(sqrt_start)
    if abs(s_cur**2 - w0) > 1e-8 * max(abs(w0), 1e-300):
        raise ValueError("sqrt_start is not a square root of w at the first waypoint")
    t_out = [pts[0]]
    s_out = [s_cur]
    w_cur = w0
    for a, b in zip(pts[:-1], pts[1:]):
        d = b - a
        u = np.linspace(0.0, 1.0, n_initial + 1)
        w = np.asarray(evaluate(a, u[1:] * d)["w"], dtype=complex)
        # stack of (u0, u1, w1, depth), processed left to right
        stack = [(u[k], u[k + 1], w[k], 0) for k in range(n_initial - 1, -1, -1)]
        while stack:
            u0, u1, w1, depth = stack.pop()
            r = w1 / w_cur
            if r.real > 0 and np.isfinite(r):
                s_cur = s_cur * np.sqrt(r)
                w_cur = w1
                t_out.append(a + u1 * d)
                s_out.append(complex(s_cur))
                continue
            if depth >= max_depth:
                raise ContinuationError("sqrt continuation ambiguous: refinement cap reached")
            um = 0.5 * (u0 + u1)
            wm = complex(evaluate(a, np.array([um * d]))["w"][0])
            stack.append((um, u1, w1, depth + 1))
            stack.append((u0, um, wm, depth + 1))
    return ContinuationSamples(np.array(t_out), np.array(s_out))
