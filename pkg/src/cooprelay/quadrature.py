"""Adaptive cubature over the plane in polar coordinates.

The plane is split into polar rectangles around a primary center: a finite
disk partitioned with breakpoints through every refinement center, plus the
exterior of that disk mapped onto a finite interval by ``r = R / s``.  Each
rectangle is integrated with a tensor Gauss-Kronrod (7, 15) rule and the
worst rectangles are bisected along the direction that dominates their error
estimate until the global estimate meets the tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import NonConvergence
from .scenario import Position

# Kronrod 15-point abscissae (descending, last is 0) and weights; QUADPACK qk15.
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

# ascending 15-point layout on [-1, 1]
NODES = np.concatenate((-_XGK[:7], [0.0], _XGK[6::-1]))
KRONROD_W = np.concatenate((_WGK[:7], [_WGK[7]], _WGK[6::-1]))
GAUSS_W = np.zeros(15)
GAUSS_W[[1, 3, 5]] = _WG[:3]
GAUSS_W[7] = _WG[3]
GAUSS_W[[13, 11, 9]] = _WG[:3]

_FINITE, _EXTERIOR = 0, 1
_BATCH = 1024


@dataclass(frozen=True)
class QuadratureSpec:
    relative_tolerance: float = 1e-8
    absolute_tolerance: float = 1e-12
    max_subdivisions: int = 200_000
    refinement_centers: tuple[Position, ...] = ()

    def __post_init__(self):
        if not (self.relative_tolerance > 0 and self.absolute_tolerance > 0):
            raise ValueError("quadrature tolerances must be positive")
        object.__setattr__(self, "refinement_centers", tuple(self.refinement_centers))

    def with_centers(self, centers: Sequence[Position]) -> "QuadratureSpec":
        return QuadratureSpec(self.relative_tolerance, self.absolute_tolerance,
                              self.max_subdivisions, tuple(centers))


def _wrap(phi: float) -> float:
    return (phi + math.pi) % (2 * math.pi) - math.pi


def _merge(points, eps=1e-12):
    out = []
    for v in sorted(points):
        if not out or v - out[-1] > eps:
            out.append(v)
    return out


def _initial_partition(center: Position, nodes: Sequence[Position]):
    """Polar rectangles for the finite disk plus the compactified exterior."""
    local = []
    for n in nodes:
        rho = math.hypot(n.x - center.x, n.y - center.y)
        if rho > 0:
            local.append((n, rho, math.atan2(n.y - center.y, n.x - center.x)))
    r_breaks = [0.0]
    phi_breaks = [-math.pi + k * math.pi / 4 for k in range(9)]
    for n, rho, phi in local:
        others = [m.distance_to(n) for m, _, _ in local if m != n] + [rho]
        w = 0.25 * min(others)
        r_breaks += [rho - w, rho, rho + w]
        dphi = min(w / rho, 0.25)
        phi_breaks += [_wrap(phi), _wrap(phi - dphi), _wrap(phi + dphi)]
    r_outer = 2.0 * max([1.0] + [rho for _, rho, _ in local])
    r_breaks.append(r_outer)
    r_breaks = _merge(b for b in r_breaks if 0.0 <= b <= r_outer)
    phi_breaks = _merge(b for b in phi_breaks + [math.pi] if -math.pi <= b <= math.pi)
    rects = []
    for p0, p1 in zip(phi_breaks[:-1], phi_breaks[1:]):
        for a, b in zip(r_breaks[:-1], r_breaks[1:]):
            rects.append((_FINITE, a, b, p0, p1))
    for k in range(8):
        rects.append((_EXTERIOR, 0.0, 1.0, -math.pi + k * math.pi / 4, -math.pi + (k + 1) * math.pi / 4))
    return r_outer, rects


class _Cubature:
    def __init__(self, f, center: Position, radius: float):
        self.f = f
        self.cx, self.cy = center.x, center.y
        self.radius = radius

    def evaluate(self, kind, u0, u1, p0, p1):
        """Kronrod value, total error and per-direction errors for a batch of rectangles."""
        hu = 0.5 * (u1 - u0)
        hp = 0.5 * (p1 - p0)
        u = (0.5 * (u0 + u1))[:, None] + hu[:, None] * NODES[None, :]
        phi = (0.5 * (p0 + p1))[:, None] + hp[:, None] * NODES[None, :]
        ext = (kind == _EXTERIOR)[:, None]
        with np.errstate(divide="ignore"):
            r = np.where(ext, self.radius / u, u)
            # polar Jacobian r dr, with dr = R/s^2 ds on the exterior
            jac = np.where(ext, self.radius**2 / u**3, u)
        x = self.cx + r[:, :, None] * np.cos(phi)[:, None, :]
        y = self.cy + r[:, :, None] * np.sin(phi)[:, None, :]
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            vals = np.asarray(self.f(x, y), dtype=float) * jac[:, :, None]
        area = (hu * hp)[:, None]
        vk = vals @ KRONROD_W  # contract phi
        vg = vals @ GAUSS_W
        kk = (vk @ KRONROD_W)[:, None] * area
        gg = (vg @ GAUSS_W)[:, None] * area
        gk = (np.einsum("bij,i->bj", vals, GAUSS_W) @ KRONROD_W)[:, None] * area
        kg = (vg @ KRONROD_W)[:, None] * area  # Kronrod in u, Gauss in phi
        val = kk[:, 0]
        err = np.abs(kk - gg)[:, 0]
        err_u = np.abs(kk - gk)[:, 0]
        err_p = np.abs(kk - kg)[:, 0]
        return val, err, err_u, err_p

    def evaluate_batched(self, kind, u0, u1, p0, p1):
        outs = [self.evaluate(kind[i:i + _BATCH], u0[i:i + _BATCH], u1[i:i + _BATCH],
                              p0[i:i + _BATCH], p1[i:i + _BATCH])
                for i in range(0, len(kind), _BATCH)]
        return tuple(np.concatenate(c) for c in zip(*outs))


def _adaptive(cub: _Cubature, rects, spec: QuadratureSpec):
    arr = np.array(rects, dtype=float)
    kind = arr[:, 0].astype(int)
    u0, u1, p0, p1 = arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4]
    val, err, eu, ep = cub.evaluate_batched(kind, u0, u1, p0, p1)
    splits = 0
    while True:
        total = math.fsum(val)
        total_err = float(np.sum(err))
        target = max(spec.absolute_tolerance, spec.relative_tolerance * abs(total))
        if not math.isfinite(total) or not math.isfinite(total_err):
            raise NonConvergence("integrand produced non-finite values")
        if total_err <= target:
            return total, total_err
        order = np.argsort(-err, kind="stable")
        cum = np.cumsum(err[order])
        need = total_err - 0.5 * target
        k = int(np.searchsorted(cum, need)) + 1
        k = max(1, min(k, _BATCH // 2, len(order)))
        sel = order[:k]
        splits += k
        if splits > spec.max_subdivisions:
            raise NonConvergence(
                f"{splits} subdivisions, error {total_err:.3g} above target {target:.3g}")
        split_u = eu[sel] >= ep[sel]
        su0, su1, sp0, sp1 = u0[sel], u1[sel], p0[sel], p1[sel]
        um = np.where(split_u, 0.5 * (su0 + su1), su1)
        pm = np.where(split_u, sp1, 0.5 * (sp0 + sp1))
        # child A keeps the lower half, child B the upper half of the split direction
        ck = np.concatenate((kind[sel], kind[sel]))
        cu0 = np.concatenate((su0, np.where(split_u, um, su0)))
        cu1 = np.concatenate((um, su1))
        cp0 = np.concatenate((sp0, np.where(split_u, sp0, pm)))
        cp1 = np.concatenate((pm, sp1))
        cv, ce, ceu, cep = cub.evaluate_batched(ck, cu0, cu1, cp0, cp1)
        keep = np.ones(len(kind), dtype=bool)
        keep[sel] = False
        kind = np.concatenate((kind[keep], ck))
        u0 = np.concatenate((u0[keep], cu0))
        u1 = np.concatenate((u1[keep], cu1))
        p0 = np.concatenate((p0[keep], cp0))
        p1 = np.concatenate((p1[keep], cp1))
        val = np.concatenate((val[keep], cv))
        err = np.concatenate((err[keep], ce))
        eu = np.concatenate((eu[keep], ceu))
        ep = np.concatenate((ep[keep], cep))


Integrand = Callable[[np.ndarray, np.ndarray], np.ndarray]


def integrate_plane(f: Integrand, spec: QuadratureSpec, center: Position | None = None):
    """Integrate ``f(x, y)`` (vectorised) over the whole plane.

    ``center`` defaults to the first refinement center.  Returns
    ``(value, error_estimate)``; raises NonConvergence when
    ``spec.max_subdivisions`` bisections do not reach the tolerance.
    """
    nodes = spec.refinement_centers
    if center is None:
        center = nodes[0] if nodes else Position(0.0, 0.0)
    radius, rects = _initial_partition(center, nodes)
    return _adaptive(_Cubature(f, center, radius), rects, spec)


def integrate_exterior(f: Integrand, center: Position, radius: float, spec: QuadratureSpec):
    """Integrate ``f`` over the complement of the disk of given center and radius."""
    rects = [(_EXTERIOR, 0.0, 1.0, -math.pi + k * math.pi / 4, -math.pi + (k + 1) * math.pi / 4)
             for k in range(8)]
    return _adaptive(_Cubature(f, center, radius), rects, spec)
