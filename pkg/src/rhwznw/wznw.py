"""Singular Hermitian metric, WZNW densities, and the regularized action.

The metric field h(z) = (Y(z) Y(z)*)^{-1} is evaluated by parallel
transport of the canonically normalized fundamental solution.  The
regularized action is

    S = lim_{delta -> 0} [ int_{X_delta} (kinetic + topological) d2z
        + 2 pi log(delta) (K1 + K2) ]

with X_delta the plane minus delta-disks at the finite punctures minus
the outside of the 1/delta circle, K1 the sum of squared finite weights
and K2 the sum of squared exponents at infinity.  With K = b A b^{-1}
(b the upper Cholesky factor of h) split into strict upper u, diagonal
d, strict lower l parts,

    kinetic     = tr(A h^{-1} A* h) = |u|^2 + |d|^2 + |l|^2,
    topological = |l|^2 - |u|^2,

so the combined integrand is |d|^2 + 2|l|^2 >= 0.

Quadrature: the plane is tiled exactly by star-shaped polar patches (one
per finite puncture, bounded by Voronoi bisectors and the outer circle)
plus a log-polar annulus reaching 1/delta.  Radial directions use
Gauss-Legendre panels in log-radius with panel edges aligned to the
delta schedule, so one transported web serves every delta at once.
Full circles use the periodic trapezoid rule in the angle; the outward
patch regions, whose radial extent is only piecewise smooth in the
angle, use Gauss-Legendre panels split at the boundary kinks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import factor, fuchs, paths, rhsolve
from .numcore import NumericalError, as_cmatrix, fro


class RegularLocusError(RuntimeError):
    """Field not canonically normalized on the regular locus."""


class UnreliableExtrapolationError(NumericalError):
    pass


# ---------------------------------------------------------------------------
# densities


def kinetic_density(h, A) -> float:
    """tr(A h^{-1} A* h) = tr(h^{-1}h_z h^{-1}h_zbar); always >= 0."""
    h = as_cmatrix(h, "h")
    A = as_cmatrix(A, "A")
    val = np.trace(A @ np.linalg.solve(h, A.conj().T @ h))
    return float(val.real)


def _cartan_split(h: np.ndarray, A: np.ndarray):
    b = factor.cholesky_upper(h)
    K = b @ A @ np.linalg.inv(b)
    u = np.triu(K, 1)
    l = np.tril(K, -1)
    d = np.diag(np.diag(K))
    return u, d, l


def topological_density(h, A) -> float:
    """|l|^2 - |u|^2 for the triangular split of b A b^{-1}.

    Equals tr(b_zbar b^{-1} (b_zbar b^{-1})* - b_z b^{-1} (b_z b^{-1})*).
    """
    u, _, l = _cartan_split(as_cmatrix(h, "h"), as_cmatrix(A, "A"))
    return float(np.sum(np.abs(l) ** 2) - np.sum(np.abs(u) ** 2))


def topological_density_from_differentials(h, A) -> float:
    """Topological density through the Cholesky differential (cross-check path).

    Builds b_z b^{-1} and b_zbar b^{-1} from the real directional
    derivatives of the Cholesky factor along dh = h A + A* h and
    i(h A - A* h).
    """
    h = as_cmatrix(h, "h")
    A = as_cmatrix(A, "A")
    b = factor.cholesky_upper(h)
    binv = np.linalg.inv(b)
    hx = h @ A + A.conj().T @ h
    hy = 1j * (h @ A - A.conj().T @ h)
    tx = factor.cholesky_differential(h, hx) @ binv
    ty = factor.cholesky_differential(h, hy) @ binv
    bz = 0.5 * (tx - 1j * ty)
    bzb = 0.5 * (tx + 1j * ty)
    return float(
        np.sum(np.abs(bzb) ** 2) - np.sum(np.abs(bz) ** 2)
    )


def _batched_densities(h: np.ndarray, A: np.ndarray):
    """kinetic and topological densities for stacked (N, r, r) inputs."""
    low = np.linalg.cholesky(h)
    b = np.conj(np.swapaxes(low, -1, -2))
    # K = b A b^{-1} via K^T = solve(b^T, (bA)^T)
    M = b @ A
    K = np.swapaxes(
        np.linalg.solve(np.swapaxes(b, -1, -2), np.swapaxes(M, -1, -2)), -1, -2
    )
    absK2 = np.abs(K) ** 2
    total = np.sum(absK2, axis=(-2, -1))
    upper = np.sum(np.triu(absK2, 1), axis=(-2, -1))
    lower = np.sum(np.tril(absK2, -1), axis=(-2, -1))
    kinetic = total
    topological = lower - upper
    return kinetic, topological


# ---------------------------------------------------------------------------
# metric field


@dataclass
class MetricField:
    """Canonically normalized solution with a transport cache.

    h(z) is path independent because the monodromy is unitary (to solver
    tolerance); Y(z) itself is cached per evaluation point and reused as a
    nearby seed for later points.
    """

    system: fuchs.FuchsianSystem
    basepoint: complex
    basepoint_value: np.ndarray
    large_cell_flag: bool = True
    transport_tol: float = 1e-10
    monodromy_quality: float = 0.0
    _cache_z: list = field(default_factory=list)
    _cache_y: list = field(default_factory=list)

    def __post_init__(self):
        if not self._cache_z:
            self._cache_z.append(complex(self.basepoint))
            self._cache_y.append(np.asarray(self.basepoint_value, dtype=complex))

    @property
    def weights(self) -> fuchs.WeightSystem:
        return self.system.weights

    def min_distance_to_punctures(self, z: complex) -> float:
        return float(np.min(np.abs(np.asarray(self.system.points) - z)))

    def y_at(self, z: complex) -> np.ndarray:
        z = complex(z)
        d_here = self.min_distance_to_punctures(z)
        if d_here < 1e-8:
            raise paths.ProximityError(f"evaluation point {z} too close to a puncture")
        zs = np.asarray(self._cache_z)
        k = int(np.argmin(np.abs(zs - z)))
        znear, ynear = self._cache_z[k], self._cache_y[k]
        if abs(znear - z) < 1e-14:
            return ynear
        keepouts = []
        pts = self.system.points
        cap = 0.45 * self.weights.min_pairwise_distance()
        for w in pts:
            r = min(0.92 * abs(z - w), 0.92 * abs(znear - w), cap)
            if r > 0:
                keepouts.append((complex(w), r))
        route = paths.plan_route(znear, z, keepouts)
        res = fuchs.transport(
            self.system, route, start=ynear, tol=self.transport_tol,
            check_det=False, precheck=False,
        )
        self._cache_z.append(z)
        self._cache_y.append(res.value)
        return res.value

    def h_at(self, z: complex) -> np.ndarray:
        y = self.y_at(z)
        h = np.linalg.inv(y @ y.conj().T)
        return 0.5 * (h + h.conj().T)

    def metric_at(self, z: complex) -> tuple[np.ndarray, np.ndarray]:
        """(h(z), A(z)): transported metric and the closed-form connection."""
        return self.h_at(z), self.system.A_of(complex(z))

    def ray_values(self, center_index: int, phi: float, rhos: np.ndarray):
        """Y along an inward ray at the given puncture, marched in log-radius.

        rhos must be decreasing and start below half the distance to the
        next puncture; returns the stacked Y values at center + rho e^{i phi}.
        """
        rhos = np.asarray(rhos, dtype=float)
        center = complex(self.system.points[center_index])
        r_start = float(rhos[0])
        z_start = center + r_start * np.exp(1j * phi)
        y0 = self.y_at(z_start)
        svals = np.log(rhos)
        ys = _march_log_radial(
            self.system,
            center,
            np.array([phi]),
            y0[None, :, :],
            svals,
        )
        return ys[:, 0]


def make_metric_field(
    system: fuchs.FuchsianSystem,
    target: fuchs.AdmissibleRep,
    transport_tol: float = 1e-10,
    normalization: rhsolve.NormalizationResult | None = None,
) -> MetricField:
    """Normalize a solved system at infinity and wrap it as a metric field."""
    norm = normalization or rhsolve.normalize_at_infinity(
        system, target, transport_tol=min(transport_tol, 1e-10)
    )
    if not norm.large_cell_flag:
        raise RegularLocusError("constant term at infinity outside the large-cell coset")
    mon = fuchs.monodromy_rep(norm.canonical_system, tol=transport_tol)
    eye = np.eye(system.weights.rank)
    # unitarity holds in the gauge of the canonical solution Y = Phi y0
    y0 = norm.basepoint_value
    y0inv = np.linalg.inv(y0)
    quality = max(
        fro((y0inv @ m @ y0) @ (y0inv @ m @ y0).conj().T - eye) for m in mon.generators
    )
    return MetricField(
        system=norm.canonical_system,
        basepoint=norm.basepoint,
        basepoint_value=norm.basepoint_value,
        large_cell_flag=norm.large_cell_flag,
        transport_tol=transport_tol,
        monodromy_quality=float(quality),
    )


# ---------------------------------------------------------------------------
# batched fixed-step marching


def _rk4_step(system: fuchs.FuchsianSystem, z_fun, y: np.ndarray, t: float, dt: float):
    def f(tt, yy):
        z, dz = z_fun(tt)
        return -(system.A_of(z) @ yy) * dz[..., None, None]

    k1 = f(t, y)
    k2 = f(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _march_log_radial(
    system: fuchs.FuchsianSystem,
    center: complex,
    phis: np.ndarray,
    y0: np.ndarray,
    svals: np.ndarray,
    h_s: float = 0.01,
) -> np.ndarray:
    """March Y along rays z = center + e^{s + i phi} through the s grid.

    y0 has shape (len(phis), r, r) at s = svals[0]; returns values at every
    s in svals, shape (len(svals), len(phis), r, r).
    """
    e_iphi = np.exp(1j * phis)

    def z_fun(s):
        z = center + np.exp(s) * e_iphi
        return z, z - center

    out = np.empty((len(svals),) + y0.shape, dtype=complex)
    out[0] = y0
    y = y0
    for k in range(1, len(svals)):
        s0, s1 = svals[k - 1], svals[k]
        nsub = max(2, int(np.ceil(abs(s1 - s0) / h_s)))
        dt = (s1 - s0) / nsub
        s = s0
        for _ in range(nsub):
            y = _rk4_step(system, z_fun, y, s, dt)
            s += dt
        out[k] = y
    return out


def _march_ray_scaled(
    system: fuchs.FuchsianSystem,
    center: complex,
    phis: np.ndarray,
    y0: np.ndarray,
    s_start: np.ndarray,
    s_end: np.ndarray,
    tvals: np.ndarray,
    h_s: float = 0.01,
) -> np.ndarray:
    """March along rays with per-ray log-radius window [s_start, s_end].

    All rays share the t in [0,1] grid; ray j sits at log-radius
    s_start[j] + t (s_end[j] - s_start[j]).
    """
    e_iphi = np.exp(1j * phis)
    span = s_end - s_start

    def z_fun(t):
        s = s_start + t * span
        z = center + np.exp(s) * e_iphi
        return z, (z - center) * span

    out = np.empty((len(tvals),) + y0.shape, dtype=complex)
    out[0] = y0
    y = y0
    span_max = float(np.max(np.abs(span))) if len(span) else 0.0
    for k in range(1, len(tvals)):
        t0, t1 = tvals[k - 1], tvals[k]
        nsub = max(2, int(np.ceil(abs(t1 - t0) * span_max / h_s)))
        dt = (t1 - t0) / nsub
        t = t0
        for _ in range(nsub):
            y = _rk4_step(system, z_fun, y, t, dt)
            t += dt
        out[k] = y
    return out


def _march_ring(
    system: fuchs.FuchsianSystem,
    center: complex,
    radius: float,
    y_entry: np.ndarray,
    phi_entry: float,
    phis: np.ndarray,
    tol: float,
) -> np.ndarray:
    """Y at every ring angle, reached by short arcs swept CCW from the entry."""
    rel = np.mod(phis - phi_entry, 2 * np.pi)
    order = np.argsort(rel)
    ys = np.empty((len(phis),) + y_entry.shape, dtype=complex)
    y, ang = y_entry, phi_entry
    for idx in order:
        target_ang = phi_entry + rel[idx]
        arc = paths.Arc(center, radius, ang, target_ang)
        res = fuchs.transport(system, [arc], start=y, tol=tol, check_det=False, precheck=False)
        y, ang = res.value, target_ang
        ys[idx] = y
    return ys


# ---------------------------------------------------------------------------
# quadrature web


@dataclass
class QuadratureOptions:
    n_phi: int = 192
    gl_order: int = 8
    outward_panels: int = 2
    h_s: float = 0.01
    max_panel_span: float = 0.8  # maximal log-radius length of one GL panel


@dataclass
class _WebRegion:
    z: np.ndarray        # nodes
    rho: np.ndarray      # distance to the governing center
    weight: np.ndarray   # area weights (already include rho^2 ds dphi)
    kinetic: np.ndarray
    topological: np.ndarray


def _gl_nodes(a: float, b: float, order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * x, half * w


def _panel_edges(a: float, b: float, max_span: float) -> np.ndarray:
    n = max(1, int(np.ceil((b - a) / max_span)))
    return np.linspace(a, b, n + 1)


def _log_panels(r_lo: float, r_hi: float, fixed: list[float], opts: QuadratureOptions):
    """GL nodes and weights in s = log rho on [log r_lo, log r_hi] with panel
    edges at every fixed radius in between."""
    edges = sorted({np.log(r_lo), np.log(r_hi), *[np.log(f) for f in fixed if r_lo < f < r_hi]})
    s_nodes, s_weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        for a, b in zip(*(lambda e: (e[:-1], e[1:]))(_panel_edges(lo, hi, opts.max_panel_span))):
            x, w = _gl_nodes(a, b, opts.gl_order)
            s_nodes.append(x)
            s_weights.append(w)
    return np.concatenate(s_nodes), np.concatenate(s_weights)


def _patch_constraints(points: np.ndarray, i: int, r_out: float):
    """Per-constraint radial bounds of the star patch at puncture i.

    Constraint 0 is the outer circle, the rest are Voronoi bisectors with
    the other punctures; the patch boundary is their pointwise minimum.
    """
    zi = points[i]
    others = [points[j] for j in range(len(points)) if j != i]

    def bounds(phis: np.ndarray) -> np.ndarray:
        e = np.exp(1j * phis)
        beta = (np.conj(zi) * e).real
        disc = beta**2 + r_out**2 - abs(zi) ** 2
        rows = [-beta + np.sqrt(np.maximum(disc, 0.0))]
        for zj in others:
            d = zj - zi
            denom = (np.conj(d) * e).real
            with np.errstate(divide="ignore"):
                rows.append(
                    np.where(denom > 1e-12, (abs(d) ** 2) / (2 * denom), np.inf)
                )
        return np.stack(rows)

    return bounds


def _voronoi_rho_max(points: np.ndarray, i: int, phis: np.ndarray, r_out: float) -> np.ndarray:
    """Star-shaped patch boundary: nearest Voronoi bisector or outer circle."""
    return np.min(_patch_constraints(points, i, r_out)(np.asarray(phis, dtype=float)), axis=0)


def _kink_angles(points: np.ndarray, i: int, r_out: float, samples: int = 4096) -> np.ndarray:
    """Angles where the active patch constraint switches (boundary kinks)."""
    bounds = _patch_constraints(points, i, r_out)
    phis = 2 * np.pi * np.arange(samples) / samples
    active = np.argmin(bounds(phis), axis=0)
    kinks = []
    for k in range(samples):
        k2 = (k + 1) % samples
        if active[k] == active[k2]:
            continue
        lo, hi = phis[k], phis[k] + 2 * np.pi / samples
        a_lo = active[k]
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if np.argmin(bounds(np.array([mid]))[:, 0]) == a_lo:
                lo = mid
            else:
                hi = mid
        kinks.append(0.5 * (lo + hi))
    return np.asarray(sorted(k % (2 * np.pi) for k in kinks))


class TransportWeb:
    """Transported solution values and densities on the full quadrature web."""

    def __init__(
        self,
        fld: MetricField,
        delta_min: float,
        delta_schedule: tuple[float, ...],
        opts: QuadratureOptions,
    ):
        self.field = fld
        self.opts = opts
        ws = fld.weights
        pts = np.asarray(fld.system.points)
        self.r_out = 2.0 * float(np.max(np.abs(pts))) + 2.0
        if 1.0 / max(delta_schedule) <= 1.2 * self.r_out:
            raise ValueError("largest delta too coarse for the outer region")
        ring_radii = [
            0.5 * min(abs(pts[i] - pts[j]) for j in range(len(pts)) if j != i)
            if len(pts) > 1
            else 0.5
            for i in range(len(pts))
        ]
        if max(delta_schedule) >= 0.8 * min(ring_radii):
            raise ValueError("largest delta must sit inside every puncture patch")
        self.regions: list[_WebRegion] = []
        fixed = sorted(set(delta_schedule) | {delta_min})
        for i in range(len(pts)):
            self.regions.append(self._build_patch(i, ring_radii[i], delta_min, fixed))
        self.regions.append(self._build_outer(delta_schedule, delta_min))

    # -- patches ------------------------------------------------------------

    def _ring_seed(self, center: complex, radius: float):
        fld = self.field
        z0 = fld.basepoint
        entry = center + radius * (z0 - center) / abs(z0 - center)
        y_entry = fld.y_at(entry)
        return entry, y_entry

    def _build_patch(self, i: int, ring_r: float, delta_min: float, fixed) -> _WebRegion:
        fld, opts = self.field, self.opts
        system = fld.system
        pts = np.asarray(system.points)
        center = complex(pts[i])
        phis = 2 * np.pi * (np.arange(opts.n_phi) + 0.5) / opts.n_phi
        w_phi = 2 * np.pi / opts.n_phi

        entry, y_entry = self._ring_seed(center, ring_r)
        ring_y = _march_ring(
            system, center, ring_r, y_entry, float(np.angle(entry - center)), phis,
            fld.transport_tol,
        )

        # inward: common log-radius grid from the ring down to delta_min
        s_in, w_in = _log_panels(delta_min, ring_r, fixed, opts)
        order = np.argsort(-s_in)  # march downwards
        s_desc = np.concatenate(([np.log(ring_r)], s_in[order]))
        y_in = _march_log_radial(system, center, phis, ring_y, s_desc, opts.h_s)[1:]
        y_in = y_in[np.argsort(order)]  # restore ascending-s order

        rho_in = np.exp(s_in)
        z_in = center + rho_in[:, None] * np.exp(1j * phis)[None, :]
        wt_in = (w_in * np.exp(2 * s_in))[:, None] * w_phi

        # outward: the patch boundary rho_max(phi) has kinks where the active
        # Voronoi/circle constraint switches, so the angular rule is GL on
        # panels split at the kinks (uniform trapezoid would stall at N^-2)
        kinks = _kink_angles(pts, i, self.r_out)
        if len(kinks) == 0:
            kinks = np.array([0.0])
        edges = np.concatenate([kinks, [kinks[0] + 2 * np.pi]])
        phi_out, wphi_out = [], []
        for a, b in zip(edges[:-1], edges[1:]):
            for aa, bb in zip(*(lambda e: (e[:-1], e[1:]))(_panel_edges(a, b, 2 * np.pi / 12))):
                x, w = _gl_nodes(aa, bb, opts.gl_order)
                phi_out.append(x)
                wphi_out.append(w)
        phi_out = np.concatenate(phi_out)
        wphi_out = np.concatenate(wphi_out)

        entry_ang = float(np.angle(entry - center))
        ring_y_out = _march_ring(system, center, ring_r, y_entry, entry_ang, phi_out,
                                 fld.transport_tol)
        rho_max = _voronoi_rho_max(pts, i, phi_out, self.r_out)
        t_nodes, t_weights = [], []
        for a, b in zip(*(lambda e: (e[:-1], e[1:]))(np.linspace(0, 1, opts.outward_panels + 1))):
            x, w = _gl_nodes(a, b, opts.gl_order)
            t_nodes.append(x)
            t_weights.append(w)
        t_nodes = np.concatenate(t_nodes)
        t_weights = np.concatenate(t_weights)
        t_desc = np.concatenate(([0.0], t_nodes))
        s_start = np.full(len(phi_out), np.log(ring_r))
        s_end = np.log(np.maximum(rho_max, ring_r))
        y_out = _march_ray_scaled(
            system, center, phi_out, ring_y_out, s_start, s_end, t_desc, opts.h_s
        )[1:]

        span = s_end - s_start
        s_out = s_start[None, :] + t_nodes[:, None] * span[None, :]
        rho_out = np.exp(s_out)
        z_out = center + rho_out * np.exp(1j * phi_out)[None, :]
        wt_out = (t_weights[:, None] * span[None, :]) * np.exp(2 * s_out) * wphi_out[None, :]

        z = np.concatenate([z_in.ravel(), z_out.ravel()])
        rho = np.concatenate(
            [np.broadcast_to(rho_in[:, None], z_in.shape).ravel(), rho_out.ravel()]
        )
        wt = np.concatenate([np.broadcast_to(wt_in, z_in.shape).ravel(), wt_out.ravel()])
        y = np.concatenate([y_in.reshape(-1, *y_in.shape[2:]), y_out.reshape(-1, *y_out.shape[2:])])
        kin, top = self._densities(z, y)
        return _WebRegion(z=z, rho=rho, weight=wt, kinetic=kin, topological=top)

    def _build_outer(self, delta_schedule, delta_min: float) -> _WebRegion:
        fld, opts = self.field, self.opts
        system = fld.system
        phis = 2 * np.pi * (np.arange(opts.n_phi) + 0.5) / opts.n_phi
        w_phi = 2 * np.pi / opts.n_phi

        entry, y_entry = self._ring_seed(0.0, self.r_out)
        ring_y = _march_ring(
            system, 0.0, self.r_out, y_entry, float(np.angle(entry)), phis, fld.transport_tol
        )
        fixed = [1.0 / d for d in delta_schedule]
        s_nodes, s_weights = _log_panels(self.r_out, 1.0 / delta_min, fixed, opts)
        s_asc = np.concatenate(([np.log(self.r_out)], s_nodes))
        y = _march_log_radial(system, 0.0, phis, ring_y, s_asc, opts.h_s)[1:]

        rho = np.exp(s_nodes)
        z = rho[:, None] * np.exp(1j * phis)[None, :]
        wt = (s_weights * np.exp(2 * s_nodes))[:, None] * w_phi
        zf = z.ravel()
        kin, top = self._densities(zf, y.reshape(-1, *y.shape[2:]))
        return _WebRegion(
            z=zf,
            rho=np.broadcast_to(rho[:, None], z.shape).ravel(),
            weight=np.broadcast_to(wt, z.shape).ravel(),
            kinetic=kin,
            topological=top,
        )

    def _densities(self, z: np.ndarray, y: np.ndarray):
        h = np.linalg.inv(y @ np.conj(np.swapaxes(y, -1, -2)))
        h = 0.5 * (h + np.conj(np.swapaxes(h, -1, -2)))
        A = self.field.system.A_of(z)
        return _batched_densities(h, A)

    # -- assembly -----------------------------------------------------------

    def integrals_at(self, delta: float) -> tuple[float, float]:
        """(kinetic, topological) integrals over X_delta."""
        kin = top = 0.0
        n_patches = len(self.regions) - 1
        eps = 1e-12
        for region in self.regions[:n_patches]:
            mask = region.rho >= delta * (1 - eps)
            kin += float(np.sum(region.weight[mask] * region.kinetic[mask]))
            top += float(np.sum(region.weight[mask] * region.topological[mask]))
        outer = self.regions[-1]
        mask = outer.rho <= (1.0 / delta) * (1 + eps)
        kin += float(np.sum(outer.weight[mask] * outer.kinetic[mask]))
        top += float(np.sum(outer.weight[mask] * outer.topological[mask]))
        return kin, top


# ---------------------------------------------------------------------------
# regularized action


@dataclass
class ActionResult:
    value: float
    counterterm_k1: float
    counterterm_k2: float
    per_delta: list[tuple[float, float]]
    extrapolation_error: float
    topological_part: float
    kinetic_part: float
    kappa: float
    imag_residual: float
    csv_rows: list[dict] = field(default_factory=list)


def decay_exponent(weights: fuchs.WeightSystem) -> float:
    """kappa = min_i 2 (alpha_i1 - alpha_ir + 1): the slowest correction power."""
    w = weights.weights
    return float(np.min(2.0 * (w[:, 0] - w[:, -1] + 1.0)))


def action_regularized(
    fld: MetricField,
    delta_schedule: tuple[float, ...] = (0.1, 0.05, 0.025, 0.0125),
    opts: QuadratureOptions | None = None,
    fit_tolerance: float = 1e-2,
) -> ActionResult:
    """Regularized WZNW action with delta -> 0 extrapolation.

    Integrates the kinetic and topological densities over X_delta for each
    delta in the (decreasing) schedule, adds the log-delta counterterms,
    and fits total(delta) = S + C delta^kappa.  The fit residual is
    reported and must stay below fit_tolerance * |S|.
    """
    if not fld.large_cell_flag:
        raise RegularLocusError("action is defined on the regular locus only")
    deltas = tuple(sorted(delta_schedule, reverse=True))
    if len(deltas) < 3:
        raise ValueError("need at least three deltas for the extrapolation")
    opts = opts or QuadratureOptions()
    k1, k2 = fld.weights.counterterm_coefficients()
    web = TransportWeb(fld, min(deltas), deltas, opts)

    rows, totals = [], []
    kin_last = top_last = 0.0
    for d in deltas:
        kin, top = web.integrals_at(d)
        ct = float(2 * np.pi * np.log(d) * (k1 + k2))
        total = kin + top + ct
        rows.append(
            {
                "delta": float(d),
                "kinetic": float(kin),
                "topological": float(top),
                "counterterm": ct,
                "total": float(total),
            }
        )
        totals.append(total)
        kin_last, top_last = kin, top

    kappa = decay_exponent(fld.weights)
    dd = np.asarray(deltas)
    # the weight-gap power plus the universal delta^2 background (angular
    # averaging of the local expansions leaves an analytic tail); the two
    # columns merge when kappa is at its maximum 2
    cols = [np.ones_like(dd), dd**kappa]
    if abs(kappa - 2.0) > 0.1 and len(deltas) >= 4:
        cols.append(dd**2)
    design = np.stack(cols, axis=1)
    coef, *_ = np.linalg.lstsq(design, np.asarray(totals), rcond=None)
    fit = design @ coef
    resid = float(np.max(np.abs(fit - totals)))
    value = float(coef[0])
    spread = float(np.max(totals) - np.min(totals))
    if resid > fit_tolerance * max(abs(value), spread, 1e-12):
        raise UnreliableExtrapolationError(
            f"delta-fit residual {resid:.3e} vs value {value:.3e} (spread {spread:.3e})"
        )
    # densities are assembled from norms, so the imaginary part can only
    # enter through the trace form; track it at a sample of web nodes
    imag_residual = _imag_residual_sample(fld, web)
    return ActionResult(
        value=value,
        counterterm_k1=k1,
        counterterm_k2=k2,
        per_delta=[(float(d), float(t)) for d, t in zip(deltas, totals)],
        extrapolation_error=resid,
        topological_part=top_last,
        kinetic_part=kin_last,
        kappa=kappa,
        imag_residual=imag_residual,
        csv_rows=rows,
    )


def _imag_residual_sample(fld: MetricField, web: TransportWeb, count: int = 64) -> float:
    region = web.regions[0]
    idx = np.linspace(0, len(region.z) - 1, min(count, len(region.z))).astype(int)
    worst = 0.0
    for k in idx:
        z = region.z[k]
        h, A = fld.metric_at(z)
        val = np.trace(A @ np.linalg.solve(h, A.conj().T @ h))
        worst = max(worst, abs(val.imag) / max(abs(val.real), 1e-300))
    return float(worst)


def annulus_kinetic_integral(
    fld: MetricField,
    puncture_index: int,
    delta: float,
    ratio: float = 2.0,
    opts: QuadratureOptions | None = None,
) -> float:
    """Kinetic integral over the annulus delta < |z - z_i| < ratio*delta.

    As delta -> 0 this tends to 2 pi log(ratio) * sum_j alpha_ij^2; used to
    check the counterterm coefficient.
    """
    opts = opts or QuadratureOptions()
    system = fld.system
    pts = np.asarray(system.points)
    center = complex(pts[puncture_index])
    ring_r = (
        0.5 * min(abs(center - pts[j]) for j in range(len(pts)) if j != puncture_index)
        if len(pts) > 1
        else 0.5
    )
    phis = 2 * np.pi * (np.arange(opts.n_phi) + 0.5) / opts.n_phi
    w_phi = 2 * np.pi / opts.n_phi
    entry = center + ring_r * (fld.basepoint - center) / abs(fld.basepoint - center)
    y_entry = fld.y_at(entry)
    ring_y = _march_ring(
        system, center, ring_r, y_entry, float(np.angle(entry - center)), phis,
        fld.transport_tol,
    )
    s_nodes, s_weights = _log_panels(delta, ratio * delta, [], opts)
    s_desc = np.concatenate(([np.log(ring_r)], s_nodes[np.argsort(-s_nodes)]))
    y = _march_log_radial(system, center, phis, ring_y, s_desc, opts.h_s)[1:]
    y = y[np.argsort(np.argsort(-s_nodes))]
    z = center + np.exp(s_nodes)[:, None] * np.exp(1j * phis)[None, :]
    h = np.linalg.inv(y @ np.conj(np.swapaxes(y, -1, -2)))
    h = 0.5 * (h + np.conj(np.swapaxes(h, -1, -2)))
    A = system.A_of(z.ravel()).reshape(z.shape + (system.rank, system.rank))
    kin, _ = _batched_densities(h.reshape(-1, system.rank, system.rank), A.reshape(-1, system.rank, system.rank))
    wt = np.broadcast_to((s_weights * np.exp(2 * s_nodes))[:, None] * w_phi, z.shape)
    return float(np.sum(wt.ravel() * kin))


def abelian_action_closed_form(weights: fuchs.WeightSystem) -> float:
    """Rank-1 action: S = -4 pi sum_{i<j} alpha_i alpha_j log|z_i - z_j|.

    Derived by Stokes' theorem from the pairwise logarithmic potentials of
    A(z) = sum alpha_i / (z - z_i); the log-delta divergences match the
    counterterm convention exactly, leaving the pair interaction term.
    """
    if weights.rank != 1:
        raise ValueError("closed form applies to rank 1")
    a = weights.weights[:-1, 0]
    pts = weights.points
    total = 0.0
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            total += a[i] * a[j] * np.log(abs(pts[i] - pts[j]))
    return float(-4 * np.pi * total)


# ---------------------------------------------------------------------------
# three-form identity


def _theta_eval(h: np.ndarray, V: np.ndarray) -> np.ndarray:
    """theta_1(V) = db(V) b^{-1} for the upper Cholesky factor."""
    b = factor.cholesky_upper(h)
    db = factor.cholesky_differential(h, V)
    return db @ np.linalg.inv(b)


def _omega_eval(h: np.ndarray, Y: np.ndarray, Z: np.ndarray) -> float:
    ty, tz = _theta_eval(h, Y), _theta_eval(h, Z)
    val = np.trace(ty @ tz.conj().T - tz @ ty.conj().T)
    return complex(val)


def three_form_pair(h, X, Y, Z, step: float = 1e-5):
    """(Theta(X,Y,Z), 3 dOmega(X,Y,Z)) on the space of positive metrics.

    Theta is the alternating sum over the six permutations of
    tr(h^{-1} X h^{-1} Y h^{-1} Z); the second entry differentiates the
    2-form omega(Y,Z) = tr(theta1(Y) theta1(Z)* - theta1(Z) theta1(Y)*)
    by central differences, so their agreement is a genuine two-route
    check of the antiderivative identity.
    """
    h = as_cmatrix(h, "h")
    mats = [as_cmatrix(m, name) for m, name in ((X, "X"), (Y, "Y"), (Z, "Z"))]
    hinv = np.linalg.inv(h)
    theta3 = 0.0 + 0.0j
    from itertools import permutations as _perms

    for perm, sign in zip(_perms((0, 1, 2)), (1, -1, -1, 1, 1, -1)):
        a, b_, c = (mats[k] for k in perm)
        theta3 += sign * np.trace(hinv @ a @ hinv @ b_ @ hinv @ c)

    def d_omega(direction, v1, v2):
        t = step
        return (_omega_eval(h + t * direction, v1, v2) - _omega_eval(h - t * direction, v1, v2)) / (2 * t)

    X_, Y_, Z_ = mats
    d_omega_total = d_omega(X_, Y_, Z_) - d_omega(Y_, X_, Z_) + d_omega(Z_, X_, Y_)
    return complex(theta3), complex(3.0 * d_omega_total)


# ---------------------------------------------------------------------------
# flatness of the transported metric


def flatness_residual(fld: MetricField, z: complex, step: float) -> float:
    """|| d/dzbar (h^{-1} h_z) || from a compact finite-difference stencil.

    h is rebuilt by transport at the 13 stencil points; the inner central
    differences form h^{-1} h_z, the outer one differentiates it in zbar.
    Decays like step^2 down to the transport tolerance floor.
    """
    z = complex(z)
    if fld.min_distance_to_punctures(z) < 8 * step:
        raise paths.ProximityError("stencil too close to a puncture")

    def g_at(w: complex) -> np.ndarray:
        s = step
        hp = fld.h_at(w + s)
        hm = fld.h_at(w - s)
        hq = fld.h_at(w + 1j * s)
        hr = fld.h_at(w - 1j * s)
        hz = 0.5 * ((hp - hm) / (2 * s) - 1j * (hq - hr) / (2 * s))
        return np.linalg.solve(fld.h_at(w), hz)

    s = step
    gz = 0.5 * (
        (g_at(z + s) - g_at(z - s)) / (2 * s) + 1j * (g_at(z + 1j * s) - g_at(z - 1j * s)) / (2 * s)
    )
    return float(fro(gz))
