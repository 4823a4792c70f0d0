"""Forward problem: weight systems, admissible unitary tuples, parallel
transport of the Fuchsian system, and monodromy.

Orientation conventions (documented once, used everywhere):

* The fundamental solution solves dY/dz = -A(z) Y with
  A(z) = sum_i A_i / (z - z_i); transporting it around a counterclockwise
  loop at z_i multiplies on the right by a matrix with spectrum
  {exp(-2 pi i alpha_ij)} (in rank 1: the loop value is exp(-2 pi i alpha)).
* The *representation generators* returned by :func:`monodromy_rep` are the
  inverses of those loop transports.  Loop inversion turns the transport
  anti-homomorphism into a homomorphism, so the generators satisfy
  M_1 ... M_{n-1} M_n = I when the finite punctures are indexed by
  increasing real part, and spec(M_i) = exp(2 pi i spec(A_i)), matching
  admissible tuples built from the weights.
* M_n is the plain transport around a large counterclockwise circle
  through the basepoint (no inversion: seen from infinity that circle is
  already the inverted loop).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from itertools import permutations

import numpy as np

from . import paths
from .factor import SplittingType
from .numcore import NumericalError, as_cmatrix, fro, sorted_eigvals

TWO_PI_I = 2j * np.pi


class DegreeError(ValueError):
    """Weight sums incompatible with an integer degree."""


class StabilityRangeError(ValueError):
    """Splitting exponents violate -n < m_j < 0."""


class NotAdmissibleError(ValueError):
    """Conjugators do not close to the required spectrum at infinity."""


class StiffnessError(NumericalError):
    """Step size underflow in the transport integrator."""


# ---------------------------------------------------------------------------
# weight systems


@dataclass(frozen=True)
class WeightSystem:
    """Marked points, parabolic weights, splitting type, exponents at infinity.

    points holds the n-1 finite punctures; the n-th is infinity.  weights
    has one strictly increasing row in (0,1) per puncture, the last row
    belonging to infinity.
    """

    points: np.ndarray
    weights: np.ndarray
    splitting: SplittingType
    infinity_exponents: np.ndarray

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def rank(self) -> int:
        return self.weights.shape[1]

    @property
    def degree(self) -> int:
        return int(sum(self.splitting.m))

    def weight_diag(self, i: int) -> np.ndarray:
        return np.diag(self.weights[i])

    def min_pairwise_distance(self) -> float:
        pts = self.points
        if len(pts) < 2:
            return 1.0
        return min(
            abs(pts[i] - pts[j]) for i in range(len(pts)) for j in range(i + 1, len(pts))
        )

    def default_basepoint(self) -> complex:
        return 2j * max(1.0, float(np.max(np.abs(self.points))))

    def counterterm_coefficients(self) -> tuple[float, float]:
        """(K1, K2) = (sum of squared finite weights, squared infinity exponents)."""
        k1 = float(np.sum(self.weights[:-1] ** 2))
        k2 = float(np.sum(self.infinity_exponents**2))
        return k1, k2


def build_weight_system(points, weights, degree: int | None = None) -> WeightSystem:
    """Validate weight data and fill in the evenly-split twist at infinity.

    The total weight must be a (negative of an) integer d; the evenly
    split exponents are m repeated r-p times and m+1 repeated p times
    where d = m r + p, and every exponent must lie strictly inside
    (-n, 0).  The infinity exponents are alpha_{n,j} + m'_j with
    m' the exchange-reversed exponent vector.
    """
    pts = np.asarray(points, dtype=complex).reshape(-1)
    w = np.asarray(weights, dtype=float)
    if w.ndim != 2:
        raise ValueError("weights must be an n x r matrix")
    n, r = w.shape
    if n < 3:
        raise ValueError("need at least three marked points (n >= 3)")
    if len(pts) != n - 1:
        raise ValueError(f"expected {n - 1} finite points for {n} weight rows")
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            if abs(pts[i] - pts[j]) < 1e-12:
                raise ValueError("marked points must be distinct")
    if np.any(w <= 0.0) or np.any(w >= 1.0):
        raise ValueError("weights must lie strictly inside (0, 1)")
    if np.any(np.diff(w, axis=1) <= 0.0):
        raise ValueError("weights must be strictly increasing within each row")

    total = float(np.sum(w))
    d = -round(total)
    if abs(total + d) > 1e-9:
        raise DegreeError(f"weight sum {total} is not an integer")
    if degree is not None and degree != d:
        raise DegreeError(f"declared degree {degree} != -sum(weights) = {d}")

    m, p = d // r, d - (d // r) * r
    exponents = tuple([m] * (r - p) + [m + 1] * p)
    if exponents[0] <= -n or exponents[-1] >= 0:
        raise StabilityRangeError(
            f"splitting exponents {exponents} outside the stable range (-{n}, 0)"
        )
    splitting = SplittingType(exponents)
    m_rev = np.asarray(exponents[::-1], dtype=float)
    infinity_exponents = w[-1] + m_rev
    return WeightSystem(
        points=pts, weights=w, splitting=splitting, infinity_exponents=infinity_exponents
    )


# ---------------------------------------------------------------------------
# admissible representations


def commutant_dimension(mats: list[np.ndarray], tol: float = 1e-8) -> int:
    """Dimension of {X : [X, M_i] = 0 for all i} via one SVD."""
    r = mats[0].shape[0]
    eye = np.eye(r)
    rows = [np.kron(m.T, eye) - np.kron(eye, m) for m in mats]
    big = np.vstack(rows)
    sv = np.linalg.svd(big, compute_uv=False)
    return int(np.sum(sv <= tol * max(sv[0], 1.0)))


@dataclass
class AdmissibleRep:
    """Normalized admissible unitary tuple M_1 ... M_n with product I.

    Each generator is U_i exp(2 pi i W_i) U_i^{-1}; after normalization the
    last generator is diagonal (U_n = I) with phases given by the last
    weight row.
    """

    weights: WeightSystem
    generators: list[np.ndarray]
    conjugators: list[np.ndarray]

    @property
    def n(self) -> int:
        return self.weights.n

    @property
    def rank(self) -> int:
        return self.weights.rank

    def relation_residual(self) -> float:
        prod = np.eye(self.rank, dtype=complex)
        for m in self.generators:
            prod = prod @ m
        return fro(prod - np.eye(self.rank))

    def unitarity_residual(self) -> float:
        eye = np.eye(self.rank)
        return max(fro(m @ m.conj().T - eye) for m in self.generators)

    def is_irreducible(self) -> bool:
        return commutant_dimension(self.generators) == 1

    def conjugated(self, V: np.ndarray) -> "AdmissibleRep":
        Vh = V.conj().T
        return AdmissibleRep(
            weights=self.weights,
            generators=[Vh @ m @ V for m in self.generators],
            conjugators=[Vh @ u for u in self.conjugators],
        )


def local_generator(weights: WeightSystem, i: int, U: np.ndarray) -> np.ndarray:
    phases = np.exp(TWO_PI_I * weights.weights[i])
    return U @ np.diag(phases) @ U.conj().T


def _match_to_targets(lam: np.ndarray, targets: np.ndarray) -> tuple[np.ndarray, float]:
    """Best permutation matching of eigenvalues to target phases (r <= 5)."""
    r = len(lam)
    best, best_cost = None, np.inf
    for perm in permutations(range(r)):
        cost = float(np.max(np.abs(lam[list(perm)] - targets)))
        if cost < best_cost:
            best, best_cost = perm, cost
    return np.asarray(best, dtype=int), best_cost


def unitary_eig(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a (numerically) unitary matrix with unitary V."""
    lam, V = np.linalg.eig(M)
    Q, R = np.linalg.qr(V)
    Q = Q * (np.diagonal(R) / np.abs(np.diagonal(R)))
    return lam, Q


def build_admissible_rep(
    weights: WeightSystem,
    conjugators: list[np.ndarray],
    spectrum_tol: float = 1e-6,
) -> AdmissibleRep:
    """Close U_1 .. U_{n-1} into a normalized admissible tuple.

    M_n is the inverse of the product of the first n-1 generators; it is
    accepted when its spectrum matches the infinity weight phases to
    spectrum_tol, then the whole tuple is conjugated so M_n is diagonal in
    the weight order.
    """
    n, r = weights.n, weights.rank
    if len(conjugators) != n - 1:
        raise ValueError(f"expected {n - 1} conjugators")
    us = [as_cmatrix(u, f"U_{i + 1}") for i, u in enumerate(conjugators)]
    for u in us:
        if fro(u @ u.conj().T - np.eye(r)) > 1e-10:
            raise ValueError("conjugators must be unitary")
    gens = [local_generator(weights, i, us[i]) for i in range(n - 1)]
    prod = np.eye(r, dtype=complex)
    for m in gens:
        prod = prod @ m
    m_last = prod.conj().T  # inverse of a unitary product

    targets = np.exp(TWO_PI_I * weights.weights[-1])
    lam, V = unitary_eig(m_last)
    perm, mismatch = _match_to_targets(lam, targets)
    if mismatch > spectrum_tol:
        raise NotAdmissibleError(
            f"spectrum at infinity misses the weights by {mismatch:.3e}"
        )
    V = V[:, perm]
    rep = AdmissibleRep(
        weights=weights,
        generators=gens + [m_last],
        conjugators=us + [np.eye(r, dtype=complex)],
    ).conjugated(V)
    rep.conjugators[-1] = np.eye(r, dtype=complex)
    if not rep.is_irreducible():
        warnings.warn("admissible tuple is reducible")
    return rep


def rank2_closure_conjugators(weights: WeightSystem) -> list[np.ndarray]:
    """The rigid rank-2, n=3 closure: U_1 = I and a real rotation U_2.

    With M_1 diagonal and U_2 a rotation by angle t, the trace of M_1 M_2
    moves on a straight segment in the complex plane as sin^2 t goes from
    0 to 1; closure happens where it meets the conjugate trace required at
    infinity.  Raises NotAdmissibleError when the segment misses it.
    """
    if weights.n != 3 or weights.rank != 2:
        raise ValueError("closure solve applies to n=3, rank 2 only")
    d1 = np.exp(TWO_PI_I * weights.weights[0])
    d2 = np.exp(TWO_PI_I * weights.weights[1])
    target = np.conj(np.sum(np.exp(TWO_PI_I * weights.weights[2])))
    t0 = d1[0] * d2[0] + d1[1] * d2[1]
    t1 = d1[0] * d2[1] + d1[1] * d2[0]
    if abs(t1 - t0) < 1e-14:
        raise NotAdmissibleError("degenerate weights: trace segment collapses")
    lam = (target - t0) / (t1 - t0)
    if abs(lam.imag) > 1e-9 or lam.real < -1e-12 or lam.real > 1 + 1e-12:
        raise NotAdmissibleError(
            f"no unitary closure for these weights (segment parameter {lam:.4f})"
        )
    s = np.sqrt(min(max(lam.real, 0.0), 1.0))
    c = np.sqrt(1.0 - s * s)
    u2 = np.array([[c, -s], [s, c]], dtype=complex)
    return [np.eye(2, dtype=complex), u2]


def rank2_rigid_residues(weights: WeightSystem) -> np.ndarray:
    """Closed-form residues for the rigid rank-2, n=3 system.

    In the eigenbasis of the residue at infinity the trace and the two
    determinant constraints leave a single gauge parameter; the returned
    pair (A_1, A_2) has exactly the weight spectra and
    -(A_1 + A_2) = diag(infinity exponents).
    """
    if weights.n != 3 or weights.rank != 2:
        raise ValueError("rigid residues apply to n=3, rank 2 only")
    lam1, lam2 = (float(x) for x in weights.infinity_exponents)
    if abs(lam2 - lam1) < 1e-12:
        raise ValueError("degenerate exponents at infinity")
    w1, w2 = weights.weights[0], weights.weights[1]
    tau1 = float(w1.sum())
    det1 = float(w1.prod())
    det2 = float(w2.prod())
    p = (det2 - det1 - lam1 * lam2 - lam1 * tau1) / (lam2 - lam1)
    t = tau1 - p
    qs = p * t - det1
    a1 = np.array([[p, qs], [1.0, t]], dtype=complex)
    a3 = np.diag([lam1, lam2]).astype(complex)
    a2 = -a3 - a1
    return np.array([a1, a2])


# ---------------------------------------------------------------------------
# Fuchsian systems and transport


@dataclass
class FuchsianSystem:
    """Residues A_1 .. A_{n-1} at the finite punctures of a weight system."""

    weights: WeightSystem
    residues: np.ndarray  # (n-1, r, r)

    def __post_init__(self):
        self.residues = np.asarray(self.residues, dtype=complex)
        n, r = self.weights.n, self.weights.rank
        if self.residues.shape != (n - 1, r, r):
            raise ValueError(f"residues must have shape {(n - 1, r, r)}")

    @property
    def rank(self) -> int:
        return self.weights.rank

    @property
    def points(self) -> np.ndarray:
        return self.weights.points

    def residue_at_infinity(self) -> np.ndarray:
        return -np.sum(self.residues, axis=0)

    def A_of(self, z) -> np.ndarray:
        """A(z) = sum_i A_i / (z - z_i); z may be any broadcastable array."""
        z = np.asarray(z, dtype=complex)
        denom = z[..., None, None, None] - self.points[:, None, None]
        return np.sum(self.residues / denom, axis=-3)

    def spectrum_residual(self) -> float:
        worst = 0.0
        for i in range(self.weights.n - 1):
            lam = np.sort(sorted_eigvals(self.residues[i]).real)
            worst = max(worst, float(np.max(np.abs(lam - self.weights.weights[i]))))
        return worst

    def infinity_spectrum_residual(self) -> float:
        lam = sorted_eigvals(self.residue_at_infinity())
        target = np.sort(self.weights.infinity_exponents)
        re_err = np.max(np.abs(np.sort(lam.real) - target))
        return float(max(re_err, np.max(np.abs(lam.imag))))

    def conjugated(self, g: np.ndarray) -> "FuchsianSystem":
        ginv = np.linalg.inv(g)
        return FuchsianSystem(self.weights, np.array([g @ a @ ginv for a in self.residues]))


@dataclass
class TransportResult:
    value: np.ndarray
    step_count: int
    error_estimate: float
    det_residual: float


# Dormand-Prince 5(4) tableau
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)


def _integrate_segment(rhs, y, tol: float, stats: dict) -> np.ndarray:
    """Adaptive Dormand-Prince loop over t in [0, 1] with PI step control."""
    t, h = 0.0, 0.1
    yn = max(fro(y), 1.0)
    k0 = rhs(t, y)
    err_prev = 1.0
    while t < 1.0:
        h = min(h, 1.0 - t)
        ks = [k0]
        for s in range(1, 7):
            acc = sum(a * k for a, k in zip(_DP_A[s], ks))
            ks.append(rhs(t + _DP_C[s] * h, y + h * acc))
        y5 = y + h * sum(b * k for b, k in zip(_DP_B5, ks))
        y4 = y + h * sum(b * k for b, k in zip(_DP_B4, ks))
        err = max(fro(y5 - y4) / (tol * max(yn, fro(y5))), 1e-16)
        if err <= 1.0:
            t += h
            y = y5
            k0 = ks[-1]  # FSAL
            yn = max(yn, fro(y))
            stats["steps"] += 1
            stats["err"] += err * tol * yn
            factor = 0.9 * err ** (-0.7 / 5.0) * err_prev ** (0.4 / 5.0)
            err_prev = err
        else:
            stats["rejects"] += 1
            factor = 0.9 * err ** (-0.2)
        h *= float(np.clip(factor, 0.2, 5.0))
        if h < 1e-13:
            raise StiffnessError("step size underflow during transport")
    return y


def transport(
    system: FuchsianSystem,
    path: list[paths.Segment],
    start: np.ndarray | None = None,
    tol: float = 1e-10,
    r_min: float | None = None,
    check_det: bool = True,
    precheck: bool = True,
) -> TransportResult:
    """Parallel transport of dY/dz = -A(z) Y along a piecewise path.

    The path must keep distance r_min (default: 5% of the minimal pairwise
    puncture distance) from every puncture.  The determinant identity
    log det Y_end - log det Y_start = -sum_i tr(A_i) * Delta log(z - z_i)
    is evaluated exactly from the path geometry and reported as a residual
    (skipped when check_det is false, e.g. in optimizer inner loops).
    """
    r = system.rank
    y = np.eye(r, dtype=complex) if start is None else as_cmatrix(start, "start")
    if precheck:
        if r_min is None:
            r_min = 0.05 * system.weights.min_pairwise_distance()
        for w in system.points:
            d = paths.path_min_distance(path, complex(w))
            if d < r_min:
                raise paths.ProximityError(
                    f"path comes within {d:.3e} of puncture {w} (limit {r_min:.3e})"
                )

    stats = {"steps": 0, "rejects": 0, "err": 0.0}
    value = y.copy()
    for seg in path:
        def rhs(t, Y, seg=seg):
            z = seg.point(t)
            dz = seg.velocity(t)
            return -(system.A_of(z) @ Y) * dz

        value = _integrate_segment(rhs, value, tol, stats)

    det_residual = 0.0
    if check_det:
        expected = complex(np.linalg.det(y))
        for i, w in enumerate(system.points):
            expected *= np.exp(
                -np.trace(system.residues[i]) * paths.path_log_increment(path, complex(w))
            )
        got = complex(np.linalg.det(value))
        det_residual = abs(got - expected) / max(abs(expected), 1e-300)
    return TransportResult(
        value=value,
        step_count=stats["steps"],
        error_estimate=stats["err"],
        det_residual=float(det_residual),
    )


# ---------------------------------------------------------------------------
# monodromy


def loop_radius(weights: WeightSystem, i: int, basepoint: complex) -> float:
    pts = weights.points
    others = [abs(pts[i] - pts[j]) for j in range(len(pts)) if j != i]
    others.append(abs(pts[i] - basepoint))
    return 0.5 * min(others)


def puncture_loop(
    weights: WeightSystem, i: int, basepoint: complex, ccw: bool = True
) -> list[paths.Segment]:
    """Basepoint loop around puncture i: approach, full circle, return."""
    pts = weights.points
    radius = loop_radius(weights, i, basepoint)
    center = complex(pts[i])
    entry = center + radius * (basepoint - center) / abs(basepoint - center)
    keepouts = [
        (complex(pts[j]), 0.8 * loop_radius(weights, j, basepoint))
        for j in range(len(pts))
        if j != i
    ]
    approach = paths.plan_route(basepoint, entry, keepouts)
    ang = float(np.angle(entry - center))
    loop = approach + [paths.circle(center, radius, ang, ccw=ccw)] + paths.reversed_path(approach)
    return loop


def big_circle_loop(weights: WeightSystem, basepoint: complex) -> list[paths.Segment]:
    radius = abs(basepoint)
    ang = float(np.angle(basepoint))
    return [paths.circle(0.0, radius, ang, ccw=True)]


@dataclass
class MonodromyResult:
    generators: list[np.ndarray]      # representation convention, product = I
    loop_transports: list[np.ndarray]  # raw CCW transports, loop i and big circle
    relation_residual: float
    basepoint: complex
    order: np.ndarray                  # puncture indices in relation order


def monodromy_rep(
    system: FuchsianSystem,
    basepoint: complex | None = None,
    tol: float = 1e-10,
) -> MonodromyResult:
    """Representation generators of the system's monodromy.

    Generators are inverted counterclockwise loop transports (see module
    docstring); the last generator is the big-circle transport.  The
    relation residual multiplies the generators with the finite punctures
    taken in order of increasing real part and is a genuine check because
    the big circle is integrated independently.
    """
    ws = system.weights
    z0 = ws.default_basepoint() if basepoint is None else complex(basepoint)
    n = ws.n
    transports = []
    gens = []
    for i in range(n - 1):
        res = transport(system, puncture_loop(ws, i, z0, ccw=True), tol=tol)
        transports.append(res.value)
        gens.append(np.linalg.inv(res.value))
    big = transport(system, big_circle_loop(ws, z0), tol=tol)
    transports.append(big.value)
    gens.append(big.value)

    order = np.lexsort((ws.points.imag, ws.points.real))
    prod = np.eye(ws.rank, dtype=complex)
    for i in order:
        prod = prod @ gens[i]
    prod = prod @ gens[-1]
    residual = fro(prod - np.eye(ws.rank))
    return MonodromyResult(
        generators=gens,
        loop_transports=transports,
        relation_residual=float(residual),
        basepoint=z0,
        order=order,
    )


# ---------------------------------------------------------------------------
# gauge distance between normalized tuples


def _alignment_data(a: list[np.ndarray], b: list[np.ndarray]):
    c = np.zeros_like(a[0])
    const = 0.0
    for ma, mb in zip(a, b):
        c = c + ma * np.conj(mb)
        const += fro(ma) ** 2 + fro(mb) ** 2
    return c, const


def _torus_objective(theta: np.ndarray, c: np.ndarray) -> float:
    g = np.exp(1j * theta)
    return float(np.real(np.sum(np.outer(g, np.conj(g)) * c)))


def _coordinate_ascent(theta: np.ndarray, c: np.ndarray, sweeps: int = 60) -> np.ndarray:
    r = len(theta)
    for _ in range(sweeps):
        moved = 0.0
        for j in range(r):
            g = np.exp(1j * theta)
            row = np.sum(np.delete(c[j, :] * np.conj(g), j))
            col = np.sum(np.delete(c[:, j] * g, j))
            w = row + np.conj(col)
            new = -np.angle(w) if abs(w) > 0 else theta[j]
            moved = max(moved, abs(np.angle(np.exp(1j * (new - theta[j])))))
            theta[j] = new
        if moved < 1e-14:
            break
    return theta


def rep_distance(a: AdmissibleRep, b: AdmissibleRep, starts: int = 8) -> float:
    """Gauge-invariant distance between normalized tuples.

    Minimizes sum_i ||g M_i g^{-1} - M'_i||_F^2 over diagonal unitary g
    (the residual gauge of a normalized tuple with distinct infinity
    phases) by closed-form single-angle updates from several deterministic
    starts.  Falls back to a full U(r) minimization when the infinity
    phases are degenerate.
    """
    if a.weights.weights.shape != b.weights.weights.shape:
        raise ValueError("weight data must match")
    gaps = np.diff(np.sort(a.weights.weights[-1]))
    if a.rank > 1 and np.min(gaps) < 1e-8:
        warnings.warn("repeated infinity phases: falling back to full U(r) search")
        return _rep_distance_full_unitary(a, b)
    c, const = _alignment_data(a.generators, b.generators)
    r = a.rank
    best = -np.inf
    rng = np.random.default_rng(12345)
    starts_list = [np.zeros(r)] + [rng.uniform(0, 2 * np.pi, size=r) for _ in range(starts)]
    for theta0 in starts_list:
        theta = _coordinate_ascent(theta0.copy(), c)
        best = max(best, _torus_objective(theta, c))
    return max(const - 2.0 * best, 0.0)


def _rep_distance_full_unitary(a: AdmissibleRep, b: AdmissibleRep) -> float:
    import scipy.optimize

    r = a.rank

    def unpack(x):
        H = np.zeros((r, r), dtype=complex)
        idx = 0
        for i in range(r):
            H[i, i] = x[idx]
            idx += 1
        for i in range(r):
            for j in range(i + 1, r):
                H[i, j] = x[idx] + 1j * x[idx + 1]
                H[j, i] = x[idx] - 1j * x[idx + 1]
                idx += 2
        import scipy.linalg

        return scipy.linalg.expm(1j * H)

    def cost(x):
        U = unpack(x)
        return sum(
            fro(U @ ma @ U.conj().T - mb) ** 2 for ma, mb in zip(a.generators, b.generators)
        )

    dim = r * r
    best = np.inf
    rng = np.random.default_rng(777)
    for trial in range(6):
        x0 = np.zeros(dim) if trial == 0 else rng.uniform(-np.pi, np.pi, size=dim)
        res = scipy.optimize.minimize(cost, x0, method="BFGS", options={"maxiter": 400})
        best = min(best, float(res.fun))
    return max(best, 0.0)
