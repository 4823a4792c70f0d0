"""Inverse problem: residues with prescribed spectra matching a target
unitary monodromy, plus the canonical normalization at infinity.

The unknowns are conjugators C_i in the chart C_i = B_i exp(K_i) with
zero-diagonal K_i (the right-diagonal torus acting trivially on
A_i = C_i W_i C_i^{-1} is removed exactly); restarts move the basepoints
B_i.  The merit function compares gauge-aligned computed monodromy
generators with the target tuple entrywise and adds a 10x-weighted
penalty on the spectrum of the residue at infinity, which pins the
splitting type.

Gauge alignment of a computed tuple proceeds in three steps: conjugate by
the (ordered) eigenbasis of the last generator, balance the tuple over
the positive diagonal group (Osborne sweeps in Frobenius norm - away
from the solution the tuple is only conjugate to a unitary one, and
balancing lands on the unitary gauge when one exists), then align the
remaining diagonal-unitary freedom in closed form.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import factor, fuchs, paths
from .numcore import NumericalError, fro


class ResonanceError(NumericalError):
    """Infinity exponents resonant (integer differences): unsupported."""


class ReducibleTargetError(ValueError):
    pass


# ---------------------------------------------------------------------------
# parametrization


@dataclass
class ResidueParametrization:
    """Chart for residue tuples with exact spectra.

    C_i = B_i exp(K_i) with K_i zero-diagonal; A_i = C_i W_i C_i^{-1}
    has spectrum exactly the i-th weight row at every chart point.
    """

    weights: fuchs.WeightSystem
    basepoints: np.ndarray  # (n-1, r, r)

    @property
    def dim(self) -> int:
        n, r = self.weights.n, self.weights.rank
        return 2 * (r * r - r) * (n - 1)

    def _unpack(self, x: np.ndarray) -> np.ndarray:
        n, r = self.weights.n, self.weights.rank
        ks = np.zeros((n - 1, r, r), dtype=complex)
        off = [(a, b) for a in range(r) for b in range(r) if a != b]
        per = 2 * len(off)
        for i in range(n - 1):
            chunk = x[i * per : (i + 1) * per]
            for m, (a, b) in enumerate(off):
                ks[i, a, b] = chunk[2 * m] + 1j * chunk[2 * m + 1]
        return ks

    def conjugators(self, x: np.ndarray) -> np.ndarray:
        ks = self._unpack(np.asarray(x, dtype=float))
        return np.array([self.basepoints[i] @ scipy.linalg.expm(ks[i]) for i in range(len(ks))])

    def residues(self, x: np.ndarray) -> np.ndarray:
        cs = self.conjugators(x)
        out = []
        for i, c in enumerate(cs):
            w = self.weights.weight_diag(i)
            out.append(c @ w @ np.linalg.inv(c))
        return np.array(out)

    def system(self, x: np.ndarray) -> fuchs.FuchsianSystem:
        return fuchs.FuchsianSystem(self.weights, self.residues(x))


def parametrization_from_system(system: fuchs.FuchsianSystem) -> ResidueParametrization:
    """Chart centered at an existing system (eigenvector basepoints)."""
    bases = []
    for i in range(system.weights.n - 1):
        lam, v = np.linalg.eig(system.residues[i])
        order = np.argsort(lam.real)
        v = v[:, order]
        lam = lam[order]
        if np.max(np.abs(lam.real - system.weights.weights[i])) > 1e-6:
            warnings.warn("system spectra deviate from the weights; chart recentered")
        bases.append(v / np.linalg.norm(v, axis=0, keepdims=True))
    return ResidueParametrization(system.weights, np.array(bases))


# ---------------------------------------------------------------------------
# gauge alignment


def _balance_positive_diagonal(mats: list[np.ndarray], sweeps: int = 200) -> np.ndarray:
    """Positive diagonal D minimizing sum ||D M D^{-1}||_F^2 (Osborne sweeps)."""
    r = mats[0].shape[0]
    lam = np.zeros(r)
    sq = sum(np.abs(m) ** 2 for m in mats)
    for _ in range(sweeps):
        moved = 0.0
        for j in range(r):
            ej = np.exp(-2 * lam)
            row = float(np.sum(np.delete(sq[j, :] * ej, j)))
            col = float(np.sum(np.delete(sq[:, j] * np.exp(2 * lam), j)))
            if row <= 0 or col <= 0:
                continue
            new = 0.25 * np.log(col / row)
            moved = max(moved, abs(new - lam[j]))
            lam[j] = new
        lam -= lam.mean()
        if moved < 1e-14:
            break
    return np.exp(lam)


@dataclass
class TupleAlignment:
    generators: list[np.ndarray]
    conjugator: np.ndarray  # W with computed_i = W aligned_i W^{-1}
    mismatch: float


def align_tuple_to_target(
    computed: list[np.ndarray], target: fuchs.AdmissibleRep
) -> TupleAlignment:
    """Conjugate a computed tuple as close as possible to the target tuple."""
    r = target.rank
    targets_last = np.exp(fuchs.TWO_PI_I * target.weights.weights[-1])
    lam, v = np.linalg.eig(computed[-1])
    perm, _ = fuchs._match_to_targets(lam, targets_last)
    v = v[:, perm]
    v = v / np.linalg.norm(v, axis=0, keepdims=True)
    vinv = np.linalg.inv(v)
    gens = [vinv @ m @ v for m in computed]

    d = _balance_positive_diagonal(gens)
    dmat, dinv = np.diag(d), np.diag(1.0 / d)
    gens = [dmat @ m @ dinv for m in gens]

    c, _ = fuchs._alignment_data(gens, target.generators)
    theta = fuchs._coordinate_ascent(np.zeros(r), c)
    best_val = fuchs._torus_objective(theta, c)
    rng = np.random.default_rng(2024)
    for _ in range(6):
        cand = fuchs._coordinate_ascent(rng.uniform(0, 2 * np.pi, r), c)
        val = fuchs._torus_objective(cand, c)
        if val > best_val:
            theta, best_val = cand, val
    g = np.diag(np.exp(1j * theta))
    gens = [g @ m @ g.conj().T for m in gens]
    mismatch = sum(fro(a - b) ** 2 for a, b in zip(gens, target.generators))
    conj = v @ np.diag(1.0 / d) @ np.diag(np.exp(-1j * theta))
    return TupleAlignment(generators=gens, conjugator=conj, mismatch=float(mismatch))


# ---------------------------------------------------------------------------
# residual


class _MonodromyProblem:
    """Precomputed loop geometry for repeated monodromy evaluations."""

    def __init__(self, weights: fuchs.WeightSystem, basepoint: complex | None = None):
        self.weights = weights
        self.z0 = weights.default_basepoint() if basepoint is None else complex(basepoint)
        self.loops = [
            fuchs.puncture_loop(weights, i, self.z0, ccw=True)
            for i in range(weights.n - 1)
        ]
        self.big = fuchs.big_circle_loop(weights, self.z0)
        self.order = np.lexsort((weights.points.imag, weights.points.real))

    def generators(self, system: fuchs.FuchsianSystem, tol: float) -> list[np.ndarray]:
        gens = []
        for loop in self.loops:
            res = fuchs.transport(system, loop, tol=tol, check_det=False, precheck=False)
            gens.append(np.linalg.inv(res.value))
        big = fuchs.transport(system, self.big, tol=tol, check_det=False, precheck=False)
        gens.append(big.value)
        return gens


def residual_vector(
    parm: ResidueParametrization,
    x: np.ndarray,
    target: fuchs.AdmissibleRep,
    problem: _MonodromyProblem | None = None,
    transport_tol: float = 1e-9,
    infinity_weight: float = 10.0,
) -> np.ndarray:
    """Concatenated gauge-aligned monodromy and infinity-spectrum residuals."""
    if problem is None:
        problem = _MonodromyProblem(parm.weights)
    system = parm.system(x)
    gens = problem.generators(system, transport_tol)
    aligned = align_tuple_to_target(gens, target)
    pieces = []
    for a, b in zip(aligned.generators, target.generators):
        d = (a - b).ravel()
        pieces.append(d.real)
        pieces.append(d.imag)
    lam = np.linalg.eigvals(system.residue_at_infinity())
    lam = lam[np.argsort(lam.real)]
    tgt = np.sort(parm.weights.infinity_exponents)
    pieces.append(infinity_weight * (lam.real - tgt))
    pieces.append(infinity_weight * lam.imag)
    return np.concatenate(pieces)


# ---------------------------------------------------------------------------
# Levenberg-Marquardt


@dataclass
class SolveOptions:
    tol: float = 1e-6
    max_iter: int = 200
    restarts: int = 10
    seed: int = 0
    transport_tol: float = 1e-9
    fd_step: float = 1e-6
    verbose: bool = False


@dataclass
class SolveReport:
    final_residual: float
    iterations: int
    objective_history: list[float]
    infinity_spectrum_error: float
    large_cell_flag: bool
    success: bool
    restart_index: int
    message: str = ""


def _levenberg_marquardt(func, x0: np.ndarray, opts: SolveOptions):
    """Small dense LM with central-difference Jacobian and Nielsen damping."""
    x = x0.copy()
    f = func(x)
    cost = float(f @ f)
    history = [cost]
    lam, nu = 1e-3, 2.0
    n_iter = 0
    # cost is on the squared scale of the gauge distance; push well below the
    # acceptance tolerance so downstream single-valuedness of h is clean,
    # down to the noise floor set by the transport tolerance
    target_cost = max(opts.tol**2, (10.0 * opts.transport_tol) ** 2)
    for n_iter in range(1, opts.max_iter + 1):
        if cost <= target_cost:
            break
        m, n = len(f), len(x)
        J = np.zeros((m, n))
        for j in range(n):
            h = opts.fd_step * max(1.0, abs(x[j]))
            xp, xm = x.copy(), x.copy()
            xp[j] += h
            xm[j] -= h
            J[:, j] = (func(xp) - func(xm)) / (2 * h)
        g = J.T @ f
        if np.linalg.norm(g, np.inf) < 1e-14:
            break
        JtJ = J.T @ J
        improved = False
        for _ in range(25):
            try:
                delta = np.linalg.solve(JtJ + lam * np.eye(n), -g)
            except np.linalg.LinAlgError:
                lam *= nu
                nu *= 2
                continue
            x_new = x + delta
            f_new = func(x_new)
            cost_new = float(f_new @ f_new)
            predicted = float(delta @ (lam * delta - g))
            rho = (cost - cost_new) / predicted if predicted > 0 else -1.0
            if cost_new < cost and rho > 0:
                x, f, cost = x_new, f_new, cost_new
                lam = lam * max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
                nu = 2.0
                improved = True
                break
            lam *= nu
            nu *= 2.0
            if lam > 1e12:
                break
        history.append(cost)
        if not improved:
            break
        if len(history) > 3 and abs(history[-3] - cost) < 1e-16 * (1 + cost):
            break
    return x, cost, n_iter, history


def _computed_rep(
    parm: ResidueParametrization,
    x: np.ndarray,
    target: fuchs.AdmissibleRep,
    problem: _MonodromyProblem,
    tol: float,
) -> tuple[fuchs.AdmissibleRep, TupleAlignment]:
    system = parm.system(x)
    gens = problem.generators(system, tol)
    aligned = align_tuple_to_target(gens, target)
    rep = fuchs.AdmissibleRep(
        weights=parm.weights,
        generators=aligned.generators,
        conjugators=[np.eye(parm.weights.rank, dtype=complex)] * parm.weights.n,
    )
    return rep, aligned


def solve(
    weights: fuchs.WeightSystem,
    target: fuchs.AdmissibleRep,
    init: fuchs.FuchsianSystem | None = None,
    opts: SolveOptions | None = None,
) -> tuple[fuchs.FuchsianSystem, SolveReport]:
    """Find residues with the weight spectra whose monodromy matches the target.

    Levenberg-Marquardt from deterministic multi-starts; success means the
    recomputed gauge distance between the solution's monodromy and the
    target is at most opts.tol.  The returned report carries the
    large-cell flag from the normalization at infinity.
    """
    opts = opts or SolveOptions()
    if not target.is_irreducible():
        raise ReducibleTargetError("target representation is reducible")
    n, r = weights.n, weights.rank
    problem = _MonodromyProblem(weights)

    best = None
    rng_master = np.random.default_rng(opts.seed)
    seeds = rng_master.integers(0, 2**63 - 1, size=max(opts.restarts, 1))
    for restart, seed in enumerate(seeds):
        rng = np.random.default_rng(seed)
        if restart == 0 and init is not None:
            parm = parametrization_from_system(init)
        elif restart == 0:
            parm = ResidueParametrization(
                weights, np.array([np.eye(r, dtype=complex)] * (n - 1))
            )
        else:
            bases = []
            for _ in range(n - 1):
                k = 0.6 * (rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r)))
                np.fill_diagonal(k, 0.0)
                bases.append(scipy.linalg.expm(k))
            parm = ResidueParametrization(weights, np.array(bases))

        def func(x, parm=parm):
            return residual_vector(
                parm, x, target, problem=problem, transport_tol=opts.transport_tol
            )

        x0 = np.zeros(parm.dim)
        if parm.dim == 0:
            x, cost, iters, history = x0, float(func(x0) @ func(x0)), 0, []
        else:
            x, cost, iters, history = _levenberg_marquardt(func, x0, opts)

        rep, aligned = _computed_rep(parm, x, target, problem, opts.transport_tol)
        final = fuchs.rep_distance(rep, target)
        cand = (final, restart, parm, x, iters, history)
        if best is None or cand[0] < best[0]:
            best = cand
        if opts.verbose:
            print(f"restart {restart}: cost {cost:.3e} final {final:.3e}")
        if final <= opts.tol:
            break

    final, restart, parm, x, iters, history = best
    system = parm.system(x)
    success = final <= opts.tol
    large_cell = False
    if success:
        try:
            norm = normalize_at_infinity(system, target, problem=problem)
            large_cell = norm.large_cell_flag
        except NumericalError as exc:
            warnings.warn(f"normalization at infinity failed: {exc}")
    report = SolveReport(
        final_residual=float(final),
        iterations=iters,
        objective_history=history,
        infinity_spectrum_error=system.infinity_spectrum_residual(),
        large_cell_flag=large_cell,
        success=success,
        restart_index=restart,
        message="converged" if success else "no restart reached tolerance",
    )
    return system, report


# ---------------------------------------------------------------------------
# normalization at infinity


@dataclass
class NormalizationResult:
    constant_term: np.ndarray
    large_cell_flag: bool
    canonical_system: fuchs.FuchsianSystem
    basepoint: complex
    basepoint_value: np.ndarray  # canonical fundamental solution at the basepoint
    extrapolation_disagreement: float
    right_conjugator: np.ndarray
    left_gauge: np.ndarray


def _coset_flag(G: np.ndarray, splitting: factor.SplittingType) -> bool:
    """Whether G lies in P_N Pi0 N(r): the Bruhat permutation of G must sit
    in the W(i_1) x ... x W(i_s) coset of the antidiagonal.

    Only the rank-pattern permutation is needed, never the full
    factorization (whose triangular factors blow up near cell boundaries
    that are interior to the coset).  For a single-block splitting the
    coset is all of W(r) and invertibility decides.
    """
    r = G.shape[0]
    if np.linalg.cond(G) > 1e10:
        return False
    if splitting.partition == (r,):
        return True
    pi = factor.bruhat_permutation(G)
    pi0 = factor.antidiagonal_permutation(r)
    w = pi @ pi0
    for sl in splitting.block_slices():
        block_sum = np.sum(w[sl, sl])
        if abs(block_sum - (sl.stop - sl.start)) > 1e-9:
            return False
    return True


def normalize_at_infinity(
    system: fuchs.FuchsianSystem,
    target: fuchs.AdmissibleRep,
    problem: _MonodromyProblem | None = None,
    transport_tol: float = 1e-10,
    radius: float | None = None,
    disagreement_tol: float = 1e-3,
) -> NormalizationResult:
    """Estimate the constant term at infinity and renormalize to the
    canonical fundamental solution.

    The right conjugator W aligns the monodromy with the target unitary
    tuple; the constant term G of Y(z) z^{-(N'+W_n)} is then estimated at
    radii R and 2R on the upward ray through the basepoint and Richardson
    extrapolated.  When G Pi0-membership in the large-cell coset holds,
    the solution is left-normalized so the constant term becomes Pi0.
    """
    ws = system.weights
    diffs = ws.infinity_exponents[:, None] - ws.infinity_exponents[None, :]
    off = np.abs(diffs - np.round(diffs))
    mask = ~np.eye(len(ws.infinity_exponents), dtype=bool)
    if ws.rank > 1 and np.min(off[mask]) < 1e-6:
        raise ResonanceError("infinity exponents have (near) integer differences")

    if problem is None:
        problem = _MonodromyProblem(ws)
    gens = problem.generators(system, transport_tol)
    aligned = align_tuple_to_target(gens, target)
    W = aligned.conjugator
    z0 = problem.z0

    if radius is None:
        radius = 20.0 * max(1.0, float(np.max(np.abs(ws.points))))
    lam = np.asarray(ws.infinity_exponents, dtype=complex)

    def g_at(R: float) -> np.ndarray:
        # straight continuation of the basepoint ray outwards
        end = z0 * (R / abs(z0))
        ray = [paths.Line(z0, end)]
        res = fuchs.transport(system, ray, tol=transport_tol, check_det=False)
        y = res.value @ W
        logz = np.log(abs(end)) + 1j * np.angle(end)
        return y * np.exp(-lam[None, :] * logz)

    g1, g2, g4 = g_at(radius), g_at(2 * radius), g_at(4 * radius)
    G_a = 2.0 * g2 - g1
    G_b = 2.0 * g4 - g2
    # three-point extrapolation removes both 1/R and 1/R^2 tails
    G = (g1 - 6.0 * g2 + 8.0 * g4) / 3.0
    disagreement = fro(G_b - G_a) / max(fro(G), 1e-300)
    if disagreement > disagreement_tol:
        warnings.warn(
            f"constant-term extrapolation disagreement {disagreement:.2e}; "
            "expansion unreliable"
        )

    flag = bool(_coset_flag(G, ws.splitting))
    if flag:
        pi0 = factor.antidiagonal_permutation(ws.rank)
        left = pi0 @ np.linalg.inv(G)
        canonical = system.conjugated(left)
        y0 = left @ W
    else:
        left = np.eye(ws.rank, dtype=complex)
        canonical = system
        y0 = W
    return NormalizationResult(
        constant_term=G,
        large_cell_flag=flag,
        canonical_system=canonical,
        basepoint=z0,
        basepoint_value=y0,
        extrapolation_disagreement=float(disagreement),
        right_conjugator=W,
        left_gauge=left,
    )
