import numpy as np
import pytest

from rhwznw import factor, fuchs, numcore, rhsolve


def test_residual_rank1_immediate(rank1_weights, rank1_target):
    parm = rhsolve.ResidueParametrization(
        rank1_weights, np.array([np.eye(1, dtype=complex)] * 3)
    )
    assert parm.dim == 0
    f = rhsolve.residual_vector(parm, np.zeros(0), rank1_target)
    assert np.linalg.norm(f) <= 1e-8


def test_residual_at_rigid_oracle(rank2_weights, rank2_target, rank2_oracle_system):
    parm = rhsolve.parametrization_from_system(rank2_oracle_system)
    f = rhsolve.residual_vector(parm, np.zeros(parm.dim), rank2_target)
    assert float(f @ f) <= 1e-6


def test_residual_fixed_point(rank2_solved, rank2_target):
    system, report = rank2_solved
    parm = rhsolve.parametrization_from_system(system)
    f = rhsolve.residual_vector(parm, np.zeros(parm.dim), rank2_target)
    assert float(f @ f) <= 10 * max(report.final_residual, 1e-12)


def test_residual_gauge_invariance(rank2_weights, rank2_target, rank2_oracle_system):
    parm = rhsolve.parametrization_from_system(rank2_oracle_system)
    f1 = rhsolve.residual_vector(parm, np.zeros(parm.dim), rank2_target)
    g = np.diag(np.exp(1j * np.array([0.7, -1.2])))
    conj_target = fuchs.AdmissibleRep(
        weights=rank2_target.weights,
        generators=[g @ m @ g.conj().T for m in rank2_target.generators],
        conjugators=[g @ u for u in rank2_target.conjugators],
    )
    f2 = rhsolve.residual_vector(parm, np.zeros(parm.dim), conj_target)
    assert abs(np.linalg.norm(f1) - np.linalg.norm(f2)) < 1e-10


def test_parametrization_preserves_spectra(rank2_weights):
    rng = np.random.default_rng(2)
    parm = rhsolve.ResidueParametrization(
        rank2_weights, np.array([np.eye(2, dtype=complex)] * 2)
    )
    for _ in range(10):
        x = rng.standard_normal(parm.dim)
        system = parm.system(x)
        assert system.spectrum_residual() < 1e-10


def test_solve_rank1(rank1_weights, rank1_target):
    system, report = rhsolve.solve(
        rank1_weights, rank1_target, opts=rhsolve.SolveOptions(seed=0, restarts=1)
    )
    assert report.success
    assert report.final_residual <= 1e-8
    assert np.allclose(np.diagonal(system.residues, axis1=1, axis2=2).ravel(),
                       rank1_weights.weights[:-1, 0])


def test_solve_rank2_rigid(rank2_solved, rank2_weights, rank2_target):
    system, report = rank2_solved
    assert report.final_residual <= 1e-6
    assert report.infinity_spectrum_error <= 1e-6
    assert report.large_cell_flag
    # recomputed-from-scratch invariant of the report
    mon = fuchs.monodromy_rep(system, tol=1e-10)
    aligned = rhsolve.align_tuple_to_target(mon.generators, rank2_target)
    rep = fuchs.AdmissibleRep(
        weights=rank2_weights,
        generators=aligned.generators,
        conjugators=[np.eye(2, dtype=complex)] * 3,
    )
    again = fuchs.rep_distance(rep, rank2_target)
    assert abs(again - report.final_residual) <= 1e-10 + 0.1 * report.final_residual


def test_solve_round_trip_reproduces_residues(rank2_solved, rank2_weights, rank2_target):
    # re-solving warm from the solution's own system must keep the residues
    system, _ = rank2_solved
    system2, report2 = rhsolve.solve(
        rank2_weights,
        rank2_target,
        init=system,
        opts=rhsolve.SolveOptions(seed=1, restarts=1),
    )
    assert report2.success
    assert max(
        numcore.fro(a - b) for a, b in zip(system.residues, system2.residues)
    ) <= 1e-5


def test_solve_trace_identity(rank2_solved, rank2_weights):
    system, _ = rank2_solved
    tr = sum(np.trace(a) for a in system.residues)
    assert abs(tr + np.sum(rank2_weights.infinity_exponents)) < 1e-9


def test_reducible_target_rejected():
    ws = fuchs.build_weight_system([0.0, 1.0], [[0.1, 0.6], [0.4, 0.7], [0.5, 0.7]])
    with pytest.warns(UserWarning):
        rep = fuchs.build_admissible_rep(ws, [np.eye(2, dtype=complex)] * 2)
    with pytest.raises(rhsolve.ReducibleTargetError):
        rhsolve.solve(ws, rep)


def test_normalize_rank1(rank1_system, rank1_target):
    norm = rhsolve.normalize_at_infinity(rank1_system, rank1_target)
    assert norm.large_cell_flag
    assert abs(norm.constant_term[0, 0]) > 1e-8
    assert norm.extrapolation_disagreement < 1e-3


def test_normalize_two_radius_consistency(rank2_solved, rank2_target):
    system, _ = rank2_solved
    a = rhsolve.normalize_at_infinity(system, rank2_target, radius=20.0)
    b = rhsolve.normalize_at_infinity(system, rank2_target, radius=40.0)
    # the estimates converge to the same constant term as the radius grows
    scale = numcore.fro(b.constant_term)
    assert numcore.fro(a.constant_term - b.constant_term) / scale < 1e-4
    assert a.large_cell_flag and b.large_cell_flag


def test_normalize_flag_invariant_under_left_gauge(rank2_solved, rank2_target):
    system, _ = rank2_solved
    rng = np.random.default_rng(12)
    g = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    g = g + 2.0 * np.eye(2)
    norm1 = rhsolve.normalize_at_infinity(system, rank2_target)
    norm2 = rhsolve.normalize_at_infinity(system.conjugated(g), rank2_target)
    assert norm1.large_cell_flag == norm2.large_cell_flag
    # the canonical data agree regardless of the starting gauge
    y1 = norm1.canonical_system.residues
    y2 = norm2.canonical_system.residues
    assert max(numcore.fro(a - b) for a, b in zip(y1, y2)) < 1e-5


def test_normalize_resonant_rejected(rank2_target):
    # nearly equal weights at infinity make the exponents resonant
    eps = 4e-10
    ws = fuchs.build_weight_system(
        [0.0, 1.0], [[0.2, 0.3], [0.2, 0.3], [0.5, 0.5 + eps]]
    )
    system = fuchs.FuchsianSystem(
        ws, np.array([np.diag([0.2, 0.3]), np.diag([0.2, 0.3])], dtype=complex)
    )
    with pytest.raises(rhsolve.ResonanceError):
        rhsolve.normalize_at_infinity(system, rank2_target)


def test_canonical_constant_term_is_antidiagonal(rank2_solved, rank2_target):
    system, _ = rank2_solved
    norm = rhsolve.normalize_at_infinity(system, rank2_target)
    again = rhsolve.normalize_at_infinity(norm.canonical_system, rank2_target)
    g = again.constant_term
    # Pi0 up to the free scalar of the re-alignment
    scale = g[0, 1]
    pi0 = factor.antidiagonal_permutation(2)
    assert numcore.fro(g / scale - pi0) < 1e-3
