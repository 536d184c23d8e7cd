import numpy as np
import pytest

from kplane import (
    DomainError,
    Frame,
    GridField,
    GridSpec,
    LassoProblem,
    MeasurementSet,
    RidgeAtom,
    RngSeed,
    assemble,
    build_dictionary,
    kkt_residuals,
    reconstruct,
    reg_cost,
    ridge_eval,
    solve_lasso,
    support,
)


def half_circle_frames(n):
    angles = np.pi * np.arange(n) / n
    return [Frame(2, 1, np.array([[np.cos(a), np.sin(a)]])) for a in angles]


GRID = GridSpec.centered(2, 64, 0.2)


def gaussian_bumps(m, seed=123, width=0.8):
    gen = RngSeed(seed).generator()
    pts = GRID.points()
    out = []
    for _ in range(m):
        c = gen.uniform(-2.5, 2.5, size=2)
        v = np.exp(-((pts - c) ** 2).sum(-1) / (2 * width**2))
        out.append(GridField(GRID.origin, GRID.spacing, GRID.shape, v.reshape(GRID.shape)))
    return MeasurementSet(out)


def test_build_dictionary_product_count():
    dico = build_dictionary(half_circle_frames(8), np.linspace(-3, 3, 16), 2.0, 2, 1)
    assert len(dico) == 128
    assert all(atom.weight == 1.0 for atom in dico.atoms)


def test_build_dictionary_rejects_duplicates():
    frames = half_circle_frames(4) + [half_circle_frames(4)[0]]
    with pytest.raises(DomainError):
        build_dictionary(frames, [0.0, 1.0], 2.0, 2, 1)


def test_build_dictionary_rejects_orbit_duplicates():
    # (A, t) and (-A, -t) describe the same ridge
    fr = Frame(2, 1, np.array([[1.0, 0.0]]))
    fr_neg = Frame(2, 1, np.array([[-1.0, 0.0]]))
    with pytest.raises(DomainError):
        build_dictionary([fr, fr_neg], [0.5, -0.5], 2.0, 2, 1)


def test_build_dictionary_validation():
    with pytest.raises(DomainError):
        build_dictionary([], [0.0], 2.0, 2, 1)
    with pytest.raises(DomainError):
        build_dictionary(half_circle_frames(2), [0.0], 1.0, 2, 1)  # s <= d-k


def test_assemble_zero_functional_row():
    dico = build_dictionary(half_circle_frames(4), [-1.0, 0.0, 1.0], 2.0, 2, 1)
    zero = GridField.zeros(GRID)
    bump = gaussian_bumps(1).functionals[0]
    meas = MeasurementSet([zero, bump])
    g = assemble(dico, meas, GRID)
    assert np.all(g[0] == 0.0)
    assert np.any(g[1] != 0.0)


def test_assemble_column_scales_with_atom_weight():
    dico = build_dictionary(half_circle_frames(3), [0.0, 1.0], 2.0, 2, 1)
    meas = gaussian_bumps(4)
    g = assemble(dico, meas, GRID)
    atom = dico.atoms[2]
    scaled = RidgeAtom(3.0, atom.frame, atom.offset, profile="rbf", s=atom.s)
    scaled._table = atom._table
    pts = GRID.points()
    col = np.array(
        [GRID.spacing**2 * (h.values.ravel() * ridge_eval(scaled, pts)).sum()
         for h in meas.functionals]
    )
    assert np.allclose(col, 3.0 * g[:, 2], rtol=1e-12)


def test_assemble_entry_matches_fine_grid_quadrature():
    fr = Frame(2, 1, np.array([[np.cos(0.4), np.sin(0.4)]]))
    atom = RidgeAtom(1.0, fr, np.array([0.7]), profile="gaussian")
    pts = GRID.points()
    h_vals = np.exp(-((pts - np.array([0.5, -0.3])) ** 2).sum(-1) / (2 * 0.8**2))
    h = GridField(GRID.origin, GRID.spacing, GRID.shape, h_vals.reshape(GRID.shape))
    coarse = GRID.spacing**2 * (h.values.ravel() * ridge_eval(atom, pts)).sum()
    fine = GridSpec.centered(2, 256, 0.05)
    fpts = fine.points()
    fh = np.exp(-((fpts - np.array([0.5, -0.3])) ** 2).sum(-1) / (2 * 0.8**2))
    oracle = fine.spacing**2 * (fh * ridge_eval(atom, fpts)).sum()
    assert coarse == pytest.approx(oracle, abs=1e-4)


def test_solve_lasso_identity_gram_soft_threshold():
    y = np.array([2.0, -0.5, 0.05, 0.0, 1.0, -3.0])
    lam = 0.2
    prob = LassoProblem(np.eye(6), y, lam, tol=1e-14)
    a = solve_lasso(prob)
    expect = np.sign(y) * np.maximum(np.abs(y) - lam / 2, 0.0)
    assert np.abs(a - expect).max() <= 1e-10


def test_solve_lasso_small_lambda_is_least_squares():
    gen = RngSeed(0).generator()
    g = gen.normal(size=(30, 10))
    y = gen.normal(size=30)
    ls = np.linalg.lstsq(g, y, rcond=None)[0]
    a = solve_lasso(LassoProblem(g, y, 1e-12, tol=1e-16, max_iter=100000))
    assert np.abs(a - ls).max() <= 1e-6


def test_solve_lasso_zero_data():
    g = RngSeed(1).generator().normal(size=(8, 5))
    a = solve_lasso(LassoProblem(g, np.zeros(8), 0.5))
    assert np.all(a == 0.0)


def test_solve_lasso_objective_never_increases():
    gen = RngSeed(2).generator()
    g = gen.normal(size=(20, 40))
    y = gen.normal(size=20)
    lam = 0.3
    prob = LassoProblem(g, y, lam, tol=1e-13, max_iter=5000)
    a = solve_lasso(prob)
    f0 = float(y @ y)
    fa = float((y - g @ a) @ (y - g @ a)) + lam * np.abs(a).sum()
    assert fa <= f0 + 1e-12


def test_solve_lasso_rejects_nonfinite():
    with pytest.raises(DomainError):
        LassoProblem(np.array([[np.inf]]), np.array([1.0]), 0.1)
    with pytest.raises(DomainError):
        LassoProblem(np.eye(2), np.ones(2), -1.0)


def test_reg_cost():
    assert reg_cost(np.array([1.0, -2.0, 0.0])) == 3.0
    assert reg_cost(np.zeros(5)) == 0.0
    gen = RngSeed(3).generator()
    a = gen.normal(size=12)
    assert reg_cost(a) == reg_cost(a[::-1])


def test_reconstruct_zero_and_single_atom():
    dico = build_dictionary(half_circle_frames(4), [-1.0, 1.0], 2.0, 2, 1)
    grid = GridSpec.centered(2, 24, 0.4)
    zero = reconstruct(np.zeros(len(dico)), dico, grid)
    assert np.all(zero.values == 0.0)
    a = np.zeros(len(dico))
    a[5] = 2.0
    single = reconstruct(a, dico, grid)
    expect = 2.0 * ridge_eval(dico.atoms[5], grid.points()).reshape(grid.shape)
    assert np.abs(single.values - expect).max() <= 1e-12


def test_planted_two_atom_recovery():
    dico = build_dictionary(half_circle_frames(12), np.linspace(-3, 3, 16), 2.0, 2, 1)
    meas = gaussian_bumps(50)
    g = assemble(dico, meas, GRID)
    j1, j2 = 3 * 16 + 5, 9 * 16 + 11
    a_true = np.zeros(len(dico))
    a_true[j1], a_true[j2] = 1.5, -2.0
    y = g @ a_true
    lam = 1e-3 * np.abs(g.T @ y).max()
    prob = LassoProblem(g, y, lam, tol=1e-12, max_iter=50000)
    a = solve_lasso(prob)

    supp = set(support(a).tolist())
    assert len(supp) <= 50
    # one-grid-cell slack on the recovered support
    neighborhood = {j1, j1 - 1, j1 + 1, j1 - 16, j1 + 16}
    assert supp & neighborhood
    neighborhood2 = {j2, j2 - 1, j2 + 1, j2 - 16, j2 + 16}
    assert supp & neighborhood2

    inactive_excess, active_mismatch = kkt_residuals(prob, a)
    assert inactive_excess <= prob.lam / 2 * prob.tol * 10
    assert active_mismatch <= prob.lam * prob.tol * 10
    assert reg_cost(a) == np.abs(a).sum()


def test_solve_lasso_objective_sequence_non_increasing():
    gen = RngSeed(5).generator()
    g = gen.normal(size=(25, 60))
    y = gen.normal(size=25)
    history = []
    solve_lasso(LassoProblem(g, y, 0.4, tol=1e-13, max_iter=3000), on_iterate=history.append)
    diffs = np.diff(np.array(history))
    assert diffs.max() <= 1e-12
