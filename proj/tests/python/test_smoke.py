"""Smoke tests for the python bindings."""

import math

import pytest

import adjointpde as ap


def test_sparse_solve_roundtrip():
    a = ap.SparseMatrix.from_triplets(3, [(0, 0, 4.0), (1, 1, 2.0), (2, 2, 1.0), (0, 1, 1.0)])
    assert a.n_rows == 3 and a.nnz == 4
    lu = ap.LuFactorization(a)
    x = lu.solve([5.0, 2.0, 3.0])
    recovered = a.multiply(x)
    assert recovered == pytest.approx([5.0, 2.0, 3.0], abs=1e-12)


def test_singular_matrix_raises():
    zero = ap.SparseMatrix.from_triplets(2, [(0, 0, 0.0), (1, 1, 0.0)])
    with pytest.raises(ap.SingularMatrixError):
        ap.LuFactorization(zero)


def test_kron_and_shift():
    s = ap.shift_matrix(3)
    assert s.to_dense()[1][0] == 1.0
    k = ap.kron(ap.SparseMatrix.identity(2), s)
    assert k.n_rows == 6
    assert "MatrixMarket" in ap.to_matrix_market(s)


def test_tape_gradient_through_linear_solve():
    t = ap.Tape()
    a = ap.SparseMatrix.from_triplets(2, [(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0)])
    b = t.variable([1.0, 2.0], True)
    x = t.linear_solve(a, b)
    assert t.value(x) == pytest.approx([0.2, 0.6])
    grads = t.backward(t.sum(x))
    gb = grads.get(b)
    # A^T grad_b = dJ/dx = ones
    at = [[2.0, 1.0], [1.0, 3.0]]
    for row in range(2):
        assert sum(at[row][c] * gb[c] for c in range(2)) == pytest.approx(1.0, abs=1e-12)


def test_norm2_gradient():
    t = ap.Tape()
    v = t.variable([3.0, 4.0], True)
    n = t.norm2(v)
    assert t.value(n) == [5.0]
    g = t.backward(n).get(v)
    assert g == pytest.approx([0.6, 0.8])


def test_poisson_discretization():
    k = ap.poisson1d_stiffness(4)
    assert k.to_dense()[0] == [32.0, -16.0, 0.0]
    u = ap.poisson1d_solution(50, -1.0)
    assert u[24] == pytest.approx(-0.125)
    a = ap.heat_spacetime_matrix(2, 2, 1.0)
    assert a.to_dense() == [[10.0, 0.0], [-2.0, 10.0]]


def test_mlp_parameter_count_and_eval():
    assert ap.mlp_parameter_count([2, 20, 1]) == 81
    m = ap.Mlp.create([2, 20, 1], seed=0)
    assert m.n_params == 81
    out = m.eval([(0.25, 0.75), (0.5, 0.5)])
    assert len(out) == 2
    assert all(math.isfinite(v) for v in out)


def test_run_example_end_to_end(tmp_path):
    cfg = {
        "n_h": "16",
        "obs_dir": str(tmp_path / "obs"),
        "out_dir": str(tmp_path / "out"),
    }
    ap.generate_observations("ex1", cfg)
    result = ap.run_example("ex1", cfg)
    assert not result["failed"]
    assert abs(result["scalars"]["f_final"] + 1.0) <= 1e-5
    assert (tmp_path / "out" / "loss_history.csv").exists()


def test_unknown_config_key_rejected(tmp_path):
    with pytest.raises(ap.ConfigError):
        ap.generate_observations("ex1", {"bogus_key": "1", "obs_dir": str(tmp_path)})


def test_gradcheck_example():
    assert ap.gradcheck_example("ex1", seed=1) <= 1e-6
