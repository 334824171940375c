"""Direct factorization, BiCGStab and matrix exchange formats."""

from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from stokesdarcy.linalg import (
    KrylovConfig,
    Factorization,
    bicgstab,
    export_matrix_market,
    factorize,
    read_matrix_market,
)


def _random_system(n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Well-conditioned dense test matrix and right-hand side."""
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n)) + n * np.eye(n)
    b = rng.standard_normal(n)
    return a, b


class TestKrylovConfig:
    def test_defaults(self):
        config = KrylovConfig()
        assert config.tol == 1e-8
        assert config.maxiter == 200
        assert config.seed == 0

    @pytest.mark.parametrize(("tol", "maxiter"), [(-1e-8, 10), (1e-8, 0)])
    def test_invalid_raises(self, tol, maxiter):
        with pytest.raises(ValueError):
            KrylovConfig(tol=tol, maxiter=maxiter)


class TestFactorization:
    @given(seed=st.integers(0, 50), n=st.integers(2, 30))
    @settings(max_examples=25, deadline=None)
    def test_matches_dense_solve(self, seed, n):
        a, b = _random_system(n, seed)
        factor = factorize(sp.csr_matrix(a))
        np.testing.assert_allclose(
            factor.solve(b), np.linalg.solve(a, b), rtol=1e-9, atol=1e-12
        )

    def test_multiple_right_hand_sides(self):
        a, _ = _random_system(12, 3)
        rng = np.random.default_rng(4)
        bs = rng.standard_normal((12, 3))
        factor = factorize(sp.csc_matrix(a))
        for j in range(3):
            np.testing.assert_allclose(
                factor.solve(bs[:, j]), np.linalg.solve(a, bs[:, j]), rtol=1e-9
            )

    def test_singular_raises(self):
        a = sp.csr_matrix(np.zeros((4, 4)))
        with pytest.raises((RuntimeError, ValueError)):
            factorize(a).solve(np.ones(4))


class TestBicgstab:
    @given(seed=st.integers(0, 40), n=st.integers(2, 40))
    @settings(max_examples=25, deadline=None)
    def test_converges_on_random_systems(self, seed, n):
        a, b = _random_system(n, seed)
        x, info = bicgstab(lambda v: a @ v, b, KrylovConfig(tol=1e-10))
        assert info["converged"]
        assert np.linalg.norm(a @ x - b) <= 1e-9 * np.linalg.norm(b)

    def test_residual_history_tracks_true_residual(self):
        a, b = _random_system(25, 7)
        x, info = bicgstab(lambda v: a @ v, b, KrylovConfig(tol=1e-12))
        assert info["residuals"][0] == 1.0
        assert info["residuals"][-1] <= 1e-12
        assert info["true_residual"] <= 1e-11
        assert info["iterations"] == len(info["residuals"]) - 1

    def test_zero_rhs_short_circuits(self):
        x, info = bicgstab(lambda v: v, np.zeros(5))
        np.testing.assert_array_equal(x, np.zeros(5))
        assert info["converged"] and info["iterations"] == 0

    def test_initial_guess_used(self):
        a, b = _random_system(10, 11)
        x_exact = np.linalg.solve(a, b)
        x, info = bicgstab(lambda v: a @ v, b, x0=x_exact)
        assert info["iterations"] == 0 or info["residuals"][0] <= 1e-12
        np.testing.assert_allclose(x, x_exact, rtol=1e-8)

    def test_iteration_cap_reported(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((60, 60))  # indefinite, hard
        b = rng.standard_normal(60)
        x, info = bicgstab(lambda v: a @ v, b, KrylovConfig(tol=1e-14, maxiter=3))
        assert not info["converged"]
        assert info["iterations"] <= 3

    def test_deterministic_across_runs(self):
        a, b = _random_system(30, 13)
        x1, info1 = bicgstab(lambda v: a @ v, b, KrylovConfig(tol=1e-10, seed=5))
        x2, info2 = bicgstab(lambda v: a @ v, b, KrylovConfig(tol=1e-10, seed=5))
        np.testing.assert_array_equal(x1, x2)
        assert info1["residuals"] == info2["residuals"]

    def test_callback_sees_every_iteration(self):
        a, b = _random_system(20, 17)
        seen = []
        bicgstab(lambda v: a @ v, b, KrylovConfig(tol=1e-10), callback=seen.append)
        assert len(seen) >= 1
        assert seen[-1] <= 1e-10


class TestMatrixMarket:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(2)
        a = sp.random(15, 15, density=0.3, random_state=2, format="csr")
        path = tmp_path / "matrix.mtx"
        export_matrix_market(a, path)
        back = read_matrix_market(path)
        np.testing.assert_allclose(back.toarray(), a.toarray(), rtol=1e-12)

    def test_file_is_ascii_with_banner(self, tmp_path):
        a = sp.identity(3, format="csr")
        path = tmp_path / "eye.mtx"
        export_matrix_market(a, path)
        text = path.read_text()
        assert text.startswith("%%MatrixMarket")
