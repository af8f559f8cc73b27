"""Both kernel backends must agree with each other and with plain oracles."""

from __future__ import annotations

import numpy as np
import pytest

from acmsum import kernels

RNG = np.random.default_rng(1234)
BACKENDS = ["numpy"] + (["numba"] if kernels.HAS_NUMBA else [])


def impl(name: str, backend: str):
    np_fn, nb_fn = kernels.KERNEL_PAIRS[name]
    return np_fn if backend == "numpy" else nb_fn


@pytest.mark.parametrize("backend", BACKENDS)
class TestSoftmaxRows:
    def test_rows_sum_to_one(self, backend):
        x = RNG.normal(size=(50, 17)) * 10
        p = impl("softmax_rows", backend)(x)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(p > 0)

    def test_large_values_no_overflow(self, backend):
        p = impl("softmax_rows", backend)(np.array([[1000.0, 1000.0]]))
        np.testing.assert_allclose(p, [[0.5, 0.5]], atol=1e-15)

    def test_grad_matches_dense_jacobian(self, backend):
        x = RNG.normal(size=(4, 6))
        p = impl("softmax_rows", backend)(x)
        gout = RNG.normal(size=(4, 6))
        gin = impl("softmax_rows_grad", backend)(p, gout)
        for i in range(4):
            jac = np.diag(p[i]) - np.outer(p[i], p[i])
            np.testing.assert_allclose(gin[i], jac @ gout[i], atol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
class TestLayerNormRows:
    def test_zero_mean(self, backend):
        x = RNG.normal(size=(20, 9)) * 3
        y, inv_std = impl("layer_norm_rows", backend)(x, 1e-5)
        np.testing.assert_allclose(y.mean(axis=1), 0.0, atol=1e-12)
        assert inv_std.shape == (20,)

    def test_variance_contract(self, backend):
        # exact output variance is var/(var+eps)
        x = RNG.normal(size=(10, 16))
        y, _ = impl("layer_norm_rows", backend)(x, 1e-5)
        var = x.var(axis=1)
        np.testing.assert_allclose(y.var(axis=1), var / (var + 1e-5), atol=1e-12)

    def test_constant_row_is_zero(self, backend):
        y, _ = impl("layer_norm_rows", backend)(np.ones((1, 3)), 1e-5)
        np.testing.assert_allclose(y, 0.0, atol=0)


@pytest.mark.parametrize("backend", BACKENDS)
class TestGelu:
    def test_zero_fixed_point(self, backend):
        assert impl("gelu", backend)(np.zeros(3)).tolist() == [0.0, 0.0, 0.0]

    def test_matches_erf_formula(self, backend):
        from scipy.special import erf

        x = RNG.normal(size=(7, 5)) * 2
        expected = 0.5 * x * (1 + erf(x / np.sqrt(2)))
        np.testing.assert_allclose(impl("gelu", backend)(x), expected, atol=1e-14)

    def test_grad_matches_finite_difference(self, backend):
        x = RNG.normal(size=64)
        h = 1e-6
        fn = impl("gelu", backend)
        numeric = (fn(x + h) - fn(x - h)) / (2 * h)
        analytic = impl("gelu_grad", backend)(x, np.ones_like(x))
        np.testing.assert_allclose(analytic, numeric, atol=1e-8)


@pytest.mark.parametrize("backend", BACKENDS)
def test_scatter_add_accumulates_duplicates(backend):
    out = np.zeros((5, 3))
    ids = np.array([0, 2, 0, 4], dtype=np.int64)
    vals = RNG.normal(size=(4, 3))
    impl("scatter_add_rows", backend)(out, ids, vals)
    expected = np.zeros((5, 3))
    np.add.at(expected, ids, vals)
    np.testing.assert_allclose(out, expected, atol=0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_adam_step_matches_reference(backend):
    p = RNG.normal(size=32)
    g = RNG.normal(size=32)
    m = RNG.normal(size=32) * 0.1
    v = np.abs(RNG.normal(size=32)) * 0.1
    lr, b1, b2, eps, t = 1e-3, 0.9, 0.999, 1e-8, 7
    bias1, bias2 = 1 - b1**t, 1 - b2**t

    m_ref = b1 * m + (1 - b1) * g
    v_ref = b2 * v + (1 - b2) * g * g
    p_ref = p - lr * (m_ref / bias1) / (np.sqrt(v_ref / bias2) + eps)

    p2, m2, v2 = p.copy(), m.copy(), v.copy()
    impl("adam_step", backend)(p2, g, m2, v2, lr, b1, b2, eps, bias1, bias2)
    np.testing.assert_allclose(p2, p_ref, atol=1e-15)
    np.testing.assert_allclose(m2, m_ref, atol=1e-15)
    np.testing.assert_allclose(v2, v_ref, atol=1e-15)


class TestLcsLen:
    CASES = [
        ([], [1, 2], 0),
        ([1, 2, 3], [1, 2, 3], 3),
        ([1, 2, 3, 4], [2, 4], 2),
        ([1, 3, 5, 7], [2, 4, 6, 8], 0),
        ([1, 2, 1, 2], [2, 1, 2, 1], 3),
    ]

    @pytest.mark.parametrize("backend", BACKENDS)
    @pytest.mark.parametrize("a,b,expected", CASES)
    def test_known_cases(self, backend, a, b, expected):
        fn = impl("lcs_len", backend)
        assert fn(np.array(a, dtype=np.int64), np.array(b, dtype=np.int64)) == expected

    @pytest.mark.parametrize("backend", BACKENDS)
    def test_against_recursive_oracle(self, backend):
        from functools import lru_cache

        fn = impl("lcs_len", backend)
        for trial in range(25):
            a = RNG.integers(0, 5, size=RNG.integers(0, 12)).astype(np.int64)
            b = RNG.integers(0, 5, size=RNG.integers(0, 12)).astype(np.int64)

            @lru_cache(maxsize=None)
            def rec(i, j):
                if i == 0 or j == 0:
                    return 0
                if a[i - 1] == b[j - 1]:
                    return rec(i - 1, j - 1) + 1
                return max(rec(i - 1, j), rec(i, j - 1))

            assert fn(a, b) == rec(len(a), len(b))
            rec.cache_clear()


@pytest.mark.skipif(not kernels.HAS_NUMBA, reason="numba unavailable")
def test_backends_agree_on_random_inputs():
    x = RNG.normal(size=(30, 12)) * 5
    for name in ("softmax_rows",):
        np_fn, nb_fn = kernels.KERNEL_PAIRS[name]
        np.testing.assert_allclose(np_fn(x), nb_fn(x), atol=1e-14)
    y_np, s_np = kernels.KERNEL_PAIRS["layer_norm_rows"][0](x, 1e-5)
    y_nb, s_nb = kernels.KERNEL_PAIRS["layer_norm_rows"][1](x, 1e-5)
    np.testing.assert_allclose(y_np, y_nb, atol=1e-13)
    np.testing.assert_allclose(s_np, s_nb, atol=1e-13)
