import math

import numpy as np
import pytest

from kahlernet.projective import (
    HomPoint,
    Hypersurface,
    SingularPointError,
    choose_chart,
    eval_poly,
    eval_poly_batch,
    eval_sections,
    eval_sections_batch,
    fermat,
    grad_poly,
    grad_poly_batch,
    monomials,
    read_hypersurface,
    section_count,
    write_hypersurface,
)


def test_linear_basis_on_cp1():
    b = monomials(2, 1)
    assert b.exponents.tolist() == [[1, 0], [0, 1]]
    np.testing.assert_array_equal(b.norms, [1.0, 1.0])
    assert len(monomials(5, 1)) == 5


def test_quadratic_norms_and_sum_identity():
    b = monomials(2, 2)
    np.testing.assert_allclose(b.norms, [1, math.sqrt(2), 1], rtol=0, atol=1e-15)
    s = eval_sections(b, np.array([1, 2]))
    assert abs(np.sum(np.abs(s) ** 2) - 25) < 1e-12


@pytest.mark.parametrize("nv", range(2, 7))
def test_section_count_binomial(nv):
    for k in range(1, 11):
        b = monomials(nv, k)
        assert len(b) == section_count(nv, k) == math.comb(nv - 1 + k, k)
        # graded-lex, no repeats, all of degree k
        assert np.all(b.exponents.sum(axis=1) == k)
        assert len({tuple(e) for e in b.exponents}) == len(b)


def test_graded_lex_order_is_deterministic():
    e = monomials(3, 2).exponents.tolist()
    assert e == [[2, 0, 0], [1, 1, 0], [1, 0, 1], [0, 2, 0], [0, 1, 1], [0, 0, 2]]


def test_invalid_basis_dimensions():
    with pytest.raises(ValueError):
        monomials(1, 2)
    with pytest.raises(ValueError):
        monomials(3, -1)


def test_section_examples():
    np.testing.assert_allclose(eval_sections(monomials(2, 1), HomPoint([1, 0])), [1, 0])
    np.testing.assert_allclose(eval_sections(monomials(2, 2), HomPoint([1, 1])), [1, math.sqrt(2), 1])
    np.testing.assert_allclose(eval_sections(monomials(2, 2), HomPoint([2, 0])), [4, 0, 0])


@pytest.mark.parametrize("nv,k", [(2, 3), (3, 4), (5, 2), (6, 3)])
def test_norm_identity_at_random_points(nv, k):
    rng = np.random.default_rng(nv * 10 + k)
    z = rng.standard_normal((100, nv)) + 1j * rng.standard_normal((100, nv))
    s = eval_sections_batch(monomials(nv, k), z)
    lhs = np.sum(np.abs(s) ** 2, axis=1)
    rhs = np.sum(np.abs(z) ** 2, axis=1) ** k
    assert np.max(np.abs(lhs / rhs - 1)) < 1e-12


def test_sections_homogeneous():
    rng = np.random.default_rng(3)
    b = monomials(4, 3)
    z = rng.standard_normal((50, 4)) + 1j * rng.standard_normal((50, 4))
    lam = 0.7 - 1.3j
    lhs = eval_sections_batch(b, lam * z)
    rhs = lam ** 3 * eval_sections_batch(b, z)
    assert np.max(np.abs(lhs - rhs)) < 1e-12 * np.max(np.abs(rhs))


def test_homogeneous_point_validation():
    with pytest.raises(ValueError):
        HomPoint([0, 0, 0])
    with pytest.raises(ValueError):
        HomPoint([1])
    p = HomPoint([3, 4j]).normalize()
    assert abs(np.linalg.norm(p.coords) - 1) < 1e-14


def test_hypersurface_validation():
    with pytest.raises(ValueError):
        Hypersurface(3, 2, np.array([[2, 0, 0], [1, 0, 0]]), np.ones(2))
    with pytest.raises(ValueError):
        Hypersurface(3, 2, np.array([[2, 0, 0]]), np.ones(2))


def test_fermat_values():
    h = fermat()
    assert eval_poly(h, HomPoint([1, -1, 0, 0, 0])) == 0
    np.testing.assert_allclose(grad_poly(h, HomPoint([1, 0, 0, 0, 0])), [5, 0, 0, 0, 0])


def test_euler_identity():
    rng = np.random.default_rng(0)
    h = Hypersurface(5, 5, np.vstack([5 * np.eye(5, dtype=int), np.ones((1, 5), int), [[2, 1, 0, 1, 1]]]),
                     rng.standard_normal(7) + 1j * rng.standard_normal(7))
    z = rng.standard_normal((100, 5)) + 1j * rng.standard_normal((100, 5))
    f = eval_poly_batch(h, z)
    euler = np.einsum("pi,pi->p", z, grad_poly_batch(h, z))
    assert np.max(np.abs(euler - 5 * f) / np.abs(5 * f)) < 1e-12


def test_gradient_matches_complex_difference():
    rng = np.random.default_rng(1)
    h = fermat(4, 3)
    z = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    g = grad_poly(h, z)
    eps = 1e-6
    for i in range(4):
        e = np.zeros(4)
        e[i] = eps
        fd = (eval_poly(h, z + e) - eval_poly(h, z - e)) / (2 * eps)
        assert abs(fd - g[i]) < 1e-7 * abs(g[i])


def test_chart_examples():
    h = fermat()
    c = choose_chart(h, HomPoint([1, -1, 0, 0, 0]))
    assert (c.affine_index, c.dependent_index) == (0, 1)
    assert c.free_indices == (2, 3, 4)
    c = choose_chart(h, HomPoint([0, 0, 0, 1, -1]))
    assert (c.affine_index, c.dependent_index) == (3, 4)


def test_chart_on_projective_space_has_no_dependent():
    c = choose_chart(None, HomPoint([0.1, 2, 0.3]))
    assert c.affine_index == 1 and c.dependent_index is None and c.dim == 2


def test_singular_point_raises():
    h = Hypersurface(5, 2, np.array([[1, 1, 0, 0, 0]]), np.ones(1))
    with pytest.raises(SingularPointError):
        choose_chart(h, HomPoint([0, 0, 1, 0, 0]))


def test_chart_phase_invariance():
    rng = np.random.default_rng(5)
    h = fermat()
    from kahlernet.sampling import sample_hypersurface
    ss = sample_hypersurface(h, 200, seed=2)
    for z in ss.coords:
        c0 = choose_chart(h, z)
        c1 = choose_chart(h, z * np.exp(1j * rng.uniform(0, 2 * np.pi)))
        assert c0 == c1


def test_hypersurface_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    h = Hypersurface(4, 3, np.array([[3, 0, 0, 0], [1, 1, 1, 0], [0, 0, 1, 2]]),
                     rng.standard_normal(3) + 1j * rng.standard_normal(3))
    write_hypersurface(h, tmp_path / "f.hyp")
    text = (tmp_path / "f.hyp").read_text().splitlines()
    assert text[0] == "HYPERSURFACE 4 3"
    back = read_hypersurface(tmp_path / "f.hyp")
    np.testing.assert_array_equal(back.coeffs, h.coeffs)
    np.testing.assert_array_equal(back.exponents, h.exponents)
    assert back.digest() == h.digest()
