import math

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from ccmole.irreps import (
    Irrep,
    Irreps,
    IrrepsArray,
    cg_coefficient,
    cg_table,
    check_rotation,
    equivariant_linear,
    from_blocks,
    norm_eps,
    random_rotation,
    rotate_array,
    separable_layer_norm,
    spherical_harmonics,
    tensor_product,
    to_blocks,
    wigner_d,
)

seeds = st.integers(0, 2**31 - 1)
degrees = st.integers(0, 3)


def unit(rng, n=None):
    v = rng.normal(size=(3,) if n is None else (n, 3))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def test_parse_and_str_roundtrip():
    ir = Irreps.parse("3x0e + 2x1o+1x2e")
    assert str(ir) == "3x0e+2x1o+1x2e"
    assert ir.dim == 3 + 6 + 5
    assert ir.lmax == 2
    assert Irreps.parse("1o").mults() == {Irrep(1, -1): 1}


@pytest.mark.parametrize("bad", ["3x", "2x1q", "x1e", "1e+"])
def test_parse_rejects_garbage(bad):
    with pytest.raises(ValueError):
        Irreps.parse(bad)


def test_irrep_validation():
    with pytest.raises(ValueError):
        Irrep(-1, 1)
    with pytest.raises(ValueError):
        Irrep(1, 0)


def test_flat_index_layout():
    sig = Irreps.parse("2x0e+1x1o")
    vals = np.arange(5.0)
    blocks = to_blocks(vals, sig)
    np.testing.assert_array_equal(blocks[Irrep(0, 1)], [[0.0], [1.0]])
    np.testing.assert_array_equal(blocks[Irrep(1, -1)], [[2.0, 3.0, 4.0]])


def test_irrepsarray_length_check():
    with pytest.raises(ValueError):
        IrrepsArray(Irreps.parse("1x1o"), np.zeros(4))


@given(seeds)
def test_blocks_roundtrip(seed):
    rng = np.random.default_rng(seed)
    sig = Irreps.parse("2x0e+1x1o+1x0e+2x2e")
    vals = rng.normal(size=(3, sig.dim))
    np.testing.assert_array_equal(from_blocks(to_blocks(vals, sig), sig), vals)


def test_sh_known_values():
    # l = 1 components are ordered (y, z, x)
    c = math.sqrt(3 / (4 * math.pi))
    y = spherical_harmonics(1, [0.0, 0.0, 1.0]).values
    np.testing.assert_allclose(y, [1 / math.sqrt(4 * math.pi), 0.0, c, 0.0], atol=1e-15)
    y = spherical_harmonics(1, [1.0, 0.0, 0.0]).values
    np.testing.assert_allclose(y[1:], [0.0, 0.0, c], atol=1e-15)


def test_sh_orthonormal_on_sphere():
    # Lebedev-free check: Monte Carlo is too noisy, so use a fine product grid
    nt, nphi = 60, 120
    x, w = np.polynomial.legendre.leggauss(nt)
    phi = np.arange(nphi) * 2 * np.pi / nphi
    ct, ph = np.meshgrid(x, phi, indexing="ij")
    st_ = np.sqrt(1 - ct**2)
    pts = np.stack([st_ * np.cos(ph), st_ * np.sin(ph), ct], -1).reshape(-1, 3)
    wt = (w[:, None] * np.full(nphi, 2 * np.pi / nphi)[None, :]).ravel()
    y = spherical_harmonics(3, pts).values
    gram = (y * wt[:, None]).T @ y
    np.testing.assert_allclose(gram, np.eye(16), atol=1e-12)


def test_sh_rejects_non_unit():
    with pytest.raises(ValueError):
        spherical_harmonics(1, [1.0, 1.0, 0.0])


@given(seeds, degrees)
def test_wigner_is_orthogonal_representation(seed, l):
    rng = np.random.default_rng(seed)
    r1, r2 = random_rotation(rng), random_rotation(rng)
    d1, d2 = wigner_d(l, r1), wigner_d(l, r2)
    np.testing.assert_allclose(d1 @ d1.T, np.eye(2 * l + 1), atol=1e-12)
    np.testing.assert_allclose(wigner_d(l, r1 @ r2), d1 @ d2, atol=1e-12)


@given(seeds)
def test_sh_equivariance(seed):
    rng = np.random.default_rng(seed)
    R = random_rotation(rng)
    u = unit(rng)
    y = spherical_harmonics(3, u)
    np.testing.assert_allclose(spherical_harmonics(3, R @ u).values, rotate_array(y, R).values, atol=1e-12)


def test_l1_wigner_is_permuted_rotation(rng):
    R = random_rotation(rng)
    perm = [1, 2, 0]
    np.testing.assert_allclose(wigner_d(1, R), R[np.ix_(perm, perm)], atol=1e-13)


def test_check_rotation():
    check_rotation(np.eye(3))
    with pytest.raises(ValueError):
        check_rotation(np.diag([1.0, 1.0, -1.0]))


def test_cg_scalar_coupling_value():
    for l in range(4):
        for m in range(-l, l + 1):
            assert cg_coefficient(l, m, l, m, 0, 0) == pytest.approx(1 / math.sqrt(2 * l + 1), abs=1e-14)


@pytest.mark.parametrize("l1,l2", [(1, 1), (1, 2), (2, 2), (1, 3)])
def test_cg_orthonormal_and_complete(l1, l2):
    blocks = [cg_table(l1, l2, l3).reshape(-1, 2 * l3 + 1) for l3 in range(abs(l1 - l2), l1 + l2 + 1)]
    full = np.concatenate(blocks, 1)
    n = (2 * l1 + 1) * (2 * l2 + 1)
    np.testing.assert_allclose(full.T @ full, np.eye(n), atol=1e-12)


def test_cg_triangle_zero_and_bounds():
    assert not np.any(cg_table(1, 1, 3))
    with pytest.raises(ValueError):
        cg_coefficient(1, 2, 1, 0, 1, 0)
    with pytest.raises(ValueError):
        cg_table(5, 0, 5)


@given(seeds, degrees, degrees)
def test_tensor_product_equivariance(seed, l1, l2):
    rng = np.random.default_rng(seed)
    R = random_rotation(rng)
    x, y = rng.normal(size=2 * l1 + 1), rng.normal(size=2 * l2 + 1)
    for l3 in range(abs(l1 - l2), min(l1 + l2, 4) + 1):
        lhs = tensor_product(wigner_d(l1, R) @ x, wigner_d(l2, R) @ y, l3)
        rhs = wigner_d(l3, R) @ tensor_product(x, y, l3)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_tensor_product_numpy_torch_agree(rng):
    x, y = rng.normal(size=3), rng.normal(size=5)
    a = tensor_product(x, y, 2)
    b = tensor_product(torch.tensor(x), torch.tensor(y), 2).numpy()
    np.testing.assert_allclose(a, b, atol=1e-15)


def test_equivariant_linear_shapes_and_zero_fill(rng):
    x = {Irrep(0, 1): rng.normal(size=(4, 2, 1)), Irrep(1, -1): rng.normal(size=(4, 3, 3))}
    w = {Irrep(0, 1): rng.normal(size=(5, 2))}
    out = equivariant_linear(w, x, Irreps.parse("5x0e+2x1o"))
    assert out[Irrep(0, 1)].shape == (4, 5, 1)
    assert not np.any(out[Irrep(1, -1)])
    with pytest.raises(ValueError):
        equivariant_linear({Irrep(0, 1): np.ones((5, 3))}, x, Irreps.parse("5x0e"))


@given(seeds)
def test_norm_eps_bounded_and_rotation_invariant(seed):
    rng = np.random.default_rng(seed)
    x = {Irrep(0, 1): rng.normal(size=(2, 3, 1)), Irrep(1, -1): rng.normal(size=(2, 3, 3))}
    y = norm_eps(x, 1e-3)
    total = sum((b**2).sum(axis=(-2, -1)) for b in y.values())
    assert np.all(total <= 1.0)
    R = random_rotation(rng)
    xr = {ir: b @ wigner_d(ir.l, R).T for ir, b in x.items()}
    yr = norm_eps(xr, 1e-3)
    np.testing.assert_allclose(yr[Irrep(1, -1)], y[Irrep(1, -1)] @ wigner_d(1, R).T, atol=1e-13)


def test_norm_eps_zero_input():
    x = {Irrep(0, 1): np.zeros((1, 1, 1))}
    assert not np.any(norm_eps(x, 0.0)[Irrep(0, 1)])


def test_norm_eps_is_odd(rng):
    x = {Irrep(1, -1): torch.tensor(rng.normal(size=(2, 4, 3)))}
    a = norm_eps(x, 1e-3)[Irrep(1, -1)]
    b = norm_eps({k: -v for k, v in x.items()}, 1e-3)[Irrep(1, -1)]
    assert torch.equal(a, -b)


def test_layer_norm_statistics(rng):
    x = {Irrep(0, 1): torch.tensor(rng.normal(size=(3, 8, 1))), Irrep(1, -1): torch.tensor(rng.normal(size=(3, 8, 3)))}
    gamma = {ir: torch.ones(8, dtype=torch.float64) for ir in x}
    y = separable_layer_norm(x, gamma, 0.0, 0.0)
    s = y[Irrep(0, 1)][..., 0]
    np.testing.assert_allclose(s.mean(-1).numpy(), 0.0, atol=1e-14)
    np.testing.assert_allclose(s.pow(2).mean(-1).numpy(), 1.0, atol=1e-12)
    v = y[Irrep(1, -1)]
    np.testing.assert_allclose(v.pow(2).mean(dim=(-2, -1)).numpy(), 1.0, atol=1e-12)
