"""Closest-point kernel: brute-force oracle agreement and backend parity."""

from itertools import product

import numpy as np
import pytest

from latfun.kernels import _sphere_py, available_backends


def _run(impl, gen, points):
    q, r = np.linalg.qr(gen)
    s = np.sign(np.diag(r))
    s[s == 0] = 1.0
    r = np.ascontiguousarray(s[:, None] * r)
    q = q * s[None, :]
    y = np.ascontiguousarray(points @ q)
    out = np.zeros(y.shape, dtype=np.longlong)
    impl.nearest_point_batch(r, y, out)
    return out


def _brute_force_lex(gen, x, radius=6):
    """Exhaustive box search with the lexicographic tie rule."""
    n = gen.shape[0]
    box = np.array(list(product(range(-radius, radius + 2), repeat=n)))
    pts = box @ gen.T
    d2 = np.sum((pts - x) ** 2, axis=1)
    best = d2.min()
    ties = box[d2 <= best + 1e-12]
    return min(map(tuple, ties))


def _conditioned_basis(rng, n, cond_max=4.0):
    while True:
        g = rng.normal(size=(n, n))
        if np.linalg.cond(g) < cond_max:
            return g


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_matches_brute_force_box(n, rng):
    for _ in range(6):
        gen = _conditioned_basis(rng, n)
        # Targets inside the fundamental parallelepiped keep the optimum in
        # the search box for the conditioning used here.
        t = rng.uniform(0.0, 1.0, size=(10, n))
        x = t @ gen.T
        got = _run(_sphere_py, gen, x)
        for row in range(x.shape[0]):
            assert tuple(got[row]) == _brute_force_lex(gen, x[row])


def test_tie_break_is_lexicographic():
    gen = np.eye(2)
    got = _run(_sphere_py, gen, np.array([[0.5, -0.5], [1.5, 2.5], [-0.5, -1.5]]))
    assert got.tolist() == [[0, -1], [1, 2], [-1, -2]]


def test_skewed_basis_regression(rng):
    gen = np.array([[1.0, 0.5], [0.0, np.sqrt(3.0) / 2.0]])
    x = np.array([[0.9, 0.9]])
    got = _run(_sphere_py, gen, x)
    assert tuple(got[0]) == _brute_force_lex(gen, x[0], radius=3)


@pytest.mark.skipif("cython" not in available_backends(), reason="extension not built")
def test_backend_parity(rng):
    from latfun.kernels import _sphere_cy

    for n in [1, 2, 3, 5, 8]:
        gen = _conditioned_basis(rng, n)
        x = rng.normal(size=(200, n), scale=3.0)
        assert np.array_equal(_run(_sphere_py, gen, x), _run(_sphere_cy, gen, x))


@pytest.mark.skipif("cython" not in available_backends(), reason="extension not built")
def test_backend_parity_on_boundary_targets():
    from latfun.kernels import _sphere_cy

    gen = np.eye(3)
    grid = np.array(list(product([-1.5, -0.5, 0.0, 0.5, 1.5], repeat=3)))
    assert np.array_equal(_run(_sphere_py, gen, grid), _run(_sphere_cy, gen, grid))
