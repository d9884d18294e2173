"""Backend selection for the closest-point search kernel.

The compiled Cython kernel is preferred when built; otherwise the pure-Python
reference implementation is used. Set ``LATFUN_PURE_PYTHON=1`` to force the
fallback (used by the benchmark and by backend-parity tests).
"""

import os

import numpy as np

if os.environ.get("LATFUN_PURE_PYTHON", "") == "1":
    from . import _sphere_py as _impl
else:
    try:
        from . import _sphere_cy as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _sphere_py as _impl

BACKEND = _impl.BACKEND


def nearest_point_batch(r_mat: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Integer coordinates of the closest lattice points, row per target.

    ``r_mat`` is the upper-triangular generator factor with positive diagonal
    and ``targets`` the already rotated query points (``Q.T @ x`` rows).
    """
    targets = np.ascontiguousarray(targets, dtype=np.float64)
    r_mat = np.ascontiguousarray(r_mat, dtype=np.float64)
    out = np.zeros(targets.shape, dtype=np.longlong)
    _impl.nearest_point_batch(r_mat, targets, out)
    return out.astype(np.int64, copy=False)


def available_backends():
    """Names of importable kernel backends."""
    names = ["python"]
    try:
        from . import _sphere_cy  # noqa: F401

        names.append("cython")
    except ImportError:
        pass
    return names
