"""Jointly Gaussian source models and exact linear-MMSE algebra.

Everything here is closed-form covariance arithmetic: estimation
coefficients, residual variances of partially decoded linear functions, and
the final combining stage. Sampling appears only in test oracles.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .errors import DegenerateSideInfo, SingularObservationGram

_COND_GUARD = 1e-10
_SYM_TOL = 1e-12
_EIG_TOL = -1e-10


@dataclass(frozen=True)
class SourceModel:
    """K jointly Gaussian sources and the linear function to reconstruct.

    ``cov`` is the K x K source covariance and ``coeffs`` the row vector c of
    the target function Z = c . X.
    """

    cov: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        cov = np.asarray(self.cov, dtype=np.float64)
        coeffs = np.asarray(self.coeffs, dtype=np.float64).reshape(-1)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise ValueError("covariance must be square")
        if cov.shape[0] != coeffs.shape[0]:
            raise ValueError("coefficient length must match covariance size")
        if np.max(np.abs(cov - cov.T)) > _SYM_TOL * max(1.0, np.max(np.abs(cov))):
            raise ValueError("covariance must be symmetric")
        if np.min(np.linalg.eigvalsh(cov)) < _EIG_TOL:
            raise ValueError("covariance must be positive semidefinite")
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def k(self) -> int:
        return self.cov.shape[0]

    @property
    def rho(self) -> float:
        """Correlation coefficient, defined for unit-variance two-user models."""
        self.require_two_user()
        return float(self.cov[0, 1])

    @property
    def c(self) -> float:
        """Scale of the second source in the two-user form Z = X1 - c X2."""
        self.require_two_user()
        return float(-self.coeffs[1])

    def require_two_user(self):
        if self.k != 2:
            raise ValueError("operation requires a two-user model")
        if abs(self.cov[0, 0] - 1.0) > 1e-12 or abs(self.cov[1, 1] - 1.0) > 1e-12:
            raise ValueError("two-user closed forms require unit source variances")
        if not 0.0 < self.cov[0, 1] < 1.0:
            raise ValueError("two-user closed forms require correlation in (0, 1)")
        if abs(self.coeffs[0] - 1.0) > 1e-12:
            raise ValueError("two-user closed forms require coefficients (1, -c)")

    def to_json(self) -> str:
        return json.dumps(
            {
                "K": self.k,
                "cov": [float(x) for x in self.cov.reshape(-1)],
                "coeffs": [float(x) for x in self.coeffs],
            },
            sort_keys=True,
        )

    @staticmethod
    def from_json(text: str) -> "SourceModel":
        payload = json.loads(text)
        k = int(payload["K"])
        cov = np.asarray(payload["cov"], dtype=np.float64).reshape(k, k)
        return SourceModel(cov, np.asarray(payload["coeffs"], dtype=np.float64))


def two_user_model(rho: float, c: float) -> SourceModel:
    """Unit-variance pair with correlation rho, target Z = X1 - c X2."""
    cov = np.array([[1.0, rho], [rho, 1.0]])
    return SourceModel(cov, np.array([1.0, -float(c)]))


@dataclass(frozen=True)
class PartitionPlan:
    """Partition of the user set, decode order, and per-user noise variances.

    ``partition`` lists disjoint nonempty cells covering 0..K-1;
    ``decode_order`` gives cell indices in decoding order; ``q`` holds one
    positive quantization-noise variance per user.
    """

    partition: Tuple[Tuple[int, ...], ...]
    decode_order: Tuple[int, ...]
    q: Tuple[float, ...]

    def __post_init__(self):
        part = tuple(tuple(int(i) for i in cell) for cell in self.partition)
        order = tuple(int(i) for i in self.decode_order)
        q = tuple(float(v) for v in self.q)
        object.__setattr__(self, "partition", part)
        object.__setattr__(self, "decode_order", order)
        object.__setattr__(self, "q", q)
        k = len(q)
        seen = [i for cell in part for i in cell]
        if not part or any(len(cell) == 0 for cell in part):
            raise ValueError("cells must be nonempty")
        if sorted(seen) != list(range(k)):
            raise ValueError("cells must be disjoint and cover all users")
        if sorted(order) != list(range(len(part))):
            raise ValueError("decode order must be a permutation of the cells")
        if any(v <= 0 for v in q):
            raise ValueError("all q values must be positive")

    @property
    def k(self) -> int:
        return len(self.q)

    def q_cell(self, cell: Tuple[int, ...]) -> float:
        return float(sum(self.q[i] for i in cell))

    def cells_in_order(self) -> Tuple[Tuple[int, ...], ...]:
        return tuple(self.partition[i] for i in self.decode_order)

    def to_json(self) -> str:
        return json.dumps(
            {
                "partition": [list(cell) for cell in self.partition],
                "order": list(self.decode_order),
                "q": list(self.q),
            },
            sort_keys=True,
        )

    @staticmethod
    def from_json(text: str) -> "PartitionPlan":
        payload = json.loads(text)
        return PartitionPlan(
            tuple(tuple(cell) for cell in payload["partition"]),
            tuple(payload["order"]),
            tuple(payload["q"]),
        )


def single_cell_plan(k: int, q: Sequence[float]) -> PartitionPlan:
    """All users in one cell (direct reconstruction of the full function)."""
    return PartitionPlan((tuple(range(k)),), (0,), tuple(q))


def singleton_plan(k: int, q: Sequence[float]) -> PartitionPlan:
    """Each user in its own cell, decoded in index order."""
    return PartitionPlan(tuple((i,) for i in range(k)), tuple(range(k)), tuple(q))


# ---------------------------------------------------------------------------
# MMSE algebra


def function_variance(model: SourceModel) -> float:
    """Variance of the target function, c Sigma c^T."""
    c = model.coeffs
    return float(c @ model.cov @ c)


def mmse_coeffs(
    model: SourceModel,
    target: Sequence[float],
    observations: Sequence[Tuple[Sequence[float], float]],
) -> Tuple[np.ndarray, float]:
    """Linear MMSE of t.X from noisy linear observations.

    Each observation is a pair ``(a_j, v_j)`` describing S_j = a_j . X + N_j
    with independent zero-mean noise of variance v_j. Returns the estimator
    coefficients w (so that t.X is estimated by w . S) and the residual
    variance. Raises ``SingularObservationGram`` when the observation
    covariance is singular beyond the conditioning guard.
    """
    t = np.asarray(target, dtype=np.float64).reshape(-1)
    prior = float(t @ model.cov @ t)
    if len(observations) == 0:
        return np.zeros(0), prior
    a = np.asarray([np.asarray(obs[0], dtype=np.float64) for obs in observations])
    v = np.asarray([float(obs[1]) for obs in observations])
    gram = a @ model.cov @ a.T + np.diag(v)
    sv = np.linalg.svd(gram, compute_uv=False)
    if sv[-1] <= _COND_GUARD * sv[0]:
        raise SingularObservationGram(
            f"observation covariance condition {sv[0] / max(sv[-1], 1e-300):.3e} exceeds guard"
        )
    cross = a @ model.cov @ t
    w = np.linalg.solve(gram, cross)
    err = prior - float(w @ cross)
    return w, max(err, 0.0)


def cell_coeff_vector(model: SourceModel, cell: Tuple[int, ...]) -> np.ndarray:
    """Coefficient vector of the partial function carried by one cell."""
    t = np.zeros(model.k)
    for i in cell:
        t[i] = model.coeffs[i]
    return t


def sigma_theta(model: SourceModel, plan: PartitionPlan):
    """Residual variance of each cell's partial function at decode time.

    Cell A sees the previously decoded partial functions through their test
    channels Z_B + Q_B (noise variance = the cell's total q); its value is
    the MMSE residual of Z_A from those observations. The first decoded cell
    has no side information, so its value is Var(Z_A). Returns a dict keyed
    by cell tuple.
    """
    out = {}
    obs = []
    for cell in plan.cells_in_order():
        t = cell_coeff_vector(model, cell)
        _, err = mmse_coeffs(model, t, obs)
        out[cell] = err
        obs.append((t, plan.q_cell(cell)))
    return out


def decoder_coeff_map(model: SourceModel, plan: PartitionPlan):
    """Per-cell MMSE combining weights over earlier cells, keyed by cell.

    For each cell A the weights multiply the previously decoded partial
    functions (in decode order) to form the side-information predictor of
    Z_A used by the sequential decoder.
    """
    out = {}
    obs = []
    for cell in plan.cells_in_order():
        t = cell_coeff_vector(model, cell)
        w, _ = mmse_coeffs(model, t, obs)
        out[cell] = w
        obs.append((t, plan.q_cell(cell)))
    return out


def final_estimator(model: SourceModel, plan: PartitionPlan) -> Tuple[np.ndarray, float]:
    """MMSE combining of all noisy partial functions into the target.

    Returns (weights aligned with ``plan.partition`` order, residual
    distortion). The observations are Z_A + Q_A for every cell A.
    """
    obs = [
        (cell_coeff_vector(model, cell), plan.q_cell(cell)) for cell in plan.partition
    ]
    w, err = mmse_coeffs(model, model.coeffs, obs)
    return w, err


# ---------------------------------------------------------------------------
# Side information


@dataclass(frozen=True)
class SideInfoModel:
    """Two sources plus one decoder side variable, jointly Gaussian.

    ``cov`` is the 3 x 3 covariance of (X1, X2, Y) and ``coeffs`` the target
    function coefficients (c1, c2) for Z = c1 X1 + c2 X2.
    """

    cov: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        cov = np.asarray(self.cov, dtype=np.float64)
        coeffs = np.asarray(self.coeffs, dtype=np.float64).reshape(-1)
        if cov.shape != (3, 3):
            raise ValueError("side-information model needs a 3 x 3 covariance")
        if coeffs.shape != (2,):
            raise ValueError("side-information model needs 2 function coefficients")
        if np.max(np.abs(cov - cov.T)) > _SYM_TOL * max(1.0, np.max(np.abs(cov))):
            raise ValueError("covariance must be symmetric")
        if np.min(np.linalg.eigvalsh(cov)) < _EIG_TOL:
            raise ValueError("covariance must be positive semidefinite")
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def source_model(self) -> SourceModel:
        return SourceModel(self.cov[:2, :2], self.coeffs)

    def function_variance(self) -> float:
        return function_variance(self.source_model)

    def side_regression(self) -> Tuple[float, float]:
        """(beta, innovations variance): E(Z|Y) = beta Y and Var(Z - E(Z|Y)).

        A noiseless degenerate side variable (Var Y = 0) contributes nothing,
        matching the no-side-information limit.
        """
        cz = np.concatenate([self.coeffs, [0.0]])
        var_z = float(cz @ self.cov @ cz)
        var_y = float(self.cov[2, 2])
        cov_zy = float(cz @ self.cov[:, 2])
        if var_y <= 0.0:
            return 0.0, var_z
        beta = cov_zy / var_y
        return beta, max(var_z - cov_zy**2 / var_y, 0.0)

    def innovations_variance(self) -> float:
        _, s = self.side_regression()
        return s


def independent_side_model(rho: float, c: float, var_y: float = 1.0) -> SideInfoModel:
    """Side variable independent of both sources (reduces to the plain pair)."""
    cov = np.array([[1.0, rho, 0.0], [rho, 1.0, 0.0], [0.0, 0.0, var_y]])
    return SideInfoModel(cov, np.array([1.0, -float(c)]))


def noisy_function_side_model(rho: float, c: float, noise_var: float) -> SideInfoModel:
    """Side variable Y = Z + W with independent noise W of the given variance.

    ``noise_var = 0`` makes Y determine Z exactly; downstream region and
    codec constructions reject that as degenerate side information.
    """
    base = two_user_model(rho, c)
    sz2 = function_variance(base)
    cz = base.cov @ base.coeffs  # Cov(X_i, Z)
    cov = np.zeros((3, 3))
    cov[:2, :2] = base.cov
    cov[:2, 2] = cz
    cov[2, :2] = cz
    cov[2, 2] = sz2 + float(noise_var)
    return SideInfoModel(cov, base.coeffs)


def require_informative(si_model: SideInfoModel, tol: float = 1e-12) -> float:
    """Innovations variance, raising when side information is degenerate."""
    s = si_model.innovations_variance()
    if s <= tol * max(si_model.function_variance(), 1.0):
        raise DegenerateSideInfo("side information determines the function exactly")
    return s
