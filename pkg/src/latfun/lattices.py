"""Finite-dimensional lattice arithmetic.

Quantization to the nearest lattice point, modulo reduction onto the basic
Voronoi region, dithered sampling, second-moment estimation, nesting checks,
coset enumeration, and generation of nested pairs from random linear codes
over a prime field.

Conventions
-----------
A lattice is the set ``{G @ u : u integer vector}`` for a nonsingular
generator matrix ``G`` (columns generate). Quantization ties on Voronoi
boundaries resolve to the lexicographically smallest integer coordinate
vector, so every operation here is deterministic. Randomized operations take
an explicit ``numpy.random.Generator``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .errors import (
    DimensionMismatch,
    InvalidPrime,
    MissingMomentEstimate,
    NonPositiveTarget,
    SingularLattice,
    TooManyCosets,
    UnsupportedDimension,
)

MAX_SPHERE_DIM = 8
MAX_COSET_ENUM = 4096

_DET_GUARD = 1e-12
_INT_TOL = 1e-9


@dataclass(frozen=True)
class MomentEstimate:
    """Second-moment estimate per dimension with its Monte Carlo error."""

    value: float
    std_error: float
    samples: int

    def to_dict(self):
        return {"value": self.value, "std_error": self.std_error, "samples": self.samples}


@dataclass(frozen=True)
class Lattice:
    """Full-rank lattice given by a generator matrix (columns generate).

    ``moment`` caches a second-moment estimate so that scaling operations can
    reuse it; diagonal generators never need the cache because their moments
    are exact.
    """

    gen: np.ndarray
    moment: Optional[MomentEstimate] = None

    def __post_init__(self):
        g = np.asarray(self.gen, dtype=np.float64)
        if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] < 1:
            raise SingularLattice("generator must be a square n x n matrix")
        object.__setattr__(self, "gen", g)
        # Scale-free singularity check: |det G| relative to the product of
        # column norms (Hadamard ratio).
        colnorms = np.linalg.norm(g, axis=0)
        if np.any(colnorms == 0.0):
            raise SingularLattice("generator has a zero column")
        det = np.linalg.det(g)
        if abs(det) / float(np.prod(colnorms)) < _DET_GUARD:
            raise SingularLattice("generator is singular within tolerance")

    @property
    def dim(self) -> int:
        return self.gen.shape[0]

    @property
    def volume(self) -> float:
        """Covolume |det G| (volume of a fundamental cell)."""
        return abs(float(np.linalg.det(self.gen)))

    @property
    def is_diagonal(self) -> bool:
        off = self.gen - np.diag(np.diag(self.gen))
        return bool(np.all(np.abs(off) <= 1e-12 * np.max(np.abs(self.gen))))

    def with_moment(self, est: MomentEstimate) -> "Lattice":
        return replace(self, moment=est)

    def scaled(self, factor: float) -> "Lattice":
        """Lattice with generator multiplied by ``factor`` (cache rescaled)."""
        est = self.moment
        if est is not None:
            est = MomentEstimate(est.value * factor**2, est.std_error * factor**2, est.samples)
        return Lattice(self.gen * factor, est)

    def to_json(self) -> str:
        payload = {
            "dim": self.dim,
            "gen": [float(x) for x in self.gen.reshape(-1)],
            "moment_cache": self.moment.to_dict() if self.moment else None,
        }
        return json.dumps(payload, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "Lattice":
        payload = json.loads(text)
        n = int(payload["dim"])
        gen = np.asarray(payload["gen"], dtype=np.float64).reshape(n, n)
        cache = payload.get("moment_cache")
        est = MomentEstimate(cache["value"], cache["std_error"], cache["samples"]) if cache else None
        return Lattice(gen, est)


@dataclass(frozen=True)
class NestedPair:
    """Fine/coarse lattice pair with verified coarse-in-fine containment."""

    fine: Lattice
    coarse: Lattice
    nesting_matrix: np.ndarray  # integer J with G_coarse = G_fine @ J

    def __post_init__(self):
        if self.fine.dim != self.coarse.dim:
            raise DimensionMismatch("fine and coarse dimensions differ")
        j = np.asarray(self.nesting_matrix)
        object.__setattr__(self, "nesting_matrix", np.rint(j).astype(np.int64))
        if not verify_nesting(self):
            raise SingularLattice("coarse lattice is not a sublattice of the fine one")

    @property
    def index(self) -> int:
        """Number of fine cosets per coarse cell, |det J|."""
        return int(round(abs(_int_det(self.nesting_matrix))))

    @property
    def nesting_ratio(self) -> float:
        """(V_coarse / V_fine)^(1/n)."""
        n = self.fine.dim
        return (self.coarse.volume / self.fine.volume) ** (1.0 / n)


def integer_lattice(dim: int, scale: float = 1.0) -> Lattice:
    """Scaled integer lattice ``scale * Z^dim`` (exact moments)."""
    return Lattice(np.eye(dim) * scale)


def hexagonal_lattice(scale: float = 1.0) -> Lattice:
    """The planar hexagonal lattice with basis [[1, 1/2], [0, sqrt(3)/2]]."""
    gen = np.array([[1.0, 0.5], [0.0, math.sqrt(3.0) / 2.0]])
    return Lattice(gen * scale)


def make_pair(fine: Lattice, coarse: Lattice) -> NestedPair:
    """Build a NestedPair, inferring the integer nesting matrix."""
    j = np.linalg.solve(fine.gen, coarse.gen)
    return NestedPair(fine, coarse, np.rint(j))


# ---------------------------------------------------------------------------
# Quantization


def _check_dim(lat: Lattice, x: np.ndarray):
    if x.shape[-1] != lat.dim:
        raise DimensionMismatch(
            f"vector length {x.shape[-1]} != lattice dimension {lat.dim}"
        )


def _round_half_down(y: np.ndarray) -> np.ndarray:
    # Nearest integer; exact halves resolve downward, which is the
    # lexicographically smaller choice per coordinate.
    return np.ceil(y - 0.5)


def _sphere_context(lat: Lattice):
    q, r = np.linalg.qr(lat.gen)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    r = signs[:, None] * r
    q = q * signs[None, :]
    return q.T.copy(), r


def nearest_point_coords(lat: Lattice, x: np.ndarray) -> np.ndarray:
    """Integer coordinates of the nearest lattice points (batched).

    ``x`` has shape (..., n). Diagonal generators use componentwise rounding
    at any dimension; general generators use exact sphere search, limited to
    n <= 8.
    """
    x = np.asarray(x, dtype=np.float64)
    _check_dim(lat, x)
    flat = x.reshape(-1, lat.dim)
    if lat.is_diagonal:
        scales = np.diag(lat.gen)
        coords = _round_half_down(flat / scales)
        return coords.astype(np.int64).reshape(x.shape)
    if lat.dim > MAX_SPHERE_DIM:
        raise UnsupportedDimension(
            f"exact sphere search limited to n <= {MAX_SPHERE_DIM}, got n = {lat.dim}"
        )
    qt, r = _sphere_context(lat)
    coords = kernels.nearest_point_batch(r, flat @ qt.T)
    return coords.reshape(x.shape)


def nearest_point(lat: Lattice, x: Sequence[float]) -> np.ndarray:
    """The lattice point closest to ``x`` (ties: lexicographically smallest
    integer coordinates)."""
    coords = nearest_point_coords(lat, np.asarray(x, dtype=np.float64))
    return coords @ lat.gen.T


def mod_lattice(lat: Lattice, x: Sequence[float]) -> np.ndarray:
    """Quantization error ``x - nearest_point(x)``; lies in the basic Voronoi
    region. Batched over leading axes."""
    x = np.asarray(x, dtype=np.float64)
    return x - nearest_point(lat, x)


def in_voronoi(lat: Lattice, x: Sequence[float]) -> bool:
    """True if ``x`` reduces to itself, i.e. its nearest lattice point is 0."""
    x = np.asarray(x, dtype=np.float64)
    coords = nearest_point_coords(lat, x)
    return bool(np.all(coords == 0))


def contains(lat: Lattice, x: Sequence[float], tol: float = _INT_TOL) -> bool:
    """Membership test: G^{-1} x is integral within ``tol``."""
    x = np.asarray(x, dtype=np.float64)
    _check_dim(lat, x)
    u = np.linalg.solve(lat.gen, x)
    return bool(np.all(np.abs(u - np.rint(u)) <= tol))


# ---------------------------------------------------------------------------
# Dither sampling and moments


def sample_dither(lat: Lattice, rng: np.random.Generator, size: int = 1) -> np.ndarray:
    """Exactly uniform samples over the basic Voronoi region, shape (size, n).

    Draws uniformly over the fundamental parallelepiped ``G [0,1)^n`` and
    reduces mod the lattice; the mod map carries any fundamental region
    uniformly onto the Voronoi cell, so no rejection loop is needed.
    """
    w = rng.random((size, lat.dim))
    u = w @ lat.gen.T
    return mod_lattice(lat, u)


def second_moment(
    lat: Lattice, samples: int = 100_000, rng: Optional[np.random.Generator] = None
) -> MomentEstimate:
    """Per-dimension second moment of a uniform Voronoi sample.

    Exact (zero standard error) for diagonal generators; Monte Carlo with the
    supplied stream otherwise.
    """
    if lat.is_diagonal:
        scales = np.diag(lat.gen)
        value = float(np.sum(scales**2) / 12.0 / lat.dim)
        return MomentEstimate(value, 0.0, 0)
    if samples < 1000:
        raise ValueError("need at least 1000 samples for a moment estimate")
    if rng is None:
        raise ValueError("a seeded numpy Generator is required for non-diagonal lattices")
    u = sample_dither(lat, rng, samples)
    per_sample = np.sum(u**2, axis=1) / lat.dim
    value = float(np.mean(per_sample))
    std_error = float(np.std(per_sample, ddof=1) / math.sqrt(samples))
    return MomentEstimate(value, std_error, samples)


def normalized_second_moment(
    lat: Lattice, samples: int = 100_000, rng: Optional[np.random.Generator] = None
) -> float:
    """Dimensionless quantizer figure of merit sigma^2 / V^(2/n)."""
    est = second_moment(lat, samples, rng)
    return est.value / lat.volume ** (2.0 / lat.dim)


def scale_to_second_moment(lat: Lattice, target: float) -> Lattice:
    """Rescale so the per-dimension second moment equals ``target``.

    Exact for diagonal generators; otherwise requires a cached moment
    estimate (attach one with ``second_moment`` + ``with_moment``).
    """
    if not target > 0:
        raise NonPositiveTarget(f"target second moment must be > 0, got {target}")
    if lat.is_diagonal:
        current = second_moment(lat).value
    elif lat.moment is not None:
        current = lat.moment.value
    else:
        raise MissingMomentEstimate(
            "non-diagonal lattice needs a cached second-moment estimate before scaling"
        )
    factor = math.sqrt(target / current)
    out = lat.scaled(factor)
    if lat.is_diagonal:
        return out
    return out.with_moment(MomentEstimate(target, lat.moment.std_error * factor**2, lat.moment.samples))


# ---------------------------------------------------------------------------
# Nesting


def verify_nesting(pair: NestedPair) -> bool:
    """True iff G_fine^{-1} G_coarse is integral within 1e-9 and |det| > 1 - 1e-9."""
    if pair.fine.dim != pair.coarse.dim:
        raise DimensionMismatch("dimension mismatch between fine and coarse")
    j = np.linalg.solve(pair.fine.gen, pair.coarse.gen)
    if not np.all(np.abs(j - np.rint(j)) <= _INT_TOL):
        return False
    det = abs(np.linalg.det(np.rint(j)))
    return bool(det > 1.0 - 1e-9)


def is_nested(fine: Lattice, coarse: Lattice) -> bool:
    """Nesting check without constructing a pair."""
    j = np.linalg.solve(fine.gen, coarse.gen)
    if not np.all(np.abs(j - np.rint(j)) <= _INT_TOL):
        return False
    return bool(abs(np.linalg.det(np.rint(j))) > 1.0 - 1e-9)


def _int_det(m: np.ndarray) -> int:
    """Exact determinant of a small integer matrix (fraction-free Gauss)."""
    a = [[int(v) for v in row] for row in np.asarray(m)]
    n = len(a)
    sign = 1
    prev = 1
    for k in range(n - 1):
        if a[k][k] == 0:
            for r in range(k + 1, n):
                if a[r][k] != 0:
                    a[k], a[r] = a[r], a[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
            a[i][k] = 0
        prev = a[k][k]
    return sign * a[n - 1][n - 1]


def _row_echelon_integer(rows):
    """Integer row echelon form via unimodular row operations.

    Input rows generate a full-rank sublattice of Z^n; returns an n x n
    upper-triangular basis (row i pivots at column i, positive diagonal).
    """
    work = [list(map(int, r)) for r in rows]
    n = len(work[0])
    basis = []
    for col in range(n):
        live = [r for r in work if r[col] != 0]
        while len(live) > 1:
            live.sort(key=lambda r: abs(r[col]))
            pivot = live[0]
            for r in live[1:]:
                f = r[col] // pivot[col]
                for j in range(n):
                    r[j] -= f * pivot[j]
            live = [r for r in work if r[col] != 0]
        if not live:
            raise SingularLattice("generator rows are rank deficient")
        pivot = live[0]
        if pivot[col] < 0:
            for j in range(n):
                pivot[j] = -pivot[j]
        basis.append(pivot)
        work = [r for r in work if r is not pivot and any(r)]
    return basis


def coset_leaders(pair: NestedPair) -> np.ndarray:
    """All fine-lattice points inside the coarse Voronoi cell, shape (index, n).

    Boundary ties follow the nearest-point convention, so the leaders form an
    exact transversal of the fine-modulo-coarse cosets.
    """
    index = pair.index
    if index > MAX_COSET_ENUM:
        raise TooManyCosets(f"nesting index {index} exceeds guard {MAX_COSET_ENUM}")
    n = pair.fine.dim
    # Coset representatives of Z^n / (J Z^n): box spanned by the diagonal of
    # an upper-triangular row basis of the row span of J^T.
    h = _row_echelon_integer(np.asarray(pair.nesting_matrix).T.tolist())
    diag = [h[i][i] for i in range(n)]
    grids = np.meshgrid(*[np.arange(d) for d in diag], indexing="ij")
    reps = np.stack([g.reshape(-1) for g in grids], axis=1).astype(np.float64)
    points = reps @ pair.fine.gen.T
    leaders = mod_lattice(pair.coarse, points)
    return leaders


@dataclass(frozen=True)
class CodeConstruction:
    """Nested pair generated from a random linear code over a prime field."""

    pair: NestedPair
    code_matrix: np.ndarray  # k x n over Z_p as drawn
    prime: int
    rank: int

    @property
    def coset_count(self) -> int:
        return self.prime**self.rank

    @property
    def rank_deficient(self) -> bool:
        return self.rank < self.code_matrix.shape[0]


def _is_prime(p: int) -> bool:
    if p < 2:
        return False
    for d in range(2, int(math.isqrt(p)) + 1):
        if p % d == 0:
            return False
    return True


def _rref_mod_p(mat: np.ndarray, p: int):
    """Reduced row echelon form over Z_p; returns (rows, pivot columns)."""
    a = [[int(x) % p for x in row] for row in mat]
    k = len(a)
    n = len(a[0])
    pivots = []
    r = 0
    for col in range(n):
        piv = next((i for i in range(r, k) if a[i][col] % p != 0), None)
        if piv is None:
            continue
        a[r], a[piv] = a[piv], a[r]
        inv = pow(a[r][col], p - 2, p)
        a[r] = [(v * inv) % p for v in a[r]]
        for i in range(k):
            if i != r and a[i][col] % p != 0:
                f = a[i][col]
                a[i] = [(a[i][j] - f * a[r][j]) % p for j in range(n)]
        pivots.append(col)
        r += 1
        if r == k:
            break
    return a[:r], pivots


def construction_a(
    coarse: Lattice, p: int, k: int, rng: np.random.Generator
) -> CodeConstruction:
    """Nested pair from a random k x n linear code over Z_p.

    Draws the code generator i.i.d. uniform over Z_p, lifts its row space C
    to the lattice ``(1/p) C + Z^n`` and maps through the coarse generator,
    yielding a fine lattice containing the coarse one with p^rank cosets.
    Rank-deficient draws are reported, not rejected; the coset count adjusts.
    """
    if not _is_prime(p):
        raise InvalidPrime(f"p = {p} is not prime")
    n = coarse.dim
    if not 1 <= k < n:
        raise ValueError(f"code dimension k must satisfy 1 <= k < n, got k = {k}")
    mat = np.asarray(rng.integers(0, p, size=(k, n)), dtype=np.int64)
    rref, pivots = _rref_mod_p(mat, p)
    rank = len(pivots)
    # Basis of the integer lattice p * ((1/p) C + Z^n) = C + p Z^n:
    # RREF rows lifted to Z, plus p e_j for non-pivot columns j.
    rows = [list(r) for r in rref]
    for j in range(n):
        if j not in pivots:
            e = [0] * n
            e[j] = p
            rows.append(e)
    basis_int = _row_echelon_integer(rows)
    b = np.asarray(basis_int, dtype=np.float64).T / p  # columns generate (1/p)(C + p Z^n)
    fine_gen = coarse.gen @ b
    fine = Lattice(fine_gen)
    j_mat = np.linalg.solve(fine_gen, coarse.gen)
    pair = NestedPair(fine, coarse, np.rint(j_mat))
    return CodeConstruction(pair=pair, code_matrix=mat, prime=p, rank=rank)
