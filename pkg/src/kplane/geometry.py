"""Dimensional constants, Haar sampling on Stiefel manifolds, and frame algebra.

A ``Frame`` is a matrix A with (d-k) orthonormal rows; together with an
offset t in R^(d-k) it parameterizes the k-plane {x : A x = t}.  Pairs
(A, t) and (U A, U t) describe the same plane for any orthogonal U, so
several helpers below work modulo that identification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

ORTHONORMALITY_TOL = 1e-12


@dataclass(frozen=True)
class RngSeed:
    """Reproducible random stream: (seed, stream) fully determines all draws."""

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=(int(self.seed), int(self.stream)))
        return np.random.Generator(np.random.PCG64(seq))

    def substream(self, offset: int) -> "RngSeed":
        """Independent stream for a concurrent worker."""
        return RngSeed(self.seed, self.stream + 1 + offset)


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngSeed):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngSeed or numpy Generator, got {type(rng)!r}")


@dataclass(frozen=True, eq=False)
class Frame:
    """Element of V_{d-k}(R^d): a (d-k) x d matrix with orthonormal rows."""

    d: int
    k: int
    rows: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not (1 <= self.k <= self.d - 1):
            raise DomainError(f"need 1 <= k <= d-1, got d={self.d}, k={self.k}")
        rows = np.asarray(self.rows, dtype=float)
        if rows.shape != (self.d - self.k, self.d):
            raise DomainError(
                f"frame rows must be ({self.d - self.k}, {self.d}), got {rows.shape}"
            )
        gram = rows @ rows.T
        defect = np.linalg.norm(gram - np.eye(self.d - self.k))
        if defect > 1e-10:
            raise DomainError(f"frame rows not orthonormal (defect {defect:.3e})")
        object.__setattr__(self, "rows", rows)

    @property
    def m(self) -> int:
        """Codimension d - k (number of rows)."""
        return self.d - self.k


@dataclass(frozen=True, eq=False)
class Rotation:
    """Orthogonal matrix U in O(m)."""

    m: int
    mat: np.ndarray = field(repr=False)

    def __post_init__(self):
        mat = np.asarray(self.mat, dtype=float)
        if mat.shape != (self.m, self.m):
            raise DomainError(f"rotation must be ({self.m}, {self.m}), got {mat.shape}")
        defect = np.linalg.norm(mat @ mat.T - np.eye(self.m))
        if defect > 1e-10:
            raise DomainError(f"matrix not orthogonal (defect {defect:.3e})")
        object.__setattr__(self, "mat", mat)

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.mat))


def sphere_area(n: int) -> float:
    """Surface area of the unit sphere S^(n-1) in R^n: 2 pi^(n/2) / Gamma(n/2)."""
    if n < 1:
        raise DomainError(f"sphere dimension must be >= 1, got {n}")
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def _check_dk(d: int, k: int) -> None:
    if not (isinstance(d, int) and isinstance(k, int)) and not (
        float(d).is_integer() and float(k).is_integer()
    ):
        raise DomainError(f"d, k must be integers, got {d}, {k}")
    if not (1 <= k <= d - 1):
        raise DomainError(f"need 1 <= k <= d-1, got d={d}, k={k}")


def c_constant(d: int, k: int) -> float:
    """Filtered-backprojection constant for the k-plane transform in R^d.

    c_{d,k} = (2 pi)^-k * |S^(k-1)| / |S^(d-k-1)| / prod_{n=k}^{d-1} |S^(n-1)|,
    which makes the ramp-filtered backprojection the identity.  Recovers the
    classical Radon constants: c_{2,1} = 1/(4 pi), c_{3,2} = 1/(8 pi^2).
    """
    _check_dk(d, k)
    prod = 1.0
    for n in range(k, d):
        prod *= sphere_area(n)
    return (2.0 * math.pi) ** (-k) * sphere_area(k) / sphere_area(d - k) / prod


def stiefel_total_mass(d: int, k: int) -> float:
    """Unnormalized Haar mass of V_{d-k}(R^d) under this package's convention.

    vol(V_{d-k}(R^d)) = prod_{j=k+1}^{d} |S^(j-1)|, fixed so that the d=2, k=1
    case is the circle length 2 pi.  Monte-Carlo frame averages are scaled by
    this mass to approximate Haar integrals, and the convention is validated
    end to end by ``transform.calibrate_gain``.
    """
    _check_dk(d, k)
    prod = 1.0
    for j in range(k + 1, d + 1):
        prod *= sphere_area(j)
    return prod


def _sign_fixed_qr(mat: np.ndarray) -> np.ndarray:
    """QR orthonormalization with the R diagonal forced positive.

    Applied to a standard Gaussian matrix this yields exactly Haar-distributed
    orthonormal columns.
    """
    q, r = np.linalg.qr(mat)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def haar_frame_sample(d: int, k: int, rng) -> Frame:
    """Haar-distributed frame: sign-fixed QR of a d x (d-k) Gaussian matrix."""
    _check_dk(d, k)
    gen = _as_generator(rng)
    while True:
        g = gen.normal(size=(d, d - k))
        if np.linalg.matrix_rank(g) == d - k:  # a.s. true; re-draw otherwise
            break
    return Frame(d, k, _sign_fixed_qr(g).T)


def haar_orthogonal_sample(m: int, rng) -> Rotation:
    """Haar-distributed element of O(m) (for m=1: +1 or -1 with probability 1/2)."""
    if m < 1:
        raise DomainError(f"need m >= 1, got {m}")
    gen = _as_generator(rng)
    while True:
        g = gen.normal(size=(m, m))
        if np.linalg.matrix_rank(g) == m:
            break
    return Rotation(m, _sign_fixed_qr(g))


def complete_frame(frame: Frame) -> np.ndarray:
    """Orthonormal basis B (d x k) of the k-plane direction space A^perp.

    Columns of B complete the rows of A to an orthonormal basis of R^d;
    deterministic given A (full QR of A^T).
    """
    d, m = frame.d, frame.m
    q, _ = np.linalg.qr(frame.rows.T, mode="complete")
    b = q[:, m:]
    # Align the leading block with A^T so [A^T | B] is orthogonal by construction.
    resid = np.linalg.norm(frame.rows @ b)
    if resid > ORTHONORMALITY_TOL * max(1.0, d):
        raise DomainError(f"complement construction failed (residual {resid:.3e})")
    return b


def rotate_pair(frame: Frame, t: np.ndarray, rot: Rotation) -> tuple[Frame, np.ndarray]:
    """Map (A, t) to (U A, U t); both parameterize the same k-plane."""
    t = np.asarray(t, dtype=float)
    if rot.m != frame.m:
        raise DomainError(f"rotation dim {rot.m} != frame codimension {frame.m}")
    if t.shape != (frame.m,):
        raise DomainError(f"offset must have shape ({frame.m},), got {t.shape}")
    return Frame(frame.d, frame.k, rot.mat @ frame.rows), rot.mat @ t


def frobenius_distance(a: np.ndarray | Frame, b: np.ndarray | Frame) -> float:
    """Plain embedded (chordal) distance ||A - B||_F between Stiefel points."""
    ra = a.rows if isinstance(a, Frame) else np.asarray(a)
    rb = b.rows if isinstance(b, Frame) else np.asarray(b)
    return float(np.linalg.norm(ra - rb))


def orbit_distance(a: np.ndarray | Frame, b: np.ndarray | Frame) -> float:
    """Rotation-invariant distance min_U ||U A - B||_F.

    Computed from the singular values of A B^T, so it respects the
    (A, t) ~ (U A, U t) identification of k-planes.
    """
    ra = a.rows if isinstance(a, Frame) else np.asarray(a)
    rb = b.rows if isinstance(b, Frame) else np.asarray(b)
    m = ra.shape[0]
    s = np.linalg.svd(ra @ rb.T, compute_uv=False)
    return math.sqrt(max(0.0, 2.0 * m - 2.0 * float(s.sum())))


def align_rotation(src: np.ndarray | Frame, dst: np.ndarray | Frame) -> np.ndarray:
    """Orthogonal V minimizing ||V A_src - A_dst||_F (orthogonal Procrustes)."""
    ra = src.rows if isinstance(src, Frame) else np.asarray(src)
    rb = dst.rows if isinstance(dst, Frame) else np.asarray(dst)
    p, _, qt = np.linalg.svd(ra @ rb.T)
    return qt.T @ p.T
