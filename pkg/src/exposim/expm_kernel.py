"""Dense matrix exponential by scaling and squaring with diagonal Pade approximants.

Besides the full double-precision routine this module offers reduced policies
that fix the Pade order to 1, 2, 3, 5 or 7 (0 to 4 matrix-matrix products) with
no scaling, and the exponential integrals of an affine linear system computed
through an augmented matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg
import scipy.linalg.lapack

from exposim.errors import SingularDenominatorError

__all__ = [
    "PadePolicy",
    "ExpIntegrals",
    "FULL",
    "balance",
    "pade_coefficients",
    "pade_expm",
    "expm_multiply",
    "compute_integrals",
    "augmented_matrix",
]

# Order used by each reduced policy, indexed by its number of matrix products.
MMM_TO_ORDER = (1, 2, 3, 5, 7)
VALID_ORDERS = (1, 2, 3, 5, 7, 13)

_gebal, _getrf, _getrs = scipy.linalg.lapack.get_lapack_funcs(("gebal", "getrf", "getrs"), dtype=float)
_EPS = np.finfo(float).eps

# Largest 1-norm for which the [13/13] approximant reaches unit roundoff.
THETA_13 = 5.371920351148152


@dataclass(frozen=True)
class PadePolicy:
    """Pade order, scaling exponent and matrix-product budget.

    ``scaling=None`` means the exponent is chosen per matrix from its 1-norm
    (only used by the full policy).
    """

    order: int
    scaling: int | None = 0
    mmm: int | str = "full"

    def __post_init__(self):
        if self.order not in VALID_ORDERS:
            raise ValueError(f"Pade order must be one of {VALID_ORDERS}, got {self.order}")
        if self.scaling is not None and self.scaling < 0:
            raise ValueError("scaling exponent must be non-negative")
        if self.mmm != "full":
            if self.mmm not in range(len(MMM_TO_ORDER)) or MMM_TO_ORDER[self.mmm] != self.order:
                raise ValueError(f"mmm={self.mmm!r} does not match order {self.order}")

    @classmethod
    def full(cls) -> PadePolicy:
        return cls(order=13, scaling=None, mmm="full")

    @classmethod
    def reduced(cls, mmm: int) -> PadePolicy:
        if mmm not in range(len(MMM_TO_ORDER)):
            raise ValueError(f"mmm must be in 0..4, got {mmm}")
        return cls(order=MMM_TO_ORDER[mmm], scaling=0, mmm=mmm)

    @classmethod
    def parse(cls, value) -> PadePolicy:
        """Build a policy from ``"full"`` or an integer 0..4 (string or int)."""
        if isinstance(value, PadePolicy):
            return value
        text = str(value).strip().lower()
        if text == "full":
            return cls.full()
        try:
            mmm = int(text)
        except ValueError:
            raise ValueError(f"unknown mmm policy {value!r}") from None
        return cls.reduced(mmm)

    @property
    def label(self) -> str:
        return str(self.mmm)

    def scaling_for(self, A: np.ndarray) -> int:
        if self.scaling is not None:
            return self.scaling
        norm = np.linalg.norm(A, 1)
        if not np.isfinite(norm):
            raise SingularDenominatorError("matrix has non-finite entries")
        if norm <= THETA_13:
            return 0
        return max(0, int(math.ceil(math.log2(norm / THETA_13))))


FULL = PadePolicy.full()


class ExpIntegrals(NamedTuple):
    x_int: np.ndarray
    x_int2: np.ndarray


def balance(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal similarity ``A_bal = D^-1 A D`` with power-of-2 entries in ``D``.

    Returns the diagonal of ``D`` (as a vector) and the balanced matrix.
    """
    A = np.asarray(A, dtype=float)
    if A.shape[0] <= 1 or not np.any(A):
        return np.ones(A.shape[0]), A.copy()
    A_bal, _, _, scale, info = _gebal(A, scale=1, permute=0)
    if info != 0:
        return np.ones(A.shape[0]), A.copy()
    return scale, A_bal


def pade_coefficients(order: int) -> np.ndarray:
    """Coefficients c_k of the numerator N_j(x) = sum c_k x^k, with c_0 = 1."""
    j = order
    return np.array(
        [
            math.factorial(2 * j - k) * math.factorial(j)
            / (math.factorial(2 * j) * math.factorial(k) * math.factorial(j - k))
            for k in range(j + 1)
        ]
    )


_COEFFS = {j: pade_coefficients(j) for j in VALID_ORDERS}


def _pade_parts(A: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Return (U, V) with N_j(A) = V + U and D_j(A) = V - U.

    U holds the odd powers and V the even ones. The number of matrix products
    is 0, 1, 2, 3, 4 and 6 for orders 1, 2, 3, 5, 7 and 13.
    """
    c = _COEFFS[order]
    n = A.shape[0]
    eye = np.eye(n)
    if order == 1:
        return c[1] * A, c[0] * eye
    A2 = A @ A
    if order == 2:
        return c[1] * A, c[0] * eye + c[2] * A2
    if order == 3:
        return A @ (c[3] * A2 + c[1] * eye), c[2] * A2 + c[0] * eye
    A4 = A2 @ A2
    if order == 5:
        U = A @ (c[5] * A4 + c[3] * A2 + c[1] * eye)
        return U, c[4] * A4 + c[2] * A2 + c[0] * eye
    A6 = A4 @ A2
    if order == 7:
        U = A @ (c[7] * A6 + c[5] * A4 + c[3] * A2 + c[1] * eye)
        return U, c[6] * A6 + c[4] * A4 + c[2] * A2 + c[0] * eye
    # order 13, nested evaluation
    U = A @ (
        A6 @ (c[13] * A6 + c[11] * A4 + c[9] * A2)
        + c[7] * A6 + c[5] * A4 + c[3] * A2 + c[1] * eye
    )
    V = A6 @ (c[12] * A6 + c[10] * A4 + c[8] * A2) + c[6] * A6 + c[4] * A4 + c[2] * A2 + c[0] * eye
    return U, V


def _solve(D: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Dense LU solve with partial pivoting and a pivot-ratio singularity test."""
    lu, piv, info = _getrf(D)
    diag = np.abs(lu.diagonal())
    if info < 0 or not np.all(np.isfinite(diag)) or diag.min() <= D.shape[0] * _EPS * diag.max():
        raise SingularDenominatorError("Pade denominator is numerically singular")
    x, info = _getrs(lu, piv, rhs)
    return x


def pade_expm(A: np.ndarray, policy: PadePolicy = FULL) -> np.ndarray:
    """Matrix exponential of ``A`` under the given Pade policy."""
    A = np.asarray(A, dtype=float)
    s = policy.scaling_for(A)
    As = A / 2.0**s if s else A
    U, V = _pade_parts(As, policy.order)
    E = _solve(V - U, V + U)
    for _ in range(s):
        E = E @ E
    return E


def expm_multiply(A: np.ndarray, V: np.ndarray, policy: PadePolicy = FULL) -> np.ndarray:
    """Product ``exp(A) @ V`` without forming ``exp(A)`` when no scaling is needed.

    The numerator is applied to ``V`` first and the denominator system is then
    solved with only ``V.shape[1]`` right-hand sides.
    """
    A = np.asarray(A, dtype=float)
    V = np.asarray(V, dtype=float)
    s = policy.scaling_for(A)
    As = A / 2.0**s if s else A
    U, Ev = _pade_parts(As, policy.order)
    if s == 0:
        return _solve(Ev - U, (Ev + U) @ V)
    E = _solve(Ev - U, Ev + U)
    for _ in range(s - 1):
        E = E @ E
    return E @ (E @ V)


def augmented_matrix(A: np.ndarray, b: np.ndarray, x0: np.ndarray) -> np.ndarray:
    """The (n+3)x(n+3) matrix whose exponential contains x_int and x_int2."""
    n = A.shape[0]
    Abar = np.zeros((n + 3, n + 3))
    Abar[:n, :n] = A
    Abar[:n, n] = b
    Abar[:n, n + 1] = x0
    Abar[n, n + 1] = 1.0
    Abar[n + 1, n + 2] = 1.0
    return Abar


def compute_integrals(
    A: np.ndarray,
    b: np.ndarray,
    x0: np.ndarray,
    dt: float,
    policy: PadePolicy = FULL,
) -> ExpIntegrals:
    """First and second time integrals over ``[0, dt]`` of the solution of x' = Ax + b.

    The augmented matrix is balanced before exponentiation and the scaling is
    undone on the two extracted columns.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    n = A.shape[0]
    d, Abal = balance(dt * augmented_matrix(A, b, x0))
    V = np.zeros((n + 3, 2))
    V[n + 1, 0] = 1.0 / d[n + 1]
    V[n + 2, 1] = 1.0 / d[n + 2]
    W = expm_multiply(Abal, V, policy)
    W = W[:n] * d[:n, None]
    return ExpIntegrals(W[:, 0].copy(), W[:, 1].copy())
