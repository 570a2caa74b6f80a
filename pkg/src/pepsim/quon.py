"""Ignatiev-Kuzmin oscillator and the quon commutation relation.

The violation probability beta^2/2 is the canonical quantity throughout the
package. It is stored directly rather than derived from q, because values
such as 4.7e-29 cannot be represented as q = -1 + 2p in double precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from pepsim.errors import ContractError


@dataclass(frozen=True)
class QuonParameter:
    """Deformation parameter q with its IK amplitude beta.

    Build with :meth:`from_q` or :meth:`from_violation_probability`.
    """

    violation_probability: float

    def __post_init__(self):
        p = self.violation_probability
        if not (0.0 <= p <= 1.0) or math.isnan(p):
            raise ValueError(f"violation probability must lie in [0, 1], got {p!r}")

    @classmethod
    def from_q(cls, q: float) -> "QuonParameter":
        if not (-1.0 <= q <= 1.0):
            raise ValueError(f"q must lie in [-1, 1], got {q!r}")
        return cls((1.0 + q) / 2.0)

    @classmethod
    def from_violation_probability(cls, p: float) -> "QuonParameter":
        return cls(float(p))

    @classmethod
    def from_beta(cls, beta: float) -> "QuonParameter":
        if beta < 0:
            raise ValueError(f"beta must be non-negative, got {beta!r}")
        return cls(beta * beta / 2.0)

    @property
    def q(self) -> float:
        return 2.0 * self.violation_probability - 1.0

    @property
    def beta(self) -> float:
        return math.sqrt(2.0 * self.violation_probability)


@dataclass(frozen=True)
class IkOperatorSet:
    creation: np.ndarray
    annihilation: np.ndarray
    beta: float


def build_ik_operators(beta: float) -> IkOperatorSet:
    """Dense 3x3 matrices on the basis (|0>, |1>, |2>).

    Column j of ``creation`` is the image of |j>.
    """
    if beta < 0 or math.isnan(beta):
        raise ValueError(f"beta must be non-negative, got {beta!r}")
    creation = np.zeros((3, 3))
    creation[1, 0] = 1.0
    creation[2, 1] = beta
    annihilation = creation.T.copy()
    creation.flags.writeable = False
    annihilation.flags.writeable = False
    return IkOperatorSet(creation, annihilation, float(beta))


def quon_residuals(q: float, operators: IkOperatorSet) -> tuple[float, float]:
    """Max-norm residuals of the quon relation on span(|0>,|1>) and on the full space.

    Both the direct form ``a a+ - q a+ a - 1`` and the Bose/Fermi average
    ``(1+q)/2 [a, a+] + (1-q)/2 {a, a+} - 1`` are evaluated; the larger residual
    of the two is returned for each space.
    """
    a = np.asarray(operators.annihilation, dtype=float)
    ad = np.asarray(operators.creation, dtype=float)
    if a.shape != (3, 3) or ad.shape != (3, 3):
        raise ContractError(
            f"expected 3x3 operators, got {a.shape} and {ad.shape}"
        )
    if abs(q) > 1:
        raise ContractError(f"|q| must be <= 1, got {q!r}")
    eye = np.eye(3)
    aad = a @ ad
    ada = ad @ a
    direct = aad - q * ada - eye
    averaged = 0.5 * (1 + q) * (aad - ada) + 0.5 * (1 - q) * (aad + ada) - eye
    sub = max(np.abs(direct[:2, :2]).max(), np.abs(averaged[:2, :2]).max())
    full = max(np.abs(direct).max(), np.abs(averaged).max())
    return float(sub), float(full)


def check_quon_relation(q: float, operators: IkOperatorSet) -> float:
    """Residual of the quon relation restricted to the physical subspace.

    The truncated |2> sector does not satisfy the relation; its residual is
    available from :func:`quon_residuals` for diagnostics.
    """
    return quon_residuals(q, operators)[0]


def mixed_pair_probabilities(param: QuonParameter) -> tuple[float, float]:
    """(antisymmetric, symmetric) occupation probabilities of an electron pair."""
    p = param.violation_probability
    return 1.0 - p, p
