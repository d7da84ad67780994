"""Discrete k-forms: one real value per oriented k-simplex."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

if TYPE_CHECKING:
    from .mesh import SimplicialPatch


def permutation_sign(seq: Sequence[int]) -> int:
    """Parity of the permutation that sorts ``seq`` (+1 even, -1 odd)."""
    seq = list(seq)
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


@dataclass(eq=False)
class Cochain:
    """Values of a discrete form on the simplices of a patch.

    Primal cochains of degree k < n live on the canonically oriented
    (sorted) k-faces; degree-n primal cochains live on the stored, oriented
    top simplices.  Dual cochains of degree n-k are indexed by the primal
    k-simplex whose dual cell carries them.
    """

    patch: SimplicialPatch
    degree: int
    values: np.ndarray
    dual: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        n = self.patch.n
        if not 0 <= self.degree <= n:
            raise ValueError(f"degree {self.degree} outside [0, {n}]")
        primal_degree = n - self.degree if self.dual else self.degree
        expected = self.patch.num_faces(primal_degree)
        if self.values.shape != (expected,):
            raise ValueError(
                f"{'dual' if self.dual else 'primal'} {self.degree}-cochain needs "
                f"{expected} values, got shape {self.values.shape}"
            )

    def on(self, simplex: Sequence[int]) -> float:
        """Evaluate on an explicitly oriented primal simplex."""
        if self.dual:
            raise TypeError("dual cochains are not evaluated on primal simplices")
        idx, sign = self.patch.locate(simplex)
        return sign * float(self.values[idx])

    def _like(self, values) -> Cochain:
        return Cochain(self.patch, self.degree, values, self.dual)

    def _check(self, other: Cochain):
        if other.patch is not self.patch or other.degree != self.degree or other.dual != self.dual:
            raise ValueError("cochains live on different spaces")

    def __add__(self, other: Cochain) -> Cochain:
        self._check(other)
        return self._like(self.values + other.values)

    def __sub__(self, other: Cochain) -> Cochain:
        self._check(other)
        return self._like(self.values - other.values)

    def __neg__(self) -> Cochain:
        return self._like(-self.values)

    def __mul__(self, scalar: float) -> Cochain:
        return self._like(scalar * self.values)

    __rmul__ = __mul__

    def norm_inf(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def __repr__(self) -> str:
        kind = "dual" if self.dual else "primal"
        return f"Cochain({kind}, degree={self.degree}, size={self.values.size})"
