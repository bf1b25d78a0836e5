"""Shared containers, exceptions and input validation helpers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PROB_FLOOR = 1e-12


class DfpError(ValueError):
    """Base class for all errors raised by this package."""


class InfeasibleProbeError(DfpError):
    """A probe predicts negative outcome probabilities, or no feasible probe exists."""


class SingularFisherError(DfpError):
    """Fisher matrix cannot be inverted for effective information."""


class NormalizationError(DfpError):
    """Kernel probabilities are inconsistent with the direct click statistics."""


def check_finite(x, name="input"):
    arr = np.asarray(x)
    if not np.all(np.isfinite(arr)):
        raise DfpError(f"{name} contains non-finite values")
    return arr


def check_bloch(bloch, *, pure=False, atol=1e-12):
    """Validate a Bloch vector (or a stack of them, last axis of length 3)."""
    r = check_finite(np.asarray(bloch, dtype=float), "bloch vector")
    if r.shape[-1] != 3:
        raise DfpError(f"bloch vector must have 3 components, got shape {r.shape}")
    norm = np.linalg.norm(r, axis=-1)
    if np.any(norm > 1 + atol):
        raise DfpError("bloch vector lies outside the unit ball")
    if pure and np.any(np.abs(norm - 1) > atol):
        raise DfpError("pure state requires a unit bloch vector")
    return r


def check_density(rho, atol=1e-12):
    rho = check_finite(np.asarray(rho, dtype=complex), "density matrix")
    if rho.shape != (2, 2):
        raise DfpError(f"expected a 2x2 density matrix, got shape {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > atol:
        raise DfpError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > atol:
        raise DfpError("density matrix does not have unit trace")
    return rho


@dataclass(frozen=True, eq=False)
class FisherMatrix:
    """Symmetric (classical or quantum) Fisher information matrix.

    ``divergent`` marks matrices where an outcome of vanishing probability
    still carries a non-zero derivative; the entries are then ``inf`` on the
    affected diagonal and carry no numeric meaning.
    """

    matrix: np.ndarray
    labels: tuple = ("phi", "chi")
    divergent: bool = False
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if m.shape[0] != m.shape[1]:
            raise DfpError(f"Fisher matrix must be square, got {m.shape}")
        if len(self.labels) != m.shape[0]:
            raise DfpError("one label per parameter is required")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def dim(self):
        return self.matrix.shape[0]

    def __getitem__(self, key):
        i, j = key
        if isinstance(i, str):
            i = self.labels.index(i)
        if isinstance(j, str):
            j = self.labels.index(j)
        return float(self.matrix[i, j])

    def __array__(self, dtype=None, copy=None):
        return np.array(self.matrix, dtype=dtype)

    def __repr__(self):
        flag = ", divergent" if self.divergent else ""
        return f"FisherMatrix({self.matrix.tolist()}, labels={self.labels}{flag})"
