"""Classical Fisher information from outcome probabilities and from data-fitting patterns.

A data-fitting pattern (DFP) table holds ``q[alpha, m]``, the probability of
outcome ``m`` when fiducial state ``alpha`` enters the detector. Any state
written as ``sum_alpha C_alpha |alpha><alpha|`` then predicts
``p(m) = sum_alpha C_alpha q[alpha, m]`` without ever reconstructing the
detector's POVM.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from .base import (
    PROB_FLOOR,
    DfpError,
    FisherMatrix,
    InfeasibleProbeError,
    SingularFisherError,
    check_finite,
)
from .qubit import FIDUCIAL_LABELS

DET_FLOOR = 1e-12
# det below this fraction of F_11 F_22 is roundoff on a rank-deficient matrix
REL_DET_FLOOR = 1e-8


@dataclass(frozen=True, eq=False)
class DfpTable:
    """Outcome probabilities per fiducial state.

    Rows must be normalised within ``atol``. Negative entries are allowed so
    that noisy data can be inspected as-is; :meth:`clamped` applies the load
    rule (negatives to zero, rows renormalised) and keeps the original values
    in ``raw``.
    """

    q: np.ndarray
    outcomes: tuple = ("0", "1")
    fiducials: tuple = FIDUCIAL_LABELS
    raw: np.ndarray | None = None
    atol: float = 1e-6

    def __post_init__(self):
        q = check_finite(np.array(self.q, dtype=float), "DFP table")
        fiducials = tuple(str(f) for f in self.fiducials)
        outcomes = tuple(str(o) for o in self.outcomes)
        if q.ndim != 2 or q.shape != (len(fiducials), len(outcomes)):
            raise DfpError(
                f"DFP table shape {q.shape} does not match "
                f"{len(fiducials)} fiducials x {len(outcomes)} outcomes"
            )
        if len(outcomes) < 2:
            raise DfpError("a DFP table needs at least two outcomes")
        if sorted(fiducials) != sorted(FIDUCIAL_LABELS):
            raise DfpError(f"fiducials must be a permutation of {FIDUCIAL_LABELS}, got {fiducials}")
        if len(set(outcomes)) != len(outcomes):
            raise DfpError("outcome labels must be unique")
        bad = np.abs(q.sum(axis=1) - 1) > self.atol
        if np.any(bad):
            rows = [fiducials[i] for i in np.flatnonzero(bad)]
            raise DfpError(f"rows {rows} are not normalised within {self.atol}")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "fiducials", fiducials)
        object.__setattr__(self, "outcomes", outcomes)

    @classmethod
    def from_raw(cls, values, outcomes=None, fiducials=FIDUCIAL_LABELS, atol=1e-6):
        """Build a table from unnormalised readings (e.g. intensities) using the load rule."""
        raw = check_finite(np.array(values, dtype=float), "DFP readings")
        if outcomes is None:
            outcomes = tuple(str(i) for i in range(raw.shape[1]))
        q = np.clip(raw, 0.0, None)
        sums = q.sum(axis=1, keepdims=True)
        if np.any(sums <= 0):
            raise DfpError("every fiducial row needs a positive total")
        return cls(q / sums, outcomes=outcomes, fiducials=fiducials, raw=raw, atol=atol)

    def clamped(self):
        return DfpTable.from_raw(self.q, self.outcomes, self.fiducials, self.atol)

    @property
    def residuals(self):
        """Row-sum deviation of the pre-normalisation values (zeros if none were kept)."""
        if self.raw is None:
            return np.zeros(len(self.fiducials))
        return self.raw.sum(axis=1) - 1

    @property
    def n_outcomes(self):
        return len(self.outcomes)

    def in_order(self, fiducials=FIDUCIAL_LABELS):
        """Table rows re-indexed to ``fiducials`` order, as a plain array."""
        idx = [self.fiducials.index(f) for f in fiducials]
        return self.q[idx]

    def merge_outcomes(self, i, j):
        """Coarse-grain by summing outcome columns ``i`` and ``j``."""
        if i == j:
            raise DfpError("cannot merge an outcome with itself")
        keep = [k for k in range(self.n_outcomes) if k not in (i, j)]
        q = np.column_stack([self.q[:, i] + self.q[:, j]] + [self.q[:, k] for k in keep])
        labels = (f"{self.outcomes[i]}+{self.outcomes[j]}",) + tuple(self.outcomes[k] for k in keep)
        return DfpTable(q, outcomes=labels, fiducials=self.fiducials, atol=self.atol)


@dataclass(frozen=True, eq=False)
class ProbabilityVector:
    """Outcome probabilities ``p`` and their parameter derivatives ``dp`` (d x M)."""

    p: np.ndarray
    dp: np.ndarray | None = None

    def __post_init__(self):
        p = check_finite(np.array(self.p, dtype=float).reshape(-1), "probabilities")
        if self.dp is None:
            dp = np.zeros((0, p.size))
        else:
            dp = check_finite(np.atleast_2d(np.array(self.dp, dtype=float)), "derivatives")
            if dp.shape[1] != p.size:
                raise DfpError("derivative vectors must have one entry per outcome")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "dp", dp)


def _coeff_array(coeffs, table):
    if isinstance(coeffs, Mapping):
        if set(coeffs) != set(table.fiducials):
            raise DfpError(
                f"coefficient labels {sorted(coeffs)} do not match table fiducials {sorted(table.fiducials)}"
            )
        return np.array([coeffs[f] for f in table.fiducials], dtype=float)
    arr = np.asarray(coeffs, dtype=float)
    if arr.shape[-1] != len(table.fiducials):
        raise DfpError(f"expected {len(table.fiducials)} coefficients, got {arr.shape[-1]}")
    return arr


def predict_probabilities(coeffs, table):
    """Outcome probabilities ``p(m) = sum_alpha C_alpha q[alpha, m]``."""
    return ProbabilityVector(_coeff_array(coeffs, table) @ table.q)


def dfp_probabilities(coeffs, dcoeffs, table):
    """Probabilities together with their derivatives, by linearity of the DFP map."""
    p = _coeff_array(coeffs, table) @ table.q
    dp = np.array([_coeff_array(dc, table) @ table.q for dc in dcoeffs]).reshape(-1, table.n_outcomes)
    return ProbabilityVector(p, dp)


def positivity_filter(coeffs, table, eps=0.0, atol=PROB_FLOOR):
    """True when every predicted probability is at least ``eps``.

    ``atol`` absorbs floating-point roundoff in the prediction itself, so a
    pure fiducial state does not fail on a ``-1e-17``.
    """
    if eps < 0:
        raise DfpError("eps must be non-negative")
    p = predict_probabilities(coeffs, table).p
    return bool(np.all(p >= eps - atol))


def fisher_batch(p, dp, floor=PROB_FLOOR):
    """Vectorised Fisher information.

    ``p`` has shape ``(..., M)`` and ``dp`` shape ``(..., d, M)``. Returns the
    ``(..., d, d)`` matrices and a boolean ``divergent`` mask. Outcomes with
    ``p < floor`` contribute nothing when their derivatives are also below
    ``floor``; otherwise the point is marked divergent.
    """
    p = np.asarray(p, dtype=float)
    dp = np.asarray(dp, dtype=float)
    small = p < floor
    moving = np.any(np.abs(dp) >= floor, axis=-2)
    divergent = np.any(small & moving, axis=-1)
    inv = np.where(small, 0.0, 1.0 / np.where(small, 1.0, p))
    f = np.einsum("...im,...jm,...m->...ij", dp, dp, inv)
    return f, divergent


def _as_fisher(f, divergent, labels):
    if divergent:
        f = f.copy()
        np.fill_diagonal(f, np.inf)
    return FisherMatrix(f, labels=labels, divergent=bool(divergent))


def fisher_from_probabilities(pv, labels=None, floor=PROB_FLOOR):
    """``F_ij = sum_m dp_i(m) dp_j(m) / p(m)``."""
    d = pv.dp.shape[0]
    labels = labels or _default_labels(d)
    f, divergent = fisher_batch(pv.p, pv.dp, floor)
    return _as_fisher(f, divergent, labels)


def fisher_from_dfp(coeffs, dcoeffs, table, labels=None, eps=0.0, floor=PROB_FLOOR):
    """Fisher information of a state given only its coefficients and the DFP table.

    Numerators use ``sum_alpha dC_alpha q[alpha, m]``, denominators
    ``sum_alpha C_alpha q[alpha, m]``. Raises :class:`InfeasibleProbeError`
    if the state predicts negative probabilities.
    """
    if not positivity_filter(coeffs, table, eps):
        raise InfeasibleProbeError("state predicts negative outcome probabilities on this table")
    pv = dfp_probabilities(coeffs, dcoeffs, table)
    return fisher_from_probabilities(pv, labels=labels, floor=floor)


def _default_labels(d):
    return ("phi", "chi")[:d] if d <= 2 else tuple(f"p{i}" for i in range(d))


def effective_fisher(fisher, det_floor=DET_FLOOR):
    """Per-parameter information ``1 / (F^-1)_ii`` once the others are estimated jointly.

    Raises :class:`SingularFisherError` when ``det F`` falls below
    ``det_floor`` plus 1e-8 of the product of the diagonal entries.
    """
    f = np.asarray(fisher, dtype=float)
    if f.shape == (1, 1):
        return f[0].copy()
    off = f - np.diag(np.diag(f))
    if not np.any(off):
        return np.diag(f).copy()
    if f.shape == (2, 2):
        det = f[0, 0] * f[1, 1] - f[0, 1] * f[1, 0]
        if det < det_floor + REL_DET_FLOOR * f[0, 0] * f[1, 1] or f[0, 0] <= 0 or f[1, 1] <= 0:
            raise SingularFisherError(f"Fisher matrix is singular (det={det:.3g})")
        return np.array([f[0, 0] - f[0, 1] ** 2 / f[1, 1], f[1, 1] - f[0, 1] ** 2 / f[0, 0]])
    if np.linalg.det(f) < det_floor + REL_DET_FLOOR * np.prod(np.diag(f)):
        raise SingularFisherError("Fisher matrix is singular")
    return 1.0 / np.diag(np.linalg.inv(f))


def effective_batch(f, det_floor=DET_FLOOR):
    """Effective values for a stack of 2x2 matrices plus a rank-deficiency mask.

    ``singular`` marks matrices with ``det F`` below the floor. Their
    effective values are still reported when ``F`` is diagonal (the
    parameters decouple) and are NaN otherwise.
    """
    f = np.asarray(f, dtype=float)
    a, b, c = f[..., 0, 0], f[..., 1, 1], f[..., 0, 1]
    det = a * b - c * c
    diagonal = c == 0
    singular = (det < det_floor + REL_DET_FLOOR * a * b) | (a <= 0) | (b <= 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        e_phi = np.where(diagonal, a, a - c * c / b)
        e_chi = np.where(diagonal, b, b - c * c / a)
    undefined = singular & ~diagonal
    e_phi = np.where(undefined, np.nan, e_phi)
    e_chi = np.where(undefined, np.nan, e_chi)
    return np.stack([e_phi, e_chi], axis=-1), singular


def massar_ratio(fisher, qfi):
    """``F_phiphi / H_phiphi + F_chichi / H_chichi`` with the raw diagonal of ``F``."""
    f = np.asarray(fisher, dtype=float)
    h = np.asarray(qfi, dtype=float)
    hd = np.diag(h)
    if np.any(hd <= 0):
        raise DfpError("quantum Fisher information has a vanishing diagonal entry")
    return float(np.sum(np.diag(f) / hd))
