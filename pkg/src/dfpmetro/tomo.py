"""Qubit detector tomography, detector models and synthetic DFP tables.

Reconstruction is the baseline the DFP route avoids: fit POVM elements to
the fiducial data, then predict Fisher information with the Born rule.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import ConvergenceWarning
from sklearn.utils.validation import check_is_fitted

from .base import DfpError, check_finite
from .fisher import DfpTable, ProbabilityVector, fisher_from_probabilities
from .qubit import FIDUCIAL_BLOCH, FIDUCIAL_LABELS, IDENTITY, PAULI, PureQubit, channel_bloch

_PARAM_INDEX = {"phi": 0, "chi": 1}


@dataclass(frozen=True, eq=False)
class Povm:
    """Qubit POVM: Hermitian PSD elements summing to the identity."""

    elements: np.ndarray
    outcomes: tuple | None = None

    def __post_init__(self):
        e = check_finite(np.array(self.elements, dtype=complex), "POVM elements")
        if e.ndim != 3 or e.shape[1:] != (2, 2) or e.shape[0] < 1:
            raise DfpError(f"POVM elements must have shape (M, 2, 2), got {e.shape}")
        if np.max(np.abs(e - np.conj(np.swapaxes(e, 1, 2)))) > 1e-10:
            raise DfpError("POVM elements must be Hermitian")
        if np.min(np.linalg.eigvalsh(e)) < -1e-9:
            raise DfpError("POVM elements must be positive semidefinite")
        if np.max(np.abs(e.sum(axis=0) - IDENTITY)) > 1e-9:
            raise DfpError("POVM elements must sum to the identity")
        outcomes = self.outcomes
        if outcomes is None:
            outcomes = tuple(str(i) for i in range(e.shape[0]))
        if len(outcomes) != e.shape[0]:
            raise DfpError("one outcome label per POVM element is required")
        e.setflags(write=False)
        object.__setattr__(self, "elements", e)
        object.__setattr__(self, "outcomes", tuple(str(o) for o in outcomes))

    def __len__(self):
        return self.elements.shape[0]

    @property
    def pauli(self):
        """Real coordinates ``(a0, ax, ay, az)`` per element, ``Pi = (a0 I + a . sigma) / 2``."""
        basis = (IDENTITY,) + PAULI
        return np.array([[np.trace(el @ b).real for b in basis] for el in self.elements])

    def probabilities(self, bloch):
        """Born probabilities for Bloch vectors of shape ``(..., 3)``."""
        c = self.pauli
        r = np.asarray(bloch, dtype=float)
        return 0.5 * (c[:, 0] + r @ c[:, 1:].T)


def _projector(vec):
    v = np.asarray(vec, dtype=complex)
    v = v / np.linalg.norm(v)
    return np.outer(v, v.conj())


_KETS = {
    "H": (1, 0),
    "V": (0, 1),
    "D": (1, 1),
    "A": (1, -1),
    "R": (1, 1j),
    "L": (1, -1j),
}


def ideal_povm(kind):
    """Ideal projective or Z/X-mixed measurements: ``hv``, ``da``, ``rl`` or ``zx``."""
    kind = kind.lower()
    pairs = {"hv": ("H", "V"), "da": ("D", "A"), "rl": ("R", "L")}
    if kind in pairs:
        labels = pairs[kind]
        return Povm([_projector(_KETS[k]) for k in labels], outcomes=labels)
    if kind == "zx":
        labels = ("H", "V", "D", "A")
        return Povm([0.5 * _projector(_KETS[k]) for k in labels], outcomes=labels)
    raise DfpError(f"unknown ideal POVM {kind!r}")


def half_wave_plate(theta):
    c, s = np.cos(2 * theta), np.sin(2 * theta)
    return np.array([[c, s], [s, -c]], dtype=complex)


def waveplate_povm(theta):
    """Half-wave plate at ``theta`` (radians) followed by an H/V polarising beam splitter."""
    w = half_wave_plate(theta)
    elements = [w.conj().T @ _projector(_KETS[k]) @ w for k in ("H", "V")]
    return Povm(elements, outcomes=("H", "V"))


def beamsplitter_povm(t_h=0.5, t_v=0.5):
    """Four-outcome measurement: polarisation-dependent splitter, H/V on one arm, D/A on the other.

    The transmitted arm sees ``T = diag(t_h, t_v)`` and the reflected arm ``I - T``.
    """
    if not (0 <= t_h <= 1 and 0 <= t_v <= 1):
        raise DfpError("transmissions must lie in [0, 1]")
    t = np.diag(np.sqrt([t_h, t_v])).astype(complex)
    r = np.diag(np.sqrt([1 - t_h, 1 - t_v])).astype(complex)
    elements = [t @ _projector(_KETS["H"]) @ t, t @ _projector(_KETS["V"]) @ t]
    elements += [r @ _projector(_KETS["D"]) @ r, r @ _projector(_KETS["A"]) @ r]
    return Povm(elements, outcomes=("H", "V", "D", "A"))


def random_povm(n_outcomes, rng=None):
    """Random full-rank POVM: random PSD matrices congruence-normalised to sum to I."""
    rng = np.random.default_rng(rng)
    g = rng.normal(size=(n_outcomes, 2, 2)) + 1j * rng.normal(size=(n_outcomes, 2, 2))
    a = g @ np.conj(np.swapaxes(g, 1, 2))
    return Povm(_normalise(a))


def random_projective_mixture(n_axes, rng=None):
    """Random convex mixture of ``n_axes`` projective measurements along random Bloch axes."""
    rng = np.random.default_rng(rng)
    weights = rng.dirichlet(np.ones(n_axes))
    axes = rng.normal(size=(n_axes, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    elements = []
    for w, n in zip(weights, axes):
        for sign in (1.0, -1.0):
            elements.append(w * 0.5 * (IDENTITY + sign * np.einsum("i,ijk->jk", n, np.array(PAULI))))
    return Povm(elements)


def _inv_sqrt(s):
    w, v = np.linalg.eigh(s)
    return (v / np.sqrt(w)) @ v.conj().T


def _normalise(elements):
    k = _inv_sqrt(np.sum(elements, axis=0))
    out = k @ elements @ k
    return 0.5 * (out + np.conj(np.swapaxes(out, 1, 2)))


def synth_dfp(povm, noise_sigma=0.0, seed=None):
    """DFP table from the Born rule on the six fiducials, optionally with Gaussian noise."""
    if noise_sigma < 0:
        raise DfpError("noise_sigma must be non-negative")
    q = povm.probabilities(FIDUCIAL_BLOCH)
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        q = q + rng.normal(scale=noise_sigma, size=q.shape)
    return DfpTable.from_raw(q, outcomes=povm.outcomes, fiducials=FIDUCIAL_LABELS)


# Born rule in Pauli coordinates: p = A @ (a0, ax, ay, az)
_DESIGN = 0.5 * np.column_stack([np.ones(6), FIDUCIAL_BLOCH])
_STEP = 1.0 / (2 * np.linalg.eigvalsh(_DESIGN.T @ _DESIGN).max())


def _to_matrices(coords):
    basis = np.array((IDENTITY,) + PAULI)
    return 0.5 * np.einsum("mk,kij->mij", coords, basis)


def _to_coords(elements):
    basis = (IDENTITY,) + PAULI
    return np.array([[np.trace(el @ b).real for b in basis] for el in elements])


def _project_physical(coords):
    el = _to_matrices(coords)
    w, v = np.linalg.eigh(el)
    el = np.einsum("mij,mj,mkj->mik", v, np.clip(w, 0.0, None), v.conj())
    return _to_coords(_normalise(el))


def _loss(coords, q):
    return float(np.sum((_DESIGN @ coords.T - q) ** 2))


def reconstruct_povm(table, max_iter=500, tol=1e-8, return_info=False):
    """Least-squares POVM consistent with a six-fiducial DFP table.

    The unconstrained fit is projected onto the physical set (negative
    eigenvalues clipped, then ``S^-1/2 Pi S^-1/2`` with ``S = sum Pi``);
    projected gradient steps follow until the iterate moves less than
    ``tol`` in Frobenius norm. The best iterate by squared residual is
    returned. Emits a ``ConvergenceWarning`` if ``max_iter`` is reached.
    """
    q = table.in_order(FIDUCIAL_LABELS)
    coords, *_ = np.linalg.lstsq(_DESIGN, q, rcond=None)
    x = _project_physical(coords.T)
    best, best_loss = x, _loss(x, q)
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        grad = 2 * (_DESIGN.T @ (_DESIGN @ x.T - q)).T
        x_new = _project_physical(x - _STEP * grad)
        loss = _loss(x_new, q)
        if loss < best_loss:
            best, best_loss = x_new, loss
        step = np.linalg.norm(_to_matrices(x_new - x))
        x = x_new
        if step < tol:
            converged = True
            break
    if not converged:
        warnings.warn(
            f"POVM reconstruction did not converge in {max_iter} iterations", ConvergenceWarning, stacklevel=2
        )
    povm = Povm(_to_matrices(best), outcomes=table.outcomes)
    if return_info:
        return povm, {"n_iter": n_iter, "converged": converged, "loss": best_loss}
    return povm


class PovmTomography(BaseEstimator):
    """Estimator wrapper around :func:`reconstruct_povm`.

    ``fit`` takes a :class:`DfpTable`; ``predict_proba`` returns Born
    probabilities of the fitted POVM for Bloch vectors or ``PureQubit`` states.
    """

    def __init__(self, max_iter=500, tol=1e-8):
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, table, y=None):
        if not isinstance(table, DfpTable):
            raise DfpError("PovmTomography.fit expects a DfpTable")
        self.povm_, info = reconstruct_povm(table, self.max_iter, self.tol, return_info=True)
        self.n_iter_ = info["n_iter"]
        self.converged_ = info["converged"]
        self.loss_ = info["loss"]
        self.outcomes_ = table.outcomes
        return self

    def predict_proba(self, states):
        check_is_fitted(self, "povm_")
        return self.povm_.probabilities(_bloch_stack(states))

    def score(self, table, y=None):
        """Negative squared residual of the fitted POVM on ``table``."""
        check_is_fitted(self, "povm_")
        return -_loss(self.povm_.pauli, table.in_order(FIDUCIAL_LABELS))


def _bloch_stack(states):
    if isinstance(states, PureQubit):
        return states.bloch[None, :]
    if isinstance(states, (list, tuple)) and states and isinstance(states[0], PureQubit):
        return np.array([s.bloch for s in states])
    return np.atleast_2d(np.asarray(states, dtype=float))


def fisher_from_povm(povm, probe, params, parameters=("phi", "chi")):
    """Fisher information predicted by the Born rule on a known POVM."""
    r, dr = channel_bloch(probe.bloch, params)
    idx = [_PARAM_INDEX[name] for name in parameters]
    c = povm.pauli
    p = 0.5 * (c[:, 0] + c[:, 1:] @ r)
    dp = 0.5 * dr[idx] @ c[:, 1:].T
    return fisher_from_probabilities(ProbabilityVector(p, dp), labels=tuple(parameters))
