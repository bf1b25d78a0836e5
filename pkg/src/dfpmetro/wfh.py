"""Weak-field homodyne with multiplexed click detectors.

The signal ``alpha`` and a weak local oscillator ``gamma`` meet on a 50:50
beam splitter; each output feeds ``N`` click/no-click bins. For a coherent
input the outcome ``x = (x1, x2)`` (clicks on the transmitted and reflected
arms) has probability

    q_x(alpha) = C(N,x1) C(N,x2) sum_{y1<=x1} sum_{y2<=x2}
                 (-1)^(x1-y1+x2-y2) C(x1,y1) C(x2,y2)
                 exp(-(N-y1)/(2N) |alpha+gamma|^2 - (N-y2)/(2N) |alpha-gamma|^2)

Each term is a Gaussian in ``alpha``. Deconvolving it with the coherent-state
Wigner function gives a Gaussian phase-space kernel, so the probability of
any Gaussian state is a finite sum of Gaussian overlaps.

Wigner convention: coherent states have covariance ``diag(1/4, 1/4)`` in
``(Re alpha, Im alpha)``, i.e. ``W(alpha) = (2/pi) exp(-2|alpha - alpha0|^2)``.
"""

from __future__ import annotations

import functools
import warnings
from dataclasses import dataclass
from math import comb

import numpy as np

from .base import PROB_FLOOR, DfpError, NormalizationError, check_finite

# alternating binomial sums cancel; accumulate in extended precision where available
_XP = np.longdouble
_LOCK_TOL = 1e-8
_LOCK_POINTS = (0.0, 0.5, 1.0 + 0.3j)
_RANGE_TOL = 1e-6


@dataclass(frozen=True)
class WfhDetector:
    gamma: complex = 1.0
    n_bins: int = 4

    def __post_init__(self):
        gamma = complex(self.gamma)
        check_finite([gamma.real, gamma.imag], "local oscillator")
        if int(self.n_bins) != self.n_bins or self.n_bins < 1:
            raise DfpError("n_bins must be a positive integer")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "n_bins", int(self.n_bins))

    def outcomes(self):
        n = self.n_bins
        return [(x1, x2) for x1 in range(n + 1) for x2 in range(n + 1)]


def _check_outcome(det, x):
    x1, x2 = (int(v) for v in x)
    if not (0 <= x1 <= det.n_bins and 0 <= x2 <= det.n_bins):
        raise DfpError(f"outcome {x} outside [0, {det.n_bins}]^2")
    return x1, x2


@functools.lru_cache(maxsize=64)
def _signed_binomials(n):
    """``B[x, y] = (-1)^(x-y) C(n, x) C(x, y)`` for ``y <= x``, else 0."""
    b = np.zeros((n + 1, n + 1), dtype=_XP)
    for x in range(n + 1):
        for y in range(x + 1):
            b[x, y] = (-1) ** (x - y) * comb(n, x) * comb(x, y)
    b.setflags(write=False)
    return b


def _arm_exponentials(det, alpha):
    """``exp(-(N-y)/(2N) |alpha +- gamma|^2)`` for y = 0..N, shape ``(..., N+1)`` per arm."""
    alpha = np.asarray(alpha, dtype=complex)
    n = det.n_bins
    rate = (n - np.arange(n + 1, dtype=_XP)) / (2 * n)
    s1 = np.abs(alpha + det.gamma)[..., None].astype(_XP) ** 2
    s2 = np.abs(alpha - det.gamma)[..., None].astype(_XP) ** 2
    return np.exp(-rate * s1), np.exp(-rate * s2)


def dfp_table(det, alpha):
    """All outcome probabilities for coherent amplitude(s) ``alpha``: shape ``(..., N+1, N+1)``."""
    b = _signed_binomials(det.n_bins)
    e1, e2 = _arm_exponentials(det, alpha)
    # the double sum separates into one alternating sum per arm
    a1 = e1 @ b.T
    a2 = e2 @ b.T
    return (a1[..., :, None] * a2[..., None, :]).astype(float)


def dfp_probability(det, x, alpha):
    """Probability of click pattern ``x`` for the coherent state ``|alpha>``."""
    x1, x2 = _check_outcome(det, x)
    b = _signed_binomials(det.n_bins)
    e1, e2 = _arm_exponentials(det, alpha)
    term = e1[..., : x1 + 1, None] * e2[..., None, : x2 + 1]
    weights = b[x1, : x1 + 1, None] * b[x2, None, : x2 + 1]
    out = np.sum(weights * term, axis=(-2, -1)).astype(float)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class KernelTerm:
    """One Gaussian term of a click-pattern probability.

    As a function of the coherent amplitude the term equals
    ``weight * exp(log_offset) * exp(-|alpha - center|^2 / sigma2)``. Its
    phase-space kernel has amplitude ``sigma2 / (sigma2 - 1/2)`` and decay
    rate ``1 / (sigma2 - 1/2)`` about the same centre. The term with
    ``y1 = y2 = N`` is constant (``sigma2 = inf``).
    """

    weight: float
    sigma2: float
    gamma_tilde: complex
    y1: int
    y2: int
    log_offset: float = 0.0

    @property
    def finite(self):
        return np.isfinite(self.sigma2)

    @property
    def center(self):
        return 0j if not self.finite else -self.sigma2 * self.gamma_tilde

    @property
    def kernel_amplitude(self):
        return 1.0 if not self.finite else self.sigma2 / (self.sigma2 - 0.5)

    @property
    def kernel_rate(self):
        return 0.0 if not self.finite else 1.0 / (self.sigma2 - 0.5)


def kernel_terms(det, x):
    """Gaussian terms of outcome ``x``, one per ``(y1, y2)`` with ``y1 <= x1``, ``y2 <= x2``."""
    x1, x2 = _check_outcome(det, x)
    n = det.n_bins
    g2 = abs(det.gamma) ** 2
    terms = []
    for y1 in range(x1 + 1):
        for y2 in range(x2 + 1):
            weight = (-1) ** (x1 - y1 + x2 - y2) * comb(n, x1) * comb(n, x2) * comb(x1, y1) * comb(x2, y2)
            gamma_tilde = (y2 - y1) * det.gamma / (2 * n)
            if y1 + y2 == 2 * n:
                terms.append(KernelTerm(float(weight), np.inf, gamma_tilde, y1, y2, 0.0))
                continue
            sigma2 = 2 * n / (2 * n - y1 - y2)
            log_offset = sigma2 * abs(gamma_tilde) ** 2 - g2 / sigma2
            terms.append(KernelTerm(float(weight), sigma2, gamma_tilde, y1, y2, log_offset))
    return terms


def _dfp_from_terms(terms, alpha):
    alpha = np.asarray(alpha, dtype=complex)
    total = np.zeros(alpha.shape, dtype=_XP)
    for t in terms:
        if not t.finite:
            total += t.weight
            continue
        d2 = np.abs(alpha - t.center).astype(_XP) ** 2
        total += _XP(t.weight) * np.exp(_XP(t.log_offset) - d2 / _XP(t.sigma2))
    return total.astype(float)


def _zeta_unlocked(terms, alpha):
    alpha = np.asarray(alpha, dtype=complex)
    total = np.zeros(alpha.shape, dtype=_XP)
    for t in terms:
        if not t.finite:
            total += t.weight
            continue
        d2 = np.abs(alpha - t.center).astype(_XP) ** 2
        total += _XP(t.weight * t.kernel_amplitude) * np.exp(_XP(t.log_offset) - _XP(t.kernel_rate) * d2)
    return total.astype(float)


def zeta(det, x, alpha):
    """Phase-space kernel of outcome ``x``: ``p_x = integral W(alpha) zeta_x(alpha) d^2 alpha``."""
    lock_normalization(det)
    out = _zeta_unlocked(kernel_terms(det, x), alpha)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class GaussianWigner:
    """Normalised Gaussian Wigner function on the ``(Re alpha, Im alpha)`` plane."""

    mean: complex
    cov: np.ndarray

    def __post_init__(self):
        cov = check_finite(np.array(self.cov, dtype=float), "covariance")
        if cov.shape != (2, 2):
            raise DfpError("covariance must be 2x2")
        if np.max(np.abs(cov - cov.T)) > 1e-12:
            raise DfpError("covariance must be symmetric")
        if np.min(np.linalg.eigvalsh(cov)) <= 0:
            raise DfpError("covariance must be positive definite")
        cov.setflags(write=False)
        object.__setattr__(self, "mean", complex(self.mean))
        object.__setattr__(self, "cov", cov)

    @classmethod
    def coherent(cls, alpha0):
        return cls(alpha0, np.eye(2) / 4)

    def __call__(self, alpha):
        alpha = np.asarray(alpha, dtype=complex)
        d = np.stack([alpha.real - self.mean.real, alpha.imag - self.mean.imag], axis=-1)
        prec = np.linalg.inv(self.cov)
        quad = np.einsum("...i,ij,...j->...", d, prec, d)
        return np.exp(-0.5 * quad) / (2 * np.pi * np.sqrt(np.linalg.det(self.cov)))

    def rotated(self, phi):
        """State after the phase shift ``alpha -> alpha e^{i phi}``."""
        c, s = np.cos(phi), np.sin(phi)
        r = np.array([[c, -s], [s, c]])
        return GaussianWigner(self.mean * np.exp(1j * phi), r @ self.cov @ r.T)

    @property
    def std_max(self):
        return float(np.sqrt(np.max(np.linalg.eigvalsh(self.cov))))


def wigner_dsv(alpha0, s):
    """Displaced squeezed vacuum ``(2/pi) exp(-2 s^2 (x - alpha0)^2 - 2 p^2 / s^2)``; ``s < 1`` squeezes P."""
    if not s > 0:
        raise DfpError("squeezing parameter s must be positive")
    return GaussianWigner(complex(alpha0), np.diag([1 / (4 * s * s), s * s / 4]))


def mean_photon(alpha0, s):
    if not s > 0:
        raise DfpError("squeezing parameter s must be positive")
    return abs(alpha0) ** 2 + (s * s - 1) ** 2 / (4 * s * s)


def _term_overlaps(det, w):
    """``G[y1, y2] = exp(log_offset) * kernel_amplitude * integral W exp(-rate |alpha - center|^2)``."""
    n = det.n_bins
    g = np.empty((n + 1, n + 1), dtype=_XP)
    cov = w.cov.astype(_XP)
    for t in kernel_terms(det, (n, n)):
        if not t.finite:
            g[t.y1, t.y2] = 1
            continue
        k2 = 2 * _XP(t.kernel_rate)
        dx = _XP(w.mean.real - t.center.real)
        dy = _XP(w.mean.imag - t.center.imag)
        # det(I + 2k cov) and (cov + I/2k)^-1 written out for 2x2
        a, b, c = cov[0, 0], cov[0, 1], cov[1, 1]
        det_m = (1 + k2 * a) * (1 + k2 * c) - (k2 * b) ** 2
        sa, sc = a + 1 / k2, c + 1 / k2
        quad = (sc * dx * dx - 2 * b * dx * dy + sa * dy * dy) / (sa * sc - b * b)
        g[t.y1, t.y2] = (
            _XP(t.kernel_amplitude) * np.exp(_XP(t.log_offset) - quad / 2) / np.sqrt(det_m)
        )
    return g


def _probabilities_gaussian(det, w):
    b = _signed_binomials(det.n_bins)
    return (b @ _term_overlaps(det, w) @ b.T).astype(float)


def _checked(p):
    if np.any(p < -_RANGE_TOL) or np.any(p > 1 + _RANGE_TOL):
        raise NormalizationError(
            f"kernel probability {p.min() if np.any(p < 0) else p.max():.3g} outside [0, 1]; normalisation is broken"
        )
    return np.clip(p, 0.0, 1.0)


@functools.lru_cache(maxsize=256)
def _lock(n_bins, gamma):
    det = WfhDetector(gamma, n_bins)
    worst = 0.0
    for a0 in _LOCK_POINTS:
        direct = dfp_table(det, a0)
        kernel = _probabilities_gaussian(det, GaussianWigner.coherent(a0))
        worst = max(worst, float(np.max(np.abs(direct - kernel))))
    if worst > _LOCK_TOL:
        raise NormalizationError(
            f"kernel route disagrees with click statistics by {worst:.3g} (N={n_bins}, gamma={gamma})"
        )
    return worst


def lock_normalization(det):
    """Check the kernel constants against the direct click probabilities for coherent states.

    Runs once per ``(N, gamma)`` and raises :class:`NormalizationError` on a
    mismatch above 1e-8. Called automatically by the kernel-based functions.
    """
    return _lock(det.n_bins, det.gamma)


def probabilities_wigner(det, w):
    """All outcome probabilities ``(N+1, N+1)`` for a Gaussian Wigner function."""
    lock_normalization(det)
    return _checked(_probabilities_gaussian(det, w))


def probability_wigner(det, x, w):
    """``p_x`` for a Gaussian state, as a closed-form sum of Gaussian overlaps over the kernel terms."""
    lock_normalization(det)
    x1, x2 = _check_outcome(det, x)
    g = _term_overlaps(det, w)
    total = _XP(0)
    for t in kernel_terms(det, (x1, x2)):
        total += _XP(t.weight) * g[t.y1, t.y2]
    return float(_checked(np.array(float(total))))


def _probe_probabilities(det, probe, phi):
    """Outcome table of ``probe`` rotated by ``phi``; coherent amplitudes use the direct DFP."""
    if isinstance(probe, GaussianWigner):
        return probabilities_wigner(det, probe.rotated(phi))
    return dfp_table(det, complex(probe) * np.exp(1j * phi))


def _fd_contributions(q, d, floor):
    # below the floor only a zero-crossing (q <= 0 with a slope) or an
    # unresolvable claim of information counts as divergent
    small = q < floor
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(q > 0, d * d / np.where(q > 0, q, 1.0), 0.0)
    moving = np.abs(d) >= floor
    divergent = small & moving & ((q <= 0) | (f > np.sqrt(floor)))
    f = np.where(small & ~moving, 0.0, f)
    return np.where(divergent, np.inf, f)


def _fisher_from_fd(q, qp, qm, qp2, qm2, h, floor):
    f = _fd_contributions(q, (qp - qm) / (2 * h), floor)
    f_half = _fd_contributions(q, (qp2 - qm2) / h, floor)
    finite = np.isfinite(f) & np.isfinite(f_half)
    scale = np.sum(f[finite])
    if np.any(np.abs(f[finite] - f_half[finite]) > 1e-6 * scale + 1e-12):
        warnings.warn(
            "finite-difference Fisher information is step-size sensitive (h vs h/2 disagree beyond 1e-6)",
            RuntimeWarning,
            stacklevel=3,
        )
    return f


def outcome_fisher_table(det, probe, phi=0.1, h=1e-4, floor=PROB_FLOOR):
    """Per-outcome Fisher information on the phase ``phi``, shape ``(N+1, N+1)``.

    ``probe`` is a coherent amplitude (complex) or a :class:`GaussianWigner`.
    Derivatives are central differences with step ``h``; a second pass at
    ``h/2`` must agree within 1e-6 of the total or a ``RuntimeWarning`` is
    issued. Outcomes below ``floor`` contribute zero when their derivative is
    also below ``floor``. An entry is ``inf`` when a vanishing probability
    has a slope: either it is non-positive, or its contribution exceeds
    ``sqrt(floor)``.
    """
    if h <= 0:
        raise DfpError("finite-difference step must be positive")
    q = _probe_probabilities(det, probe, phi)
    qp, qm = _probe_probabilities(det, probe, phi + h), _probe_probabilities(det, probe, phi - h)
    qp2, qm2 = _probe_probabilities(det, probe, phi + h / 2), _probe_probabilities(det, probe, phi - h / 2)
    return _fisher_from_fd(q, qp, qm, qp2, qm2, h, floor)


def outcome_fisher(det, x, probe, phi=0.1, h=1e-4, floor=PROB_FLOOR):
    """Fisher information ``(dq_x/dphi)^2 / q_x`` attached to one outcome."""
    x1, x2 = _check_outcome(det, x)
    return float(outcome_fisher_table(det, probe, phi, h, floor)[x1, x2])


def total_fisher(det, probe, phi=0.1, h=1e-4):
    return float(np.sum(outcome_fisher_table(det, probe, phi, h)))


def squeeze_for_energy(energy):
    """``s < 1`` whose squeezing carries mean photon number ``energy``."""
    if energy < 0:
        raise DfpError("squeezing energy must be non-negative")
    # (s^2 - 1)^2 / (4 s^2) = E has the root s = sqrt(E + 1) - sqrt(E) in (0, 1]
    return float(np.sqrt(energy + 1.0) - np.sqrt(energy))


@dataclass
class SqueezeScan:
    alphas: np.ndarray
    rd_values: np.ndarray
    fisher: np.ndarray
    s: np.ndarray
    residual: np.ndarray


def squeeze_tradeoff_scan(det, energy, rd_values, phi=0.1, alphas=None, h=1e-4):
    """Total Fisher information of displaced squeezed probes at fixed energy.

    For each grid amplitude ``alpha`` the probe carries ``energy * alpha^2``
    photons, a fraction ``r_d`` in the displacement and the rest in P
    squeezing. Without ``alphas`` a single point of total energy ``energy``
    is evaluated. ``residual`` holds ``mean_photon - target`` per point.
    """
    if energy <= 0:
        raise DfpError("energy must be positive")
    rd = np.asarray(rd_values, dtype=float)
    if rd.ndim != 1 or rd.size == 0 or np.any(rd <= 0) or np.any(rd > 1):
        raise DfpError("every r_d must lie in (0, 1]")
    if alphas is None:
        alphas = np.array([1.0])
    alphas = np.asarray(alphas, dtype=float)
    fisher = np.empty((alphas.size, rd.size))
    svals = np.empty_like(fisher)
    resid = np.empty_like(fisher)
    for i, a in enumerate(alphas):
        total = energy * a * a
        for j, r in enumerate(rd):
            alpha0 = np.sqrt(r * total)
            s = squeeze_for_energy((1 - r) * total)
            w = wigner_dsv(alpha0, s)
            fisher[i, j] = np.sum(outcome_fisher_table(det, w, phi, h))
            svals[i, j] = s
            resid[i, j] = mean_photon(alpha0, s) - total
    return SqueezeScan(alphas, rd, fisher, svals, resid)
