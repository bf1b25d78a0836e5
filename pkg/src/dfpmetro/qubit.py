"""Single-qubit states, the phase/rotation channel and fiducial decompositions.

Bloch convention: ``rho = (I + r . sigma) / 2`` with ``|H> = (1, 0)`` on the
+z axis, ``|D>`` on +x and ``|R> = (1, i)/sqrt(2)`` on +y.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .base import DfpError, FisherMatrix, check_bloch, check_density, check_finite

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = (SIGMA_X, SIGMA_Y, SIGMA_Z)
IDENTITY = np.eye(2, dtype=complex)

FIDUCIAL_LABELS = ("H", "V", "D", "A", "R", "L")
FIDUCIAL_BLOCH = np.array(
    [
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
    ]
)
FIDUCIAL_BLOCH.setflags(write=False)
# (axis index, sign) of each fiducial, in FIDUCIAL_LABELS order
_FIDUCIAL_AXIS = ((2, 1.0), (2, -1.0), (0, 1.0), (0, -1.0), (1, 1.0), (1, -1.0))

_EX = np.array([1.0, 0.0, 0.0])
_EZ = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True, eq=False)
class PureQubit:
    """Pure qubit state stored as its unit Bloch vector."""

    bloch: np.ndarray

    def __post_init__(self):
        r = check_bloch(np.array(self.bloch, dtype=float).reshape(3), pure=True)
        r.setflags(write=False)
        object.__setattr__(self, "bloch", r)

    @classmethod
    def from_angles(cls, polar, azimuth):
        return cls(bloch_from_angles(polar, azimuth))

    @classmethod
    def from_spinor(cls, psi):
        psi = np.asarray(psi, dtype=complex).reshape(2)
        psi = psi / np.linalg.norm(psi)
        rho = np.outer(psi, psi.conj())
        return cls(bloch_of(rho))

    @property
    def spinor(self):
        """Normalised spinor with a real, non-negative first component."""
        x, y, z = self.bloch
        polar = np.arccos(np.clip(z, -1.0, 1.0))
        azimuth = np.arctan2(y, x)
        return np.array([np.cos(polar / 2), np.exp(1j * azimuth) * np.sin(polar / 2)])

    def __repr__(self):
        return f"PureQubit({np.round(self.bloch, 12).tolist()})"


class ChannelOrder(str, Enum):
    """Written order of the channel product.

    ``VU`` is the product V.U, so the phase U acts first. ``UV`` is U.V,
    with the rotation V acting first.
    """

    VU = "VU"
    UV = "UV"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        aliases = {"VU": cls.VU, "V_then_U": cls.VU, "UV": cls.UV, "U_then_V": cls.UV}
        try:
            return aliases[str(value)]
        except KeyError:
            raise DfpError(f"unknown channel order {value!r}") from None


@dataclass(frozen=True)
class ChannelParams:
    phi: float = 0.0
    chi: float = 0.0
    order: ChannelOrder = ChannelOrder.VU

    def __post_init__(self):
        check_finite([self.phi, self.chi], "channel angles")
        object.__setattr__(self, "phi", float(self.phi))
        object.__setattr__(self, "chi", float(self.chi))
        object.__setattr__(self, "order", ChannelOrder.parse(self.order))

    def replace(self, **changes):
        kw = {"phi": self.phi, "chi": self.chi, "order": self.order}
        kw.update(changes)
        return ChannelParams(**kw)


def bloch_from_angles(polar, azimuth):
    polar = np.asarray(polar, dtype=float)
    azimuth = np.asarray(azimuth, dtype=float)
    s = np.sin(polar)
    return np.stack([s * np.cos(azimuth), s * np.sin(azimuth), np.cos(polar)], axis=-1)


def phase_unitary(phi):
    return np.diag([np.exp(-0.5j * phi), np.exp(0.5j * phi)])


def rotation_unitary(chi):
    c, s = np.cos(chi / 2), np.sin(chi / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def channel_unitary(params):
    u, v = phase_unitary(params.phi), rotation_unitary(params.chi)
    return v @ u if params.order is ChannelOrder.VU else u @ v


def _rot_z(phi):
    # Bloch action of phase_unitary(phi)
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _rot_x(chi):
    # Bloch action of rotation_unitary(chi)
    c, s = np.cos(chi), np.sin(chi)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def channel_bloch(r0, params):
    """Evolve Bloch vectors through the channel.

    ``r0`` has shape ``(..., 3)``. Returns ``(r, dr)`` where ``dr`` has shape
    ``(..., 2, 3)`` holding the derivatives with respect to (phi, chi).
    """
    r0 = np.asarray(r0, dtype=float)
    rz, rx = _rot_z(params.phi), _rot_x(params.chi)
    if params.order is ChannelOrder.VU:
        mid = r0 @ rz.T
        r = mid @ rx.T
        d_phi = np.cross(_EZ, mid) @ rx.T
        d_chi = np.cross(_EX, r)
    else:
        mid = r0 @ rx.T
        r = mid @ rz.T
        d_chi = np.cross(_EX, mid) @ rz.T
        d_phi = np.cross(_EZ, r)
    return r, np.stack([d_phi, d_chi], axis=-2)


def density_of(state):
    """Density matrix of a ``PureQubit`` or of any Bloch vector in the unit ball."""
    r = state.bloch if isinstance(state, PureQubit) else check_bloch(state)
    r = np.asarray(r, dtype=float).reshape(3)
    return 0.5 * (IDENTITY + r[0] * SIGMA_X + r[1] * SIGMA_Y + r[2] * SIGMA_Z)


def bloch_of(rho):
    rho = check_density(rho)
    return np.array([np.trace(rho @ p).real for p in PAULI])


def evolve(state, params):
    r, _ = channel_bloch(state.bloch, params)
    return PureQubit(r / np.linalg.norm(r))


def coefficients(bloch):
    """Symmetric fiducial coefficients ``1/6 +- r_i/2`` for Bloch vectors ``(..., 3)``."""
    r = np.asarray(bloch, dtype=float)
    return np.stack([1.0 / 6.0 + sign * r[..., axis] / 2 for axis, sign in _FIDUCIAL_AXIS], axis=-1)


def coefficient_rates(dr):
    """Coefficient derivatives induced by Bloch derivatives ``(..., 3)``; linear, no constant."""
    dr = np.asarray(dr, dtype=float)
    return np.stack([sign * dr[..., axis] / 2 for axis, sign in _FIDUCIAL_AXIS], axis=-1)


def decompose(rho):
    """Coefficients ``C_alpha`` with ``rho = sum_alpha C_alpha |alpha><alpha|``.

    The six-state decomposition has one free parameter per axis pair; this
    returns the symmetric choice, which is linear in the Bloch vector.
    """
    c = coefficients(bloch_of(rho))
    return dict(zip(FIDUCIAL_LABELS, c.tolist()))


def reconstruct(coeffs):
    """Inverse of :func:`decompose`: ``sum_alpha C_alpha |alpha><alpha|``."""
    if isinstance(coeffs, dict):
        coeffs = [coeffs[k] for k in FIDUCIAL_LABELS]
    return sum(c * density_of(b) for c, b in zip(coeffs, FIDUCIAL_BLOCH))


def coefficient_derivatives(probe, params):
    """Derivatives of the evolved probe's coefficients w.r.t. phi and chi."""
    _, dr = channel_bloch(probe.bloch, params)
    d_phi, d_chi = coefficient_rates(dr)
    return dict(zip(FIDUCIAL_LABELS, d_phi.tolist())), dict(zip(FIDUCIAL_LABELS, d_chi.tolist()))


def qfi_matrix(probe, params):
    """Pure-state quantum Fisher information for (phi, chi).

    Uses ``H_ij = 4 Re(<d_i psi|d_j psi> - <d_i psi|psi><psi|d_j psi>)`` with
    the derivatives of the channel unitaries taken in closed form.
    """
    psi0 = probe.spinor
    u, v = phase_unitary(params.phi), rotation_unitary(params.chi)
    du = -0.5j * SIGMA_Z @ u
    dv = -0.5j * SIGMA_X @ v
    if params.order is ChannelOrder.VU:
        psi = v @ u @ psi0
        dpsi = [v @ du @ psi0, dv @ u @ psi0]
    else:
        psi = u @ v @ psi0
        dpsi = [du @ v @ psi0, u @ dv @ psi0]
    h = np.empty((2, 2))
    for i in range(2):
        for j in range(2):
            term = np.vdot(dpsi[i], dpsi[j]) - np.vdot(dpsi[i], psi) * np.vdot(psi, dpsi[j])
            h[i, j] = 4 * term.real
    return FisherMatrix(h, labels=("phi", "chi"))
