"""Probe-state optimisation against a DFP table.

Pure probes are searched on the Bloch sphere: an exhaustive grid over
(polar, azimuth) locates the feasible basins, then Nelder-Mead refines the
best few. Probes whose predicted probabilities go negative are rejected,
since noisy DFPs otherwise produce unphysical maxima.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .base import PROB_FLOOR, DfpError, FisherMatrix, InfeasibleProbeError
from .fisher import DfpTable, effective_batch, fisher_batch
from .qubit import (
    FIDUCIAL_LABELS,
    ChannelParams,
    PureQubit,
    bloch_from_angles,
    channel_bloch,
    coefficient_rates,
    coefficients,
)

log = logging.getLogger(__name__)

SCALARIZATIONS = ("sum", "min", "phi", "chi")
# probes with an outcome probability below this sit on a 0/0 point of the
# Fisher information, where double precision cannot resolve the ratio
MIN_PROB = 1e-7
_PARAM_INDEX = {"phi": 0, "chi": 1}


@dataclass(frozen=True)
class ProbeParam:
    polar: float
    azimuth: float

    def __post_init__(self):
        polar, azimuth = _wrap_angles(self.polar, self.azimuth)
        object.__setattr__(self, "polar", float(polar))
        object.__setattr__(self, "azimuth", float(azimuth))

    @property
    def bloch(self):
        return bloch_from_angles(self.polar, self.azimuth)

    def state(self):
        return PureQubit(self.bloch)


def _wrap_angles(polar, azimuth):
    # fold any (polar, azimuth) back to [0, pi] x [0, 2 pi)
    r = bloch_from_angles(polar, azimuth)
    polar = np.arccos(np.clip(r[2], -1.0, 1.0))
    azimuth = np.mod(np.arctan2(r[1], r[0]), 2 * np.pi)
    return polar, azimuth


@dataclass
class Evaluation:
    """Objective values and diagnostics for a stack of probes."""

    value: np.ndarray
    feasible: np.ndarray
    divergent: np.ndarray
    fisher: np.ndarray
    effective: np.ndarray | None = None
    singular: np.ndarray | None = None
    resolved: np.ndarray | None = None

    @property
    def valid(self):
        ok = self.feasible & ~self.divergent & np.isfinite(self.value)
        if self.singular is not None:
            ok &= ~self.singular
        return ok if self.resolved is None else ok & self.resolved


@dataclass
class SearchReport:
    probe: PureQubit
    value: float
    fisher: FisherMatrix
    rejected: int
    grid_step_deg: float
    refine_iterations: int
    effective: np.ndarray | None = None
    divergent_points: int = 0
    non_identifiable: bool = False
    singular: bool = False
    local_maxima: list = field(default_factory=list)
    scan: dict | None = None

    @property
    def param(self):
        polar = float(np.arccos(np.clip(self.probe.bloch[2], -1, 1)))
        azimuth = float(np.mod(np.arctan2(self.probe.bloch[1], self.probe.bloch[0]), 2 * np.pi))
        return ProbeParam(polar, azimuth)


class DfpObjective:
    """Vectorised Fisher objective of probes on a DFP table.

    ``parameters`` selects the estimated parameters: ``("phi",)`` gives the
    single-parameter information ``F_phiphi``; ``("phi", "chi")`` gives the
    effective values reduced by ``scalarization``.
    """

    def __init__(
        self, table, params, parameters=("phi",), eps=0.0, scalarization="sum", scale=1.0, min_prob=MIN_PROB
    ):
        if scalarization not in SCALARIZATIONS:
            raise DfpError(f"scalarization must be one of {SCALARIZATIONS}")
        if len(parameters) not in (1, 2) or any(p not in _PARAM_INDEX for p in parameters):
            raise DfpError(f"unsupported parameters {parameters!r}")
        if scale <= 0:
            raise DfpError("objective scale must be positive")
        self.table = table
        self.params = params
        self.parameters = tuple(parameters)
        self.eps = eps
        self.scalarization = scalarization
        self.scale = scale
        self.min_prob = min_prob
        self._q = table.in_order(FIDUCIAL_LABELS)
        self._idx = [_PARAM_INDEX[p] for p in self.parameters]

    def __call__(self, bloch):
        bloch = np.atleast_2d(bloch)
        r, dr = channel_bloch(bloch, self.params)
        p = coefficients(r) @ self._q
        dp = coefficient_rates(dr[:, self._idx]) @ self._q
        feasible = np.all(p >= self.eps - PROB_FLOOR, axis=-1)
        resolved = np.min(p, axis=-1) >= self.min_prob
        f, divergent = fisher_batch(p, dp)
        if len(self._idx) == 1:
            value = f[:, 0, 0]
            return Evaluation(self.scale * value, feasible, divergent, f, resolved=resolved)
        eff, singular = effective_batch(f)
        value = _scalarize(eff, self.scalarization)
        return Evaluation(self.scale * value, feasible, divergent, f, eff, singular, resolved)


def _scalarize(eff, how):
    if how == "sum":
        return eff[:, 0] + eff[:, 1]
    if how == "min":
        return np.minimum(eff[:, 0], eff[:, 1])
    return eff[:, _PARAM_INDEX[how]]


def sphere_grid(step_deg):
    if step_deg <= 0 or step_deg > 90:
        raise DfpError("grid step must lie in (0, 90] degrees")
    n_polar = int(round(180.0 / step_deg)) + 1
    n_az = int(round(360.0 / step_deg))
    polar = np.linspace(0.0, np.pi, n_polar)
    azimuth = np.arange(n_az) * (2 * np.pi / n_az)
    return polar, azimuth


def _grid_local_maxima(values):
    """Indices of grid points not exceeded by any of their 8 neighbours (azimuth wraps)."""
    v = np.where(np.isfinite(values), values, -np.inf)
    padded = np.pad(v, ((1, 1), (0, 0)), constant_values=-np.inf)
    is_max = np.isfinite(v)
    for dp in (-1, 0, 1):
        for da in (-1, 0, 1):
            if dp == 0 and da == 0:
                continue
            shifted = np.roll(padded, -da, axis=1)[1 + dp : 1 + dp + v.shape[0]]
            is_max &= v >= shifted
    idx = np.argwhere(is_max)
    order = np.argsort(-v[is_max], kind="stable")
    return idx[order]


def search_sphere(objective, grid_step_deg=2.0, n_starts=3, refine=True):
    """Maximise ``objective`` over pure probes.

    ``objective`` maps Bloch vectors ``(K, 3)`` to an :class:`Evaluation`.
    Returns ``(bloch, value, info)``; the refined value is never below the
    best feasible grid value.
    """
    polar, azimuth = sphere_grid(grid_step_deg)
    pp, aa = np.meshgrid(polar, azimuth, indexing="ij")
    ev = objective(bloch_from_angles(pp, aa).reshape(-1, 3))
    values = np.where(ev.valid, ev.value, -np.inf).reshape(pp.shape)
    info = {
        "rejected": int(np.count_nonzero(~ev.feasible)),
        "divergent": int(np.count_nonzero(ev.feasible & ev.divergent)),
        "iterations": 0,
        "grid": (polar, azimuth),
        "grid_eval": ev,
        "maxima": [],
    }
    if not np.any(ev.feasible):
        raise InfeasibleProbeError("no feasible probe on the search grid")
    if not np.any(np.isfinite(values)):
        # feasible probes exist but none has a defined objective (e.g. singular F)
        candidates = ev.feasible & ~ev.divergent
        k = int(np.flatnonzero(candidates if np.any(candidates) else ev.feasible)[0])
        info["undefined"] = True
        return bloch_from_angles(pp.ravel()[k], aa.ravel()[k]), float("nan"), info
    info["undefined"] = False

    starts = _grid_local_maxima(values)[:n_starts] if n_starts > 0 else []
    if len(starts) == 0:
        starts = [np.unravel_index(np.argmax(values), values.shape)]
    i0, j0 = starts[0]
    best_angles = np.array([polar[i0], azimuth[j0]])
    best_value = float(values[i0, j0])

    def neg(x):
        e = objective(bloch_from_angles(x[0], x[1])[None, :])
        return -float(e.value[0]) if e.valid[0] else np.inf

    step = np.deg2rad(grid_step_deg)
    for i, j in starts:
        x0 = np.array([polar[i], azimuth[j]])
        local = (x0, float(values[i, j]))
        if refine:
            simplex = np.array([x0, x0 + [step, 0.0], x0 + [0.0, step]])
            res = minimize(
                neg,
                x0,
                method="Nelder-Mead",
                options={"initial_simplex": simplex, "xatol": 1e-7, "fatol": 1e-12, "maxiter": 600},
            )
            info["iterations"] += int(res.nit)
            if np.isfinite(res.fun) and -res.fun > local[1]:
                local = (res.x, -float(res.fun))
        info["maxima"].append(local)
        if local[1] > best_value:
            best_angles, best_value = local[0], local[1]
    return bloch_from_angles(*best_angles), best_value, info


def _report(objective, bloch, value, info, step, *, keep_scan=False):
    ev = objective(bloch[None, :])
    fisher = FisherMatrix(ev.fisher[0], labels=objective.parameters, divergent=bool(ev.divergent[0]))
    effective = None if ev.effective is None else ev.effective[0]
    singular = bool(ev.singular[0]) if ev.singular is not None else False
    non_identifiable = value < PROB_FLOOR * objective.scale
    maxima = [(PureQubit(bloch_from_angles(*x)), v) for x, v in info["maxima"]]
    scan = None
    if keep_scan:
        polar, azimuth = info["grid"]
        g = info["grid_eval"]
        pp, aa = np.meshgrid(polar, azimuth, indexing="ij")
        scan = {
            "polar": pp.ravel(),
            "azimuth": aa.ravel(),
            "value": g.value,
            "feasible": g.feasible,
            "F_phiphi": g.fisher[:, 0, 0],
            "F_chichi": g.fisher[:, 1, 1],
            "F_chiphi": g.fisher[:, 0, 1],
            "Fp_phiphi": g.effective[:, 0],
            "Fp_chichi": g.effective[:, 1],
            "singular": g.singular,
        }
    return SearchReport(
        probe=PureQubit(bloch),
        value=0.0 if non_identifiable else float(value),
        fisher=fisher,
        rejected=info["rejected"],
        grid_step_deg=step,
        refine_iterations=info["iterations"],
        effective=effective,
        divergent_points=info["divergent"],
        non_identifiable=bool(non_identifiable),
        singular=singular,
        local_maxima=maxima,
        scan=scan,
    )


def optimize_single(
    table, phi0=0.0, eps=0.0, *, chi=0.0, order="VU", grid_step_deg=2.0, n_starts=3
):
    """Probe maximising the single-parameter information on the phase ``phi``.

    Raises :class:`InfeasibleProbeError` if no grid probe passes the
    positivity filter. When the information vanishes everywhere the report
    carries ``non_identifiable=True`` and value 0.
    """
    params = ChannelParams(phi0, chi, order)
    objective = DfpObjective(table, params, ("phi",), eps)
    bloch, value, info = search_sphere(objective, grid_step_deg, n_starts)
    if value < PROB_FLOOR:
        log.info("phase is not identifiable with this detector at phi=%g", phi0)
    return _report(objective, bloch, value, info, grid_step_deg)


def optimize_two_parameter(
    table,
    phi0=0.0,
    chi0=0.0,
    eps=0.0,
    *,
    scalarization="sum",
    order="VU",
    grid_step_deg=2.0,
    n_starts=3,
):
    """Joint (phi, chi) search; the full grid scan is kept in ``report.scan``.

    Each probe is scored by its effective informations ``1/(F^-1)_ii``,
    combined by ``scalarization`` (sum, min, phi or chi). Probes with a
    singular Fisher matrix are flagged in the scan and never selected unless
    every probe is singular, in which case ``report.singular`` is set.
    """
    if table.n_outcomes < 3:
        raise DfpError("two-parameter estimation needs at least three outcomes")
    params = ChannelParams(phi0, chi0, order)
    objective = DfpObjective(table, params, ("phi", "chi"), eps, scalarization)
    bloch, value, info = search_sphere(objective, grid_step_deg, n_starts)
    report = _report(objective, bloch, value, info, grid_step_deg, keep_scan=True)
    if info["undefined"]:
        report.value = float("nan")
        report.non_identifiable = False
        report.singular = True
    return report


def evaluate_probe(table, probe, params, parameters=("phi", "chi"), eps=0.0):
    """Fisher matrix and effective values of one probe on a DFP table."""
    objective = DfpObjective(table, params, parameters, eps)
    ev = objective(probe.bloch[None, :])
    if not ev.feasible[0]:
        raise InfeasibleProbeError("probe predicts negative outcome probabilities on this table")
    d = len(parameters)
    fisher = FisherMatrix(ev.fisher[0][:d, :d], labels=tuple(parameters), divergent=bool(ev.divergent[0]))
    return fisher, (None if ev.effective is None else ev.effective[0])


class ProbeOptimizer(BaseEstimator):
    """Estimator-style front end: ``fit(table)`` searches for the best probe.

    Fitted attributes: ``report_`` (:class:`SearchReport`), ``best_probe_``
    and ``best_value_``. ``score(table)`` evaluates the fitted probe on
    another table, e.g. one measured later on the same detector.
    """

    def __init__(
        self,
        parameters=("phi",),
        phi0=0.0,
        chi0=0.0,
        order="VU",
        eps=0.0,
        scalarization="sum",
        grid_step_deg=2.0,
        n_starts=3,
    ):
        self.parameters = parameters
        self.phi0 = phi0
        self.chi0 = chi0
        self.order = order
        self.eps = eps
        self.scalarization = scalarization
        self.grid_step_deg = grid_step_deg
        self.n_starts = n_starts

    def fit(self, table, y=None):
        if not isinstance(table, DfpTable):
            raise DfpError("ProbeOptimizer.fit expects a DfpTable")
        if tuple(self.parameters) == ("phi",):
            self.report_ = optimize_single(
                table,
                self.phi0,
                self.eps,
                chi=self.chi0,
                order=self.order,
                grid_step_deg=self.grid_step_deg,
                n_starts=self.n_starts,
            )
        else:
            self.report_ = optimize_two_parameter(
                table,
                self.phi0,
                self.chi0,
                self.eps,
                scalarization=self.scalarization,
                order=self.order,
                grid_step_deg=self.grid_step_deg,
                n_starts=self.n_starts,
            )
        self.best_probe_ = self.report_.probe
        self.best_value_ = self.report_.value
        return self

    def score(self, table, y=None):
        check_is_fitted(self, "report_")
        params = ChannelParams(self.phi0, self.chi0, self.order)
        objective = DfpObjective(table, params, tuple(self.parameters), self.eps, self.scalarization)
        ev = objective(self.best_probe_.bloch[None, :])
        return float(ev.value[0]) if ev.valid[0] else float("nan")
