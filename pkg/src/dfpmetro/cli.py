"""Command-line front end.

Every command writes one result table (CSV, or JSON when the output path
ends in ``.json``) whose header embeds the resolved configuration. Exit
codes: 0 success, 2 bad input, 3 no feasible probe.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .base import DfpError, InfeasibleProbeError
from .fisher import effective_batch
from .probe_search import evaluate_probe, optimize_single, optimize_two_parameter
from .qubit import ChannelParams, PureQubit, qfi_matrix
from .tableio import read_table, write_rows
from .tomo import (
    beamsplitter_povm,
    fisher_from_povm,
    ideal_povm,
    random_povm,
    reconstruct_povm,
    synth_dfp,
    waveplate_povm,
)
from .wfh import WfhDetector, outcome_fisher_table, squeeze_tradeoff_scan, wigner_dsv

log = logging.getLogger("dfpmetro")

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE = 0, 2, 3
MODELS = ("waveplate", "hv", "da", "rl", "zx", "bs")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise DfpError(message)


def parse_range(text, name="range"):
    """``a:b:step`` (inclusive of ``b`` within 1e-9 steps) or a single value."""
    parts = str(text).split(":")
    try:
        nums = [float(p) for p in parts]
    except ValueError:
        raise DfpError(f"{name}: cannot parse {text!r}") from None
    if len(nums) == 1:
        return np.array(nums)
    if len(nums) != 3:
        raise DfpError(f"{name}: expected a:b:step, got {text!r}")
    a, b, step = nums
    if not step > 0:
        raise DfpError(f"{name}: step must be positive")
    if b < a:
        raise DfpError(f"{name}: empty range {text!r}")
    n = int(np.floor((b - a) / step + 1e-9)) + 1
    return np.round(a + step * np.arange(n), 12)


def parse_list(text, name="list"):
    try:
        vals = [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise DfpError(f"{name}: cannot parse {text!r}") from None
    if not vals:
        raise DfpError(f"{name}: empty list")
    return vals


def parse_probe(text):
    if text == "auto":
        return None
    r = np.array(parse_list(text, "probe"))
    if r.shape != (3,) or np.linalg.norm(r) == 0:
        raise DfpError("probe must be 'auto' or three Bloch components x,y,z")
    return PureQubit(r / np.linalg.norm(r))


def parse_params(text):
    names = tuple(p.strip() for p in text.split(","))
    if names not in (("phi",), ("phi", "chi")):
        raise DfpError("--params must be 'phi' or 'phi,chi'")
    return names


def _map(fn, items, threads):
    items = list(items)
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _config(args):
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "output", "verbose", "threads")}
    cfg["version"] = __version__
    return cfg


def _povm_for(args, theta_deg=None):
    name = args.model
    if name == "waveplate":
        return waveplate_povm(np.deg2rad(theta_deg))
    if name == "bs":
        return beamsplitter_povm(args.t_h, args.t_v)
    if name == "random":
        return random_povm(args.n_outcomes, args.seed)
    return ideal_povm(name)


def _table_for(args, theta_deg=None):
    if getattr(args, "table", None):
        return read_table(args.table, args.atol)
    return synth_dfp(_povm_for(args, theta_deg), args.noise, args.seed)


def _qfi_ratios(fisher, probe, params, names):
    h = np.diag(qfi_matrix(probe, params).matrix)
    f = np.diag(np.asarray(fisher))
    idx = [("phi", "chi").index(n) for n in names]
    with np.errstate(divide="ignore", invalid="ignore"):
        return float(np.sum(np.where(h[idx] > 0, f / h[idx], np.nan)))


def _fisher_point(table, params, names, probe, eps, args):
    """Fisher entries at one scan point, optimising the probe when ``probe`` is None."""
    rejected = 0
    if probe is None:
        if len(names) == 1:
            rep = optimize_single(
                table, params.phi, eps, chi=params.chi, order=params.order, grid_step_deg=args.grid_step
            )
        else:
            rep = optimize_two_parameter(
                table,
                params.phi,
                params.chi,
                eps,
                scalarization=args.scalarization,
                order=params.order,
                grid_step_deg=args.grid_step,
            )
        probe, rejected = rep.probe, rep.rejected
    fisher, _ = evaluate_probe(table, probe, params, names, eps)
    f = np.asarray(fisher)
    row = [*probe.bloch, f[0, 0]]
    if len(names) == 2:
        eff, singular = effective_batch(f[None])
        row += [f[1, 1], f[0, 1], eff[0, 0], eff[0, 1], int(singular[0])]
    row += [_qfi_ratios(f, probe, params, names), int(fisher.divergent), rejected]
    return row


def _fisher_columns(names):
    cols = ["probe_x", "probe_y", "probe_z", "F_phiphi"]
    if len(names) == 2:
        cols += ["F_chichi", "F_chiphi", "Fp_phiphi", "Fp_chichi", "singular"]
    return cols + ["qfi_ratio", "divergent", "rejected"]


def cmd_fisher_scan(args):
    names = parse_params(args.params)
    probe = parse_probe(args.probe)
    phis = parse_range(args.phi, "--phi")
    chis = parse_range(args.chi, "--chi")
    thetas = parse_range(args.theta, "--theta") if args.model == "waveplate" and not args.table else None
    if args.table and args.model:
        raise DfpError("give either --table or --model, not both")
    if not args.table and not args.model:
        raise DfpError("one of --table or --model is required")
    if sum(len(v) > 1 for v in (phis, chis, thetas if thetas is not None else [0])) > 1:
        raise DfpError("only one of --theta, --phi, --chi may be a range")
    fixed_table = None if thetas is not None else _table_for(args)
    points = []
    for theta in thetas if thetas is not None else [None]:
        for phi in phis:
            for chi in chis:
                points.append((theta, phi, chi))

    def run(point):
        theta, phi, chi = point
        table = fixed_table if theta is None else _table_for(args, theta)
        params = ChannelParams(phi, chi, args.order)
        return [theta if theta is not None else "", phi, chi] + _fisher_point(
            table, params, names, probe, args.eps, args
        )

    rows = _map(run, points, args.threads)
    columns = ["theta_deg", "phi", "chi"] + _fisher_columns(names)
    return columns, rows, {}


def cmd_optimize_probe(args):
    if bool(args.table) == bool(args.model):
        raise DfpError("exactly one of --table or --model is required")
    names = parse_params(args.params)
    table = _table_for(args, args.theta)
    if len(names) == 1:
        rep = optimize_single(
            table, args.phi, args.eps, chi=args.chi, order=args.order, grid_step_deg=args.grid_step
        )
    else:
        rep = optimize_two_parameter(
            table,
            args.phi,
            args.chi,
            args.eps,
            scalarization=args.scalarization,
            order=args.order,
            grid_step_deg=args.grid_step,
        )
    if args.scan and rep.scan is not None:
        keys = list(rep.scan)
        write_rows(args.scan, keys, list(zip(*(rep.scan[k] for k in keys))), _config(args))
    rows = [[rank, *p.bloch, v] for rank, (p, v) in enumerate(rep.local_maxima)]
    notes = {
        "best_probe": [float(v) for v in rep.probe.bloch],
        "best_value": rep.value,
        "fisher": np.asarray(rep.fisher).tolist(),
        "effective": None if rep.effective is None else [float(v) for v in rep.effective],
        "rejected": rep.rejected,
        "divergent_points": rep.divergent_points,
        "refine_iterations": rep.refine_iterations,
        "non_identifiable": rep.non_identifiable,
        "singular": rep.singular,
    }
    return ["rank", "probe_x", "probe_y", "probe_z", "value"], rows, notes


def cmd_tomo_compare(args):
    args.model = args.povm
    povm = _povm_for(args, args.theta)
    table = synth_dfp(povm, args.noise, args.seed)
    recon, info = reconstruct_povm(table, return_info=True)
    names = ("phi", "chi") if len(povm) >= 3 else ("phi",)
    probe = parse_probe(args.probe)
    phis = parse_range(args.phi, "--phi")
    chis = parse_range(args.chi, "--chi")
    if len(phis) > 1 and len(chis) > 1:
        raise DfpError("only one of --phi, --chi may be a range")
    points = [(phi, chi) for phi in phis for chi in chis]
    pairs = [(i, j) for i in range(len(names)) for j in range(i, len(names))]

    def run(point):
        params = ChannelParams(point[0], point[1], args.order)
        p = probe
        if p is None:
            if len(names) == 1:
                p = optimize_single(table, params.phi, chi=params.chi, order=params.order,
                                    grid_step_deg=args.grid_step).probe
            else:
                p = optimize_two_parameter(table, params.phi, params.chi, order=params.order,
                                           grid_step_deg=args.grid_step).probe
        try:
            f_dfp = np.asarray(evaluate_probe(table, p, params, names)[0])
            feasible = 1
        except InfeasibleProbeError:
            f_dfp = np.full((len(names), len(names)), np.nan)
            feasible = 0
        f_tomo = np.asarray(fisher_from_povm(recon, p, params, names))
        d_dfp, d_tomo = np.diag(f_dfp), np.diag(f_tomo)
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = float(np.max(np.abs(d_dfp - d_tomo) / np.abs(d_dfp)))
        row = [point[0], point[1], *p.bloch]
        for i, j in pairs:
            row += [f_dfp[i, j], f_tomo[i, j]]
        return row + [rel, feasible]

    rows = _map(run, points, args.threads)
    labels = {(0, 0): "F_phiphi", (1, 1): "F_chichi", (0, 1): "F_chiphi"}
    columns = ["phi", "chi", "probe_x", "probe_y", "probe_z"]
    for ij in pairs:
        columns += [f"dfp_{labels[ij]}", f"tomo_{labels[ij]}"]
    columns += ["rel_diff", "dfp_feasible"]
    rel = [r[-2] for r in rows if np.isfinite(r[-2])]
    notes = {
        "max_rel_diff_diagonal": max(rel) if rel else None,
        "reconstruction_loss": info["loss"],
        "reconstruction_converged": info["converged"],
    }
    return columns, rows, notes


def _detector(args):
    try:
        gamma = complex(args.gamma.replace(" ", ""))
    except ValueError:
        raise DfpError(f"--gamma: cannot parse {args.gamma!r}") from None
    return WfhDetector(gamma, args.n_bins)


def _wfh_probe(alpha, squeeze):
    return complex(alpha) if squeeze == 1.0 else wigner_dsv(alpha, squeeze)


def cmd_wfh_scan(args):
    det = _detector(args)
    alphas = parse_range(args.alpha, "--alpha")
    if not args.squeeze > 0:
        raise DfpError("--squeeze must be positive")

    def run(a):
        f = outcome_fisher_table(det, _wfh_probe(a, args.squeeze), args.phi, args.step)
        return [a, *f.ravel(), float(np.sum(f))]

    rows = _map(run, alphas, args.threads)
    columns = ["alpha"] + [f"F_{x1}_{x2}" for x1, x2 in det.outcomes()] + ["F_total"]
    return columns, rows, {}


def cmd_wfh_squeeze(args):
    det = _detector(args)
    alphas = parse_range(args.alpha, "--alpha")
    rd = parse_list(args.rd, "--rd")

    def run(a):
        return squeeze_tradeoff_scan(det, args.energy, rd, args.phi, alphas=[a], h=args.step)

    scans = _map(run, alphas, args.threads)
    rows = []
    for a, sc in zip(alphas, scans):
        for j, r in enumerate(rd):
            total = args.energy * a * a
            rows.append([a, r, float(np.sqrt(r * total)), sc.s[0, j], sc.residual[0, j], sc.fisher[0, j]])
    by_alpha = np.array([sc.fisher[0] for sc in scans])
    monotone = bool(np.all(np.diff(by_alpha, axis=1) < 0)) if len(rd) > 1 else None
    notes = {"monotone_in_rd_at_every_alpha": monotone}
    return ["alpha", "rd", "alpha0", "s", "photon_residual", "F_total"], rows, notes


def _add_common(p):
    p.add_argument("-o", "--output", default="-", help="output path (.csv or .json); '-' for stdout")
    p.add_argument("--threads", type=int, default=1, help="worker threads for scan points")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_source(p, model_default=None):
    p.add_argument("--table", help="DFP table file (CSV or JSON)")
    p.add_argument("--model", choices=MODELS, default=model_default, help="synthetic detector model")
    p.add_argument("--atol", type=float, default=1e-6, help="row-normalisation tolerance for loaded tables")
    p.add_argument("--noise", type=float, default=0.0, help="Gaussian noise on synthetic DFP entries")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--t-h", type=float, default=0.5, help="H transmission of the bs model")
    p.add_argument("--t-v", type=float, default=0.5, help="V transmission of the bs model")


def _add_search(p):
    p.add_argument("--params", default="phi", help="'phi' or 'phi,chi'")
    p.add_argument("--order", default="VU", help="channel product order: VU (phase first) or UV")
    p.add_argument("--eps", type=float, default=0.0, help="positivity filter threshold")
    p.add_argument("--grid-step", type=float, default=2.0, help="probe grid spacing in degrees")
    p.add_argument("--scalarization", default="sum", choices=("sum", "min", "phi", "chi"))


def build_parser():
    parser = _Parser(prog="dfpmetro", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fisher-scan", help="Fisher information over a parameter or waveplate-angle scan")
    _add_source(p)
    _add_search(p)
    p.add_argument("--theta", default="22.5", help="waveplate angle(s) in degrees, a:b:step")
    p.add_argument("--phi", default="0", help="phase value(s), a:b:step")
    p.add_argument("--chi", default="0", help="rotation value(s), a:b:step")
    p.add_argument("--probe", default="auto", help="'auto' or Bloch components x,y,z")
    _add_common(p)
    p.set_defaults(func=cmd_fisher_scan)

    p = sub.add_parser("optimize-probe", help="best probe and all local maxima for one detector")
    _add_source(p)
    _add_search(p)
    p.add_argument("--theta", type=float, default=22.5, help="waveplate angle in degrees")
    p.add_argument("--phi", type=float, default=0.0)
    p.add_argument("--chi", type=float, default=0.0)
    p.add_argument("--scan", help="also write the two-parameter grid scan here")
    _add_common(p)
    p.set_defaults(func=cmd_optimize_probe)

    p = sub.add_parser("tomo-compare", help="DFP-route versus tomography-route Fisher information")
    p.add_argument("--povm", choices=MODELS + ("random",), default="zx")
    p.add_argument("--n-outcomes", type=int, default=4, help="outcomes of the random POVM")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--t-h", type=float, default=0.5)
    p.add_argument("--t-v", type=float, default=0.5)
    p.add_argument("--theta", type=float, default=22.5)
    p.add_argument("--phi", default="0:0.5:0.05")
    p.add_argument("--chi", default="0")
    p.add_argument("--order", default="VU")
    p.add_argument("--probe", default="0,1,0", help="'auto' or Bloch components x,y,z")
    p.add_argument("--grid-step", type=float, default=2.0)
    _add_common(p)
    p.set_defaults(func=cmd_tomo_compare)

    p = sub.add_parser("wfh-scan", help="per-outcome weak-field homodyne Fisher information over alpha")
    p.add_argument("--n-bins", type=int, default=4)
    p.add_argument("--gamma", default="1.0", help="local oscillator amplitude (complex allowed, e.g. 1+0.5j)")
    p.add_argument("--phi", type=float, default=0.1)
    p.add_argument("--alpha", default="0:2:0.02")
    p.add_argument("--squeeze", type=float, default=1.0, help="P-squeezing s of the probe; 1 is coherent")
    p.add_argument("--step", type=float, default=1e-4, help="finite-difference step in phi")
    _add_common(p)
    p.set_defaults(func=cmd_wfh_scan)

    p = sub.add_parser("wfh-squeeze", help="Fisher information of squeezed probes at fixed energy")
    p.add_argument("--energy", type=float, default=1.0)
    p.add_argument("--rd", default="1,0.95,0.9", help="displacement fractions r_d")
    p.add_argument("--n-bins", type=int, default=4)
    p.add_argument("--gamma", default="1.0")
    p.add_argument("--phi", type=float, default=0.1)
    p.add_argument("--alpha", default="0.2:1.6:0.02")
    p.add_argument("--step", type=float, default=1e-4)
    _add_common(p)
    p.set_defaults(func=cmd_wfh_squeeze)
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        if args.verbose:
            log.setLevel(logging.INFO)
        if args.threads < 1:
            raise DfpError("--threads must be at least 1")
        columns, rows, notes = args.func(args)
        text = write_rows(None if args.output == "-" else args.output, columns, rows, _config(args), notes)
        if args.output == "-":
            sys.stdout.write(text)
    except InfeasibleProbeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except DfpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
