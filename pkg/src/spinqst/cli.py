"""Command-line front end.

Subcommands: gen, partition, simulate, offres, onres, balance, ensemble,
norms. Every option can also come from a JSON file given with ``--config``
(keys are the long option names, dashes or underscores); command-line flags
win over the file. Outputs are deterministic for fixed inputs and seeds.

Exit codes: 0 success, 2 invalid input, 3 physics/numerical precondition
failed, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import warnings
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .balance import adaptive_cycles, balance_ratio, balanced_time, build_schedule
from .dynamics import fidelity_trace
from .errors import NetworkIOError, QSTError, ResonanceError, ValidationError
from .lambdanet import build_lambda, select_resonant_mode
from .netgen import BuilderSpec, honeycomb_positions, load_network, network_to_dict, save_network
from .normscale import NetworkClass, monte_carlo_norm, predict_norm
from . import pipelines, plotting

log = logging.getLogger("spinqst")

NORMS_HEADER = "class,n,d,p,predicted,measuredMean,measuredStd,predictedEmax,measuredEmax"


# --- argument helpers --------------------------------------------------------


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _mode(text: str):
    if text in ("zero", "highest"):
        return text
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"mode must be zero, highest or an index, got {text!r}") from None


def _cycles(text: str):
    if text == "auto":
        return text
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"cycles must be a positive integer or 'auto', got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError("cycles must be at least 1")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _positive(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _threshold(text: str) -> float:
    value = float(text)
    if not 0.0 < value <= 1.0:
        raise argparse.ArgumentTypeError("threshold must lie in (0, 1]")
    return value


# --- parser ------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, net: bool = True) -> None:
    if net:
        p.add_argument("--net", help="network JSON file")
    p.add_argument("--out", help="output file or prefix (stdout when omitted)")
    p.add_argument("--config", help="JSON file with option values")
    p.add_argument("--plot", action="store_true", help="also render a PNG figure next to the CSV")
    p.add_argument("--gnuplot", action="store_true", help="also write a gnuplot script next to the CSV")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spinqst", description="Quantum state transfer in weakly coupled spin networks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a network file")
    _common(g, net=False)
    g.add_argument("--kind", choices=["uniform", "dipolar", "honeycomb", "p1nv"], default="uniform")
    g.add_argument("--n", type=int, default=12, help="node count (uniform, dipolar)")
    g.add_argument("--d", type=_positive, default=1.0, help="spacing / bond length")
    g.add_argument("--rows", type=_positive_int, default=3)
    g.add_argument("--cols", type=_positive_int, default=3)
    g.add_argument("--vacancy", type=float, default=0.0, help="vacancy probability for bulk nodes")
    g.add_argument("--ppm", type=_positive, default=10.0, help="P1 concentration")
    g.add_argument("--sep", type=_positive, default=15.0, help="NV separation in nm")
    g.add_argument("--mean-bulk", type=_positive, default=20.0, help="expected P1 count for the default box")
    g.add_argument("--box", type=_float_list, help="box lengths in nm, e.g. 22.5,22.5,22.5")
    g.add_argument("--seed", type=int, default=0)

    pa = sub.add_parser("partition", help="bulk/end split, norms and gamma")
    _common(pa)
    pa.add_argument("--gamma", type=_positive)

    s = sub.add_parser("simulate", help="exact fidelity trace")
    _common(s)
    s.add_argument("--gamma", type=_positive)
    s.add_argument("--tmax", type=_positive, required=False)
    s.add_argument("--samples", type=_positive_int)
    s.add_argument("--threshold", type=_threshold, default=0.99)

    o = sub.add_parser("offres", help="off-resonance transfer with compensating shifts")
    _common(o)
    o.add_argument("--gamma", type=_positive)
    o.add_argument("--tmax", type=_positive)
    o.add_argument("--samples", type=_positive_int)
    o.add_argument("--no-compensate", dest="compensate", action="store_false")
    o.add_argument("--scan-gamma", type=_float_list, help="gamma values for the scan table")

    on = sub.add_parser("onres", help="on-resonance transfer with balancing")
    _common(on)
    on.add_argument("--gamma", type=_positive)
    on.add_argument("--mode", type=_mode, default="highest")
    on.add_argument("--cycles", type=_cycles, default=20)
    on.add_argument("--symmetrize", dest="symmetrize", action="store_true", default=True)
    on.add_argument("--no-symmetrize", dest="symmetrize", action="store_false")
    on.add_argument("--no-balance", dest="balance", action="store_false")
    on.add_argument("--no-dispersive", dest="dispersive", action="store_false",
                    help="use the bare resonance shift beta*E_d")
    on.add_argument("--tmax", type=_positive)
    on.add_argument("--samples", type=_positive_int, default=4000)
    on.add_argument("--threshold", type=_threshold, default=0.99)
    on.add_argument("--convergence", type=_int_list, help="cycle counts for the convergence table")

    b = sub.add_parser("balance", help="balancing schedule without simulation")
    _common(b)
    b.add_argument("--gamma", type=_positive)
    b.add_argument("--mode", type=_mode, default="highest")
    b.add_argument("--cycles", type=_cycles, default=20)
    b.add_argument("--symmetrize", dest="symmetrize", action="store_true", default=True)
    b.add_argument("--no-symmetrize", dest="symmetrize", action="store_false")

    e = sub.add_parser("ensemble", help="P1/NV ensemble: time to threshold vs NV separation")
    _common(e, net=False)
    e.add_argument("--ppm", type=_positive, default=10.0)
    e.add_argument("--separations", type=_float_list, default=[15.0, 20.0, 25.0])
    e.add_argument("--mean-bulk", type=_positive, default=20.0)
    e.add_argument("--realizations", type=_positive_int, default=100)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--threshold", type=_threshold, default=0.99)
    e.add_argument("--mode", type=_mode, default="highest")
    e.add_argument("--cycles", type=_cycles, default="auto")
    e.add_argument("--samples", type=_positive_int, default=4000)
    e.add_argument("--workers", type=_positive_int, default=1)

    nm = sub.add_parser("norms", help="Monte Carlo norms vs closed forms")
    _common(nm, net=False)
    nm.add_argument("--classes", default="randomUniform,randomDipolar,honeycomb,honeycombVacancy")
    nm.add_argument("--n-grid", type=_int_list, default=[20, 50, 100])
    nm.add_argument("--d", type=_positive, default=1.0)
    nm.add_argument("--p", type=float, default=0.1, help="vacancy probability")
    nm.add_argument("--realizations", type=_positive_int, default=100)
    nm.add_argument("--seed", type=int, default=0)
    nm.add_argument("--workers", type=_positive_int, default=1)
    return parser


def _subparser(parser: argparse.ArgumentParser, name: str) -> argparse.ArgumentParser:
    for action in parser._subparsers._group_actions:
        if name in action.choices:
            return action.choices[name]
    raise ValidationError(f"unknown subcommand {name!r}")


def _apply_config(parser: argparse.ArgumentParser, args: argparse.Namespace, argv) -> argparse.Namespace:
    """Re-parse with the config file values as defaults, so flags still win."""
    try:
        data = json.loads(Path(args.config).read_text())
    except OSError as exc:
        raise NetworkIOError(str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{args.config}: not valid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ValidationError("config file must hold a JSON object")
    sub = _subparser(parser, args.command)
    by_option = {}
    for action in sub._actions:
        for opt in action.option_strings:
            if opt.startswith("--"):
                by_option[opt[2:].replace("-", "_")] = action
    defaults = {}
    for key, value in data.items():
        norm = key.replace("-", "_")
        if norm in ("config", "help"):
            continue
        action = by_option.get(norm)
        if action is None:
            raise ValidationError(f"unknown config key {key!r} for {args.command}")
        if action.const is not None and action.nargs == 0:
            defaults[action.dest] = bool(value) if action.const is True else not bool(value)
            continue
        if action.type is not None and not isinstance(value, bool):
            text = ",".join(str(v) for v in value) if isinstance(value, list) else str(value)
            try:
                value = action.type(text)
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise ValidationError(f"config key {key!r}: {exc}") from None
        if action.choices is not None and value not in action.choices:
            raise ValidationError(f"config key {key!r}: {value!r} not one of {sorted(action.choices)}")
        defaults[action.dest] = value
    sub.set_defaults(**defaults)
    for action in sub._actions:
        if action.dest in defaults:
            action.required = False
    return parser.parse_args(argv)


# --- output helpers ----------------------------------------------------------


def _write(path: Optional[str], text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise NetworkIOError(str(exc)) from exc


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(x):
    if hasattr(x, "tolist"):
        return x.tolist()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _prefix(out: Optional[str]) -> Optional[Path]:
    if out is None:
        return None
    p = Path(out)
    return p.with_suffix("") if p.suffix in (".json", ".csv") else p


def _sibling(prefix: Path, suffix: str) -> Path:
    return prefix.parent / (prefix.name + suffix)


def _require_net(args):
    if not args.net:
        raise ValidationError("--net is required")
    return load_network(args.net)


def _csv_table(header: str, rows) -> str:
    lines = [header]
    for row in rows:
        lines.append(",".join(f"{v:.15g}" if isinstance(v, float) else str(v) for v in row))
    return "\n".join(lines) + "\n"


def _emit_trace(args, trace, report: dict, extra_traces: Optional[dict] = None, label: str = "fidelity") -> None:
    prefix = _prefix(args.out)
    if prefix is None:
        sys.stdout.write(_dump(report))
        return
    csv_path = _sibling(prefix, ".csv")
    _write(str(_sibling(prefix, ".json")), _dump(report))
    trace.save_csv(csv_path)
    traces = {label: trace}
    for name, tr in (extra_traces or {}).items():
        path = _sibling(prefix, f"_{name}.csv")
        tr.save_csv(path)
        traces[name] = tr
    if args.plot:
        plotting.plot_traces(_sibling(prefix, ".png"), traces)
    if args.gnuplot:
        _write(str(_sibling(prefix, ".gp")),
               plotting.gnuplot_script(csv_path, _sibling(prefix, "_gp.png"), 1, [2], "time", "fidelity"))


# --- subcommands -------------------------------------------------------------


def cmd_gen(args) -> int:
    if args.kind in ("uniform", "dipolar"):
        params = {"n": args.n, "d": args.d} if args.kind == "dipolar" else {"n": args.n}
    elif args.kind == "honeycomb":
        params = {"rows": args.rows, "cols": args.cols, "d": args.d}
    else:
        params = {"density_ppm": args.ppm, "nv_separation": args.sep, "mean_bulk": args.mean_bulk}
        if args.box:
            if len(args.box) != 3:
                raise ValidationError("--box needs three lengths")
            params["box"] = tuple(args.box)
    net = BuilderSpec(args.kind, params, vacancy=args.vacancy).build(args.seed)
    if args.out:
        save_network(net, args.out)
    else:
        sys.stdout.write(json.dumps(network_to_dict(net), indent=1) + "\n")
    log.info("generated %s network with %d nodes", args.kind, net.n)
    return 0


def cmd_partition(args) -> int:
    net = _require_net(args)
    p = pipelines.prepare(net, args.gamma)
    report = {
        "n": p.n,
        "ends": list(p.ends),
        "beta": p.beta,
        "epsilon": p.epsilon,
        "gamma": p.gamma,
        "removedEndCoupling": p.removed_end_coupling,
        "warnings": list(p.warnings),
    }
    _write(args.out, _dump(report))
    return 0


def cmd_simulate(args) -> int:
    net = _require_net(args)
    if args.gamma is not None:
        net = pipelines.prepare(net, args.gamma).to_network()
    if args.tmax is None:
        raise ValidationError("--tmax is required for simulate")
    trace = fidelity_trace(net.couplings, *net.ends, args.tmax, samples=args.samples)
    report = {"peakTime": trace.peak[0], "peakFidelity": trace.peak[1],
              "timeToThreshold": trace.first_crossing(args.threshold), "threshold": args.threshold}
    _emit_trace(args, trace, report)
    return 0


def cmd_offres(args) -> int:
    net = _require_net(args)
    try:
        res = pipelines.run_offres(net, gamma=args.gamma, compensate=args.compensate, t_max=args.tmax, samples=args.samples)
    except ResonanceError as exc:
        raise ResonanceError(f"{exc} (run the onres subcommand instead)") from exc
    report = res.record()
    rows = []
    if args.scan_gamma:
        rows = pipelines.scan_gamma(net, args.scan_gamma, samples=args.samples)
        report["scan"] = [{"gamma": r.gamma, "peakFidelity": r.peak_fidelity, "peakTime": r.peak_time, "tm": r.tm} for r in rows]
    _emit_trace(args, res.trace, report)
    prefix = _prefix(args.out)
    if rows and prefix is not None:
        scan_csv = _sibling(prefix, "_scan.csv")
        _write(str(scan_csv), _csv_table("gamma,peakFidelity,peakTime,tm",
                                         [(r.gamma, r.peak_fidelity, r.peak_time, r.tm) for r in rows]))
        if args.plot:
            plotting.plot_gamma_scan(_sibling(prefix, "_scan.png"), rows)
        if args.gnuplot:
            _write(str(_sibling(prefix, "_scan.gp")), plotting.gnuplot_script(
                scan_csv, _sibling(prefix, "_scan_gp.png"), 1, [2], "gamma", "peak fidelity", logx=True))
    return 0


def cmd_onres(args) -> int:
    net = _require_net(args)
    res = pipelines.run_onres(
        net,
        gamma=args.gamma,
        strategy=args.mode,
        cycles=args.cycles,
        symmetrized=args.symmetrize,
        balance=args.balance,
        dispersive=args.dispersive,
        samples=args.samples,
        t_max=args.tmax,
        convergence=args.convergence,
    )
    report = res.record()
    main = res.balanced if res.balanced is not None else res.unbalanced
    report["timeToThreshold"] = main.first_crossing(args.threshold)
    report["threshold"] = args.threshold
    extra = {"unbalanced": res.unbalanced} if res.balanced is not None else {}
    _emit_trace(args, main, report, extra, label="balanced" if res.balanced is not None else "unbalanced")
    prefix = _prefix(args.out)
    if res.convergence and prefix is not None:
        conv_csv = _sibling(prefix, "_convergence.csv")
        _write(str(conv_csv), _csv_table("L,symmetrized,unsymmetrized",
                                         [(r.L, r.symmetrized, r.unsymmetrized) for r in res.convergence]))
        if args.plot:
            plotting.plot_convergence(_sibling(prefix, "_convergence.png"), res.convergence)
        if args.gnuplot:
            _write(str(_sibling(prefix, "_convergence.gp")), plotting.gnuplot_script(
                conv_csv, _sibling(prefix, "_convergence_gp.png"), 1, [2, 3], "L", "peak fidelity", logx=True))
    return 0


def cmd_balance(args) -> int:
    net = _require_net(args)
    p = pipelines.prepare(net, args.gamma)
    mode = select_resonant_mode(p, args.mode)
    lam = build_lambda(p, mode)
    O1, ON = lam.overlaps
    r, flip = balance_ratio(O1, ON)
    T = balanced_time(min(abs(O1), abs(ON)), p.epsilon)
    cycles = adaptive_cycles(O1, ON) if args.cycles == "auto" else args.cycles
    sched = build_schedule(r, p.ends[flip], T, cycles, args.symmetrize)
    report = {"O1": O1, "ON": ON, "gamma": p.gamma, "schedule": sched.record()}
    _write(args.out, _dump(report))
    return 0


def cmd_ensemble(args) -> int:
    summaries, rows = pipelines.run_ensemble(
        args.separations,
        realizations=args.realizations,
        base_seed=args.seed,
        density_ppm=args.ppm,
        mean_bulk=args.mean_bulk,
        threshold=args.threshold,
        strategy=args.mode,
        cycles=args.cycles,
        samples=args.samples,
        workers=args.workers,
    )
    summary_csv = "\n".join([pipelines.EnsembleSummary.HEADER] + [s.csv_row() for s in summaries]) + "\n"
    prefix = _prefix(args.out)
    if prefix is None:
        sys.stdout.write(summary_csv)
        return 0
    csv_path = _sibling(prefix, ".csv")
    _write(str(csv_path), summary_csv)
    inst = _csv_table(
        "separation,seed,status,timeToThreshold,gammaUsed,naturalGamma,balancedPeak,unbalancedPeak",
        [(r.separation, r.seed, r.status, *("" if v is None else v for v in
          (r.time_to_threshold, r.gamma_used, r.natural_gamma, r.balanced_peak, r.unbalanced_peak))) for r in rows],
    )
    _write(str(_sibling(prefix, "_instances.csv")), inst)
    if args.plot:
        plotting.plot_ensemble(_sibling(prefix, ".png"), summaries)
    if args.gnuplot:
        _write(str(_sibling(prefix, ".gp")), plotting.gnuplot_script(
            csv_path, _sibling(prefix, "_gp.png"), 1, [6, 7], "NV separation (nm)", "time to threshold", logy=True))
    return 0


def honeycomb_size(n: int) -> tuple[int, int]:
    """Square hexagon patch whose node count is closest to ``n``."""
    best = None
    k = 1
    while True:
        count = len(honeycomb_positions(k, k))
        if best is None or abs(count - n) < abs(best[1] - n):
            best = (k, count)
        if count > n:
            return best[0], best[0]
        k += 1


def norms_rows(classes: Sequence[str], n_grid: Sequence[int], d: float, p: float, realizations: int,
               seed: int, workers: int) -> list[dict]:
    rows = []
    for name in classes:
        cls = NetworkClass(name)
        for n in n_grid:
            if cls is NetworkClass.RANDOM_UNIFORM:
                spec = BuilderSpec("uniform", {"n": n})
            elif cls is NetworkClass.RANDOM_DIPOLAR:
                spec = BuilderSpec("dipolar", {"n": n, "d": d})
            else:
                k, _ = honeycomb_size(n)
                vac = p if cls is NetworkClass.HONEYCOMB_VACANCY else 0.0
                spec = BuilderSpec("honeycomb", {"rows": k, "cols": k, "d": d}, vacancy=vac)
            size = len(honeycomb_positions(k, k)) if spec.kind == "honeycomb" else n
            vac_p = p if cls is NetworkClass.HONEYCOMB_VACANCY else 0.0
            est = predict_norm(cls, size, d, vac_p)
            mc = monte_carlo_norm(spec, realizations, seed, workers)
            rows.append({
                "class": cls.value,
                "n": size,
                "d": d,
                "p": vac_p,
                "predicted": est.predicted_norm,
                "measuredMean": mc.mean_norm,
                "measuredStd": mc.std_norm,
                "predictedEmax": est.predicted_emax,
                "measuredEmax": mc.mean_emax,
            })
    return rows


def _norms_csv(rows) -> str:
    lines = [NORMS_HEADER]
    for r in rows:
        vals = []
        for key in NORMS_HEADER.split(","):
            v = r[key]
            vals.append("" if v is None else (f"{v:.15g}" if isinstance(v, float) else str(v)))
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"


def cmd_norms(args) -> int:
    classes = [c.strip() for c in args.classes.split(",") if c.strip()]
    try:
        for c in classes:
            NetworkClass(c)
    except ValueError:
        raise ValidationError(f"unknown network class in {args.classes!r}") from None
    if not 0.0 <= args.p < 1.0:
        raise ValidationError("--p must lie in [0, 1)")
    if args.realizations < 2:
        raise ValidationError("need at least two realizations")
    rows = norms_rows(classes, args.n_grid, args.d, args.p, args.realizations, args.seed, args.workers)
    text = _norms_csv(rows)
    prefix = _prefix(args.out)
    if prefix is None:
        sys.stdout.write(text)
        return 0
    csv_path = _sibling(prefix, ".csv")
    _write(str(csv_path), text)
    if args.plot:
        plotting.plot_norms(_sibling(prefix, ".png"), rows)
    if args.gnuplot:
        _write(str(_sibling(prefix, ".gp")), plotting.gnuplot_script(
            csv_path, _sibling(prefix, "_gp.png"), 2, [5, 6], "N", "Frobenius norm", logx=True, logy=True))
    return 0


COMMANDS = {
    "gen": cmd_gen,
    "partition": cmd_partition,
    "simulate": cmd_simulate,
    "offres": cmd_offres,
    "onres": cmd_onres,
    "balance": cmd_balance,
    "ensemble": cmd_ensemble,
    "norms": cmd_norms,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    logging.captureWarnings(True)
    warnings.formatwarning = lambda msg, cat, *rest, **kw: f"{cat.__name__}: {msg}"
    try:
        if args.config:
            args = _apply_config(parser, args, argv)
        return COMMANDS[args.command](args)
    except QSTError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
