"""Command-line front end.

Subcommands cover the full workflow: ``coeffs`` precomputes the
flowrate-indexed bearing coefficient table, ``simulate`` synthesizes noisy
measurement sets, ``identify`` runs the filter over a measurement file,
``sweep`` maps identification errors over constant-flowrate grids and
``report`` renders CSV outputs into SVG plots.  Every command writes a JSON
manifest next to its outputs (tool version, input hashes, seed) so reruns
are auditable.  Exit codes: 0 success, 1 usage, 2 input/schema error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bearing import (ML_MIN_PER_M3_S, BearingError, load_coefficient_table,
                      save_coefficient_table)
from .config import ConfigError, Machine, load_machine, load_scenario
from .ekf import FilterDivergenceError, NoiseConfig, run_filter, save_history
from .scenarios import (DEFAULT_GRID_ML_MIN, build_measurements, build_plant,
                        build_tables, error_stats, flowrate_profile,
                        load_measurements, run_constant_grid, save_measurements,
                        simulate_truth)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_NUMERICAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit2(f"{self.prog}: error: {message}")


class SystemExit2(Exception):
    """Usage error carried to the top-level handler (exit code 1)."""


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_path, command, inputs, outputs, seed=None, extra=None):
    """Atomically write the run manifest next to ``out_path``."""
    manifest = {
        "tool": "lubemon",
        "version": __version__,
        "command": command,
        "seed": seed,
        "created_unix": time.time(),
        "inputs": {str(p): _sha256(p) for p in inputs if Path(p).is_file()},
        "outputs": [str(p) for p in outputs],
    }
    if extra:
        manifest.update(extra)
    path = Path(str(out_path) + ".manifest.json")
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)
    return path


def _out_dir(args):
    base = getattr(args, "out", None) or os.environ.get("LUBEMON_OUT", ".")
    p = Path(base)
    return p


def _table_for(machine: Machine, table_path, command, progress=print):
    """Load the coefficient table, building and caching it when absent."""
    if table_path:
        path = Path(table_path)
        if not path.is_file():
            raise ConfigError(f"coefficient table not found: {path}")
        return load_coefficient_table(path), path
    path = Path(machine.source_path).with_suffix(".coeffs.csv")
    if path.is_file():
        return load_coefficient_table(path), path
    progress(f"building coefficient table (7 flowrates) -> {path}")
    t1, _ = build_tables(machine)
    save_coefficient_table(t1, path)
    return t1, path


def cmd_coeffs(args):
    machine = load_machine(args.config)
    grid = None
    if args.levels:
        grid = np.array(sorted(float(v) for v in args.levels.split(","))) / ML_MIN_PER_M3_S
    t1, _ = build_tables(machine, q_grid=grid)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_coefficient_table(t1, out)
    write_manifest(out, "coeffs", [args.config], [out])
    print(f"wrote {out} ({t1.flowrate_grid.size} flowrates)")
    return EXIT_OK


def cmd_simulate(args):
    spec = load_scenario(args.config)
    if args.seed is not None:
        spec.seed = args.seed
    if args.sigma_um is not None:
        spec.noise_std = args.sigma_um * 1.0e-6
    machine = load_machine(spec.machine_path)
    table, table_path = _table_for(machine, args.table, "simulate")
    plant = build_plant(machine, (table, table), sample_period=spec.sample_period,
                        mode=args.mode)
    profiles = tuple(flowrate_profile(p, machine.nominal_flow) for p in spec.profiles)
    truth = simulate_truth(plant, profiles, spec.duration, discard=spec.discard)
    Z = build_measurements(truth, spec.noise_std, spec.seed, plant.dt,
                           velocity_noise=spec.velocity_noise)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_measurements(out, truth.times, Z)
    write_manifest(out, "simulate", [args.config, spec.machine_path, table_path],
                   [out], seed=spec.seed,
                   extra={"sigma_um": spec.noise_std * 1e6})
    print(f"wrote {out} ({truth.times.size} samples)")
    return EXIT_OK


def cmd_identify(args):
    spec = load_scenario(args.config)
    machine = load_machine(spec.machine_path)
    table, table_path = _table_for(machine, args.table, "identify")
    times, Z = load_measurements(args.measurements)
    plant = build_plant(machine, (table, table), sample_period=spec.sample_period,
                        mode=args.mode)
    noise = NoiseConfig.defaults(plant.n, max(spec.noise_std, 1.0e-9),
                                 machine.nominal_flow, sample_period=plant.dt)

    if args.live:
        run = _run_live(plant, times, Z, noise, machine)
    else:
        run = run_filter(plant, times, Z, noise, nominal_flow=machine.nominal_flow)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_history(run, out)

    summary = {"converged": run.converged}
    if run.converged:
        q_est = run.converged_value
        summary["q_est_ml_min"] = [float(v) for v in q_est * ML_MIN_PER_M3_S]
        q_true = np.array([float(flowrate_profile(p, machine.nominal_flow)(times[-1]))
                           for p in spec.profiles])
        rel, avg, _, mx = error_stats(q_est, q_true)
        summary["q_true_ml_min"] = [float(v) for v in q_true * ML_MIN_PER_M3_S]
        summary["errors_pct"] = [float(v) for v in rel]
        print(f"converged: q1={summary['q_est_ml_min'][0]:.1f} "
              f"q2={summary['q_est_ml_min'][1]:.1f} ml/min  "
              f"errors: {rel[0]:.2f}% / {rel[1]:.2f}%")
    else:
        print("not converged")
    write_manifest(out, "identify",
                   [args.config, spec.machine_path, table_path, args.measurements],
                   [out], seed=spec.seed, extra={"summary": summary})
    return EXIT_OK


def _run_live(plant, times, Z, noise, machine):
    """Replay the measurement stream at wall-clock rate, reporting throughput."""
    from .ekf import FilterState, predict, update

    x0 = np.zeros(plant.n_states)
    x0[-2:] = machine.nominal_flow
    fs = FilterState(estimate=x0, covariance=np.diag(noise.P0.copy()), step=0)
    n = times.shape[0]
    q_hist = np.empty((n, 2))
    std_hist = np.empty((n, 2))
    innov_hist = np.empty(n)
    nis_hist = np.empty(n)
    t_start = time.perf_counter()
    behind = 0
    for k in range(n):
        deadline = t_start + (k + 1) * plant.dt
        fs = predict(fs, times[k] - plant.dt, plant, noise.Q)
        fs, diag = update(fs, Z[k], plant, noise.R)
        q_hist[k] = diag.flowrates
        std_hist[k] = diag.flowrate_std
        innov_hist[k] = float(np.linalg.norm(diag.innovation))
        nis_hist[k] = diag.nis
        now = time.perf_counter()
        if now > deadline:
            behind += 1
        else:
            time.sleep(deadline - now)
        if k % 1000 == 999:
            q = q_hist[k] * ML_MIN_PER_M3_S
            print(f"t={times[k]:8.3f}s  q1={q[0]:7.1f}  q2={q[1]:7.1f} ml/min",
                  flush=True)
    wall = time.perf_counter() - t_start
    rate = n / wall
    print(f"live replay: {n} steps in {wall:.2f}s ({rate:.0f} Hz, "
          f"{behind} deadline misses)")
    from .ekf import FilterRun, detect_convergence
    window = max(int(round(1.0 / plant.dt)), 2)
    conv, idx, val = detect_convergence(q_hist, window, 0.005 * machine.nominal_flow)
    return FilterRun(times=times, flowrates=q_hist, flowrate_std=std_hist,
                     innovation_norm=innov_hist, nis=nis_hist, converged=conv,
                     converged_index=idx, converged_value=val, final_state=fs)


def cmd_sweep(args):
    levels = [float(v) for v in args.levels.split(",") if v.strip()]
    if not levels:
        raise SystemExit2("sweep: empty level list")
    machine = load_machine(args.config)
    table, table_path = _table_for(machine, args.table, "sweep")
    seeds = [args.seed + k for k in range(args.seeds)]
    plant = build_plant(machine, (table, table), mode=args.mode)
    out_dir = _out_dir(args)
    out_dir.mkdir(parents=True, exist_ok=True)

    sigma = (args.sigma_um if args.sigma_um is not None else 1.0) * 1.0e-6
    results, stats = run_constant_grid(
        plant, machine, levels, sigma, seeds,
        progress=lambda s: print(
            f"  q1={s['level1']:.2f} q2={s['level2']:.2f} seed={s['seed']}: "
            f"err={s['errors_pct'][0]:.2f}%/{s['errors_pct'][1]:.2f}%"
            if s["converged"] else "  (not converged)"))

    surface = out_dir / "error_surface.csv"
    with open(surface, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["q1_level", "q2_level", "seed", "converged",
                    "err1_pct", "err2_pct"])
        for r in results:
            w.writerow([r["level1"], r["level2"], r["seed"], int(r["converged"]),
                        *(repr(float(e)) for e in r["errors_pct"])])
    cells = {}
    for r in results:
        if r["converged"]:
            cells.setdefault((r["level1"], r["level2"]), []).append(r["errors_pct"])
    summary = out_dir / "sweep_summary.csv"
    with open(summary, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["q1_level", "q2_level", "n_seeds",
                    "mean_err1_pct", "std_err1_pct", "mean_err2_pct", "std_err2_pct"])
        for (l1, l2), errs in sorted(cells.items()):
            e = np.asarray(errs)
            w.writerow([l1, l2, e.shape[0],
                        repr(float(e[:, 0].mean())), repr(float(e[:, 0].std())),
                        repr(float(e[:, 1].mean())), repr(float(e[:, 1].std()))])
    print(f"sweep: avg={stats['avg_error_pct']:.2f}% "
          f"std={stats['std_error_pct']:.2f}% max={stats['max_error_pct']:.2f}% "
          f"({stats['n_converged']}/{stats['n_runs']} converged)")
    write_manifest(surface, "sweep", [args.config, table_path],
                   [surface, summary], seed=args.seed, extra={"stats": stats})
    return EXIT_OK


def cmd_report(args):
    import matplotlib
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "lubemon"
    import matplotlib.pyplot as plt

    out_dir = _out_dir(args)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    traces = []
    for path in args.inputs:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"report input not found: {path}")
        with open(path, newline="") as f:
            header = f.readline().strip().split(",")
        if header[:2] == ["time_s", "q1_ml_min"]:
            from .ekf import load_history
            traces.append((path.stem, load_history(path)))
        elif header[:2] == ["time_s", "disp_b1_x_m"]:
            t, Z = load_measurements(path)
            fig, ax = plt.subplots(1, 2, figsize=(9, 4.2))
            for k, name in ((0, "bearing 1"), (1, "bearing 2")):
                ax[k].plot(Z[:, 2 * k] * 1e6, Z[:, 2 * k + 1] * 1e6, lw=0.3)
                ax[k].set_title(f"orbit, {name}")
                ax[k].set_xlabel("x [um]")
                ax[k].set_ylabel("y [um]")
                ax[k].set_aspect("equal", "datalim")
            fig.tight_layout()
            out = out_dir / f"{path.stem}_orbits.svg"
            fig.savefig(out, metadata={"Date": None})
            plt.close(fig)
            outputs.append(out)
        elif header[:2] == ["q1_level", "q2_level"]:
            rows = list(csv.reader(open(path, newline="")))[1:]
            l1 = sorted({float(r[0]) for r in rows})
            l2 = sorted({float(r[1]) for r in rows})
            grid = np.full((len(l2), len(l1)), np.nan)
            for r in rows:
                if int(r[3]):
                    i = l2.index(float(r[1]))
                    j = l1.index(float(r[0]))
                    e = 0.5 * (float(r[4]) + float(r[5]))
                    grid[i, j] = np.nanmax([grid[i, j], e])
            fig, ax = plt.subplots(figsize=(5.5, 4.5))
            im = ax.imshow(grid, origin="lower", aspect="auto",
                           extent=(min(l1), max(l1), min(l2), max(l2)))
            fig.colorbar(im, ax=ax, label="relative error [%]")
            ax.set_xlabel("bearing 1 flow level")
            ax.set_ylabel("bearing 2 flow level")
            fig.tight_layout()
            out = out_dir / f"{path.stem}_heatmap.svg"
            fig.savefig(out, metadata={"Date": None})
            plt.close(fig)
            outputs.append(out)
        else:
            raise ConfigError(f"{path}: unrecognized CSV schema ({header[:3]}...)")

    if traces:
        fig, ax = plt.subplots(figsize=(7, 4.2))
        for name, hist in traces:
            t = hist["time_s"]
            q = hist["flowrates"] * ML_MIN_PER_M3_S
            ax.plot(t, q[:, 0], lw=0.8, label=f"{name} q1")
            ax.plot(t, q[:, 1], lw=0.8, label=f"{name} q2")
        ax.set_xlabel("time [s]")
        ax.set_ylabel("flowrate [ml/min]")
        ax.legend(fontsize=8)
        fig.tight_layout()
        out = out_dir / "flowrate_traces.svg"
        fig.savefig(out, metadata={"Date": None})
        plt.close(fig)
        outputs.append(out)

    if not outputs:
        raise ConfigError("report: nothing to plot")
    for out in outputs:
        print(f"wrote {out}")
    write_manifest(outputs[0], "report", list(args.inputs), outputs)
    return EXIT_OK


def build_parser():
    p = _Parser(prog="lubemon",
                description="Rotor-bearing oil supply flowrate identification")
    p.add_argument("--version", action="version", version=f"lubemon {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    pc = sub.add_parser("coeffs", help="precompute the bearing coefficient table")
    pc.add_argument("--config", required=True, help="machine description file")
    pc.add_argument("--out", required=True, help="output CSV path")
    pc.add_argument("--levels", help="comma list of flowrates in ml/min "
                    "(default: the reference 7-point grid)")
    pc.set_defaults(fn=cmd_coeffs)

    ps = sub.add_parser("simulate", help="synthesize a noisy measurement set")
    ps.add_argument("--config", required=True, help="scenario file")
    ps.add_argument("--out", required=True, help="measurement CSV path")
    ps.add_argument("--seed", type=int, help="override the scenario seed")
    ps.add_argument("--sigma-um", type=float, help="override the noise level")
    ps.add_argument("--table", help="coefficient table CSV (else cached/built)")
    ps.add_argument("--mode", choices=("cached", "exact"), default="cached")
    ps.set_defaults(fn=cmd_simulate)

    pi = sub.add_parser("identify", help="run the filter over measurements")
    pi.add_argument("--config", required=True, help="scenario file")
    pi.add_argument("--measurements", required=True, help="measurement CSV")
    pi.add_argument("--out", required=True, help="estimate history CSV path")
    pi.add_argument("--table", help="coefficient table CSV (else cached/built)")
    pi.add_argument("--mode", choices=("cached", "exact"), default="cached")
    pi.add_argument("--live", action="store_true",
                    help="replay at wall-clock 1 kHz pace")
    pi.set_defaults(fn=cmd_identify)

    pw = sub.add_parser("sweep", help="constant-flowrate identification grid")
    pw.add_argument("--config", required=True, help="machine description file")
    pw.add_argument("--levels", required=True,
                    help="comma list of flow levels as fractions of nominal")
    pw.add_argument("--sigma-um", type=float, default=1.0)
    pw.add_argument("--seeds", type=int, default=1, help="number of seeds")
    pw.add_argument("--seed", type=int, default=0, help="first seed")
    pw.add_argument("--table", help="coefficient table CSV (else cached/built)")
    pw.add_argument("--mode", choices=("cached", "exact"), default="cached")
    pw.add_argument("--out", help="output directory (default $LUBEMON_OUT or .)")
    pw.set_defaults(fn=cmd_sweep)

    pr = sub.add_parser("report", help="render CSV outputs as SVG plots")
    pr.add_argument("inputs", nargs="+", help="estimate/measurement/sweep CSVs")
    pr.add_argument("--out", help="output directory (default $LUBEMON_OUT or .)")
    pr.set_defaults(fn=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except SystemExit2 as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (BearingError, FilterDivergenceError, FloatingPointError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
