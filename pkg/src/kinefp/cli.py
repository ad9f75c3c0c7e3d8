"""Command line entry point: run, verify and sweep.

Exit codes: 0 success, 2 configuration error, 3 fixed-point divergence,
4 verification failure (a failed check or bound ledger).

Artifact layout of ``run``::

    report.json          run report, bound ledgers, resolved config and its hash
    fields.bin           full snapshot arrays (see write_container)
    csv/<field>_<n>.csv  marginal, flux and taf snapshots: t, index columns, coordinates, value
    plots/*.png          optional heatmaps of the marginal and the TAF over (t, x)
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import struct
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import RunConfig, load_config
from .core import ConfigError, PhaseGrid, gaussian_bump, gaussian_phase_density, integrate_phase

log = logging.getLogger("kinefp")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_VERIFY = 0, 2, 3, 4
MAGIC = b"KINEFP01"


# --- binary container ---------------------------------------------------------------------

def write_container(path, arrays: dict, meta: dict) -> None:
    """MAGIC, uint64 little-endian header length, JSON header, raw little-endian float64 arrays."""
    entries, offset = [], 0
    blobs = []
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr, dtype="<f8")
        entries.append({"name": name, "dtype": "<f8", "shape": list(a.shape), "offset": offset,
                        "nbytes": a.nbytes})
        blobs.append(a.tobytes())
        offset += a.nbytes
    header = json.dumps({**meta, "arrays": entries}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for b in blobs:
            fh.write(b)


def read_container(path) -> tuple[dict, dict]:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path}: not a kinefp container")
        (n,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(n))
        body = fh.read()
    arrays = {}
    for e in header["arrays"]:
        buf = body[e["offset"]:e["offset"] + e["nbytes"]]
        arrays[e["name"]] = np.frombuffer(buf, dtype=e["dtype"]).reshape(e["shape"])
    return header, arrays


# --- building a run from a config ---------------------------------------------------------

def initial_fields(cfg: RunConfig, grid: PhaseGrid) -> tuple[np.ndarray, np.ndarray]:
    ini = cfg.initial
    if ini.mass > 0:
        p0 = gaussian_phase_density(grid, ini.x_center, ini.v_center, ini.x_width, ini.v_width, ini.mass)
    else:
        p0 = np.zeros(grid.shape)
    c0 = gaussian_bump(grid, ini.c_center, ini.c_width, ini.c_amplitude) + ini.background
    return p0, c0


def snapshot_indices(nt: int, count: int) -> list[int]:
    step = max(1, nt // count)
    idx = list(range(0, nt + 1, step))
    if idx[-1] != nt:
        idx.append(nt)
    return idx


def resolve_threads(flag: Optional[int]) -> int:
    if flag is not None:
        return max(1, flag)
    env = os.environ.get("KINEFP_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"KINEFP_THREADS must be an integer (got {env!r})") from None
    return 1


@dataclass
class RunOutcome:
    exit_code: int
    out_dir: Path
    summary: dict = field(default_factory=dict)
    final_p: Optional[np.ndarray] = None


def _write_csv(path: Path, t: float, values: np.ndarray, grid: PhaseGrid, cfg_hash: str) -> None:
    N = grid.dim
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={cfg_hash}\n")
        w = csv.writer(fh)
        w.writerow(["t"] + [f"i{d + 1}" for d in range(N)] + [f"x{d + 1}" for d in range(N)] + ["value"])
        for idx in np.ndindex(values.shape):
            w.writerow([repr(float(t))] + list(idx) + [repr(float(grid.x[i])) for i in idx]
                       + [repr(float(values[idx]))])


def _plots(out: Path, grid: PhaseGrid, times: np.ndarray, marg: np.ndarray, c: np.ndarray) -> list[str]:
    if grid.dim != 1:
        return []
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out.mkdir(parents=True, exist_ok=True)
    names = []
    for name, arr in (("marginal", marg), ("taf", c)):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        im = ax.imshow(arr.T, origin="lower", aspect="auto",
                       extent=[times[0], times[-1], grid.x[0], grid.x[-1]])
        ax.set_xlabel("t")
        ax.set_ylabel("x")
        ax.set_title(name)
        fig.colorbar(im, ax=ax)
        fig.tight_layout()
        fig.savefig(out / f"{name}.png", dpi=100)
        plt.close(fig)
        names.append(f"{name}.png")
    return names


def _ledgers(result, cfg: RunConfig, grid: PhaseGrid, p0, c0, horizon) -> list:
    from .bounds import apriori_suite, moment_envelope_ledger, weighted_sup_gronwall

    params, rho = cfg.params, cfg.rho_spec
    out = list(apriori_suite(result.state, params, grid, rho.sup))
    if np.any(p0):
        beta = cfg.scheme.beta if cfg.scheme.beta is not None else grid.dim + 2
        try:
            out.append(weighted_sup_gronwall(result.state, params, grid, beta, rho.sup, c0))
        except ValueError as exc:
            log.warning("weighted sup ledger skipped: %s", exc)
        if horizon is not None:
            out.append(moment_envelope_ledger(result, horizon, grid, cfg.scheme.beta2))
    return out


def horizon_estimate(cfg: RunConfig, grid: PhaseGrid, p0, c0) -> float:
    """Moment horizon of the cutoff-free model for this data (inf for zero data)."""
    from .bounds import MomentData, moment_horizon

    if not np.any(p0):
        return math.inf
    raw = cfg.params.replace(flux_mode="raw")
    try:
        data = MomentData.from_data(p0, c0, raw, grid, cfg.scheme.beta2, cfg.rho_spec.sup)
        return moment_horizon(raw, data, cfg.scheme.beta2).tau
    except ValueError:
        return math.nan


def cmd_run(cfg: RunConfig, out_dir, snapshots: Optional[int] = None) -> RunOutcome:
    from .picard import DivergenceError, run_scheme, run_scheme_raw_flux

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = PhaseGrid(cfg.grid, cfg.params.dim)
    p0, c0 = initial_fields(cfg, grid)
    cfg_hash = cfg.hash
    head = {"config_hash": cfg_hash, "config": cfg.canonical()}
    kw = dict(max_iter=cfg.scheme.max_iter, tol=cfg.scheme.tol, variant=cfg.scheme.variant, rho=cfg.rho_spec)
    horizon = None
    try:
        if cfg.params.flux_mode == "raw" and np.any(p0):
            result, horizon = run_scheme_raw_flux(cfg.params, grid, p0, c0, beta2=cfg.scheme.beta2,
                                                  background=cfg.initial.background, **kw)
            nt_run = result.p.shape[0] - 1
            if nt_run != grid.nt:     # truncated at the moment horizon
                grid = PhaseGrid(cfg.grid.replace(t_final=nt_run * grid.dt, nt=nt_run), grid.dim)
        else:
            result = run_scheme(cfg.params, grid, p0, c0, beta=cfg.scheme.beta,
                                background=cfg.initial.background, **kw)
    except DivergenceError as exc:
        (out / "report.json").write_text(json.dumps(
            {**head, "status": "diverged", "message": str(exc), "diffs": exc.diffs}, indent=2))
        return RunOutcome(EXIT_DIVERGED, out, {"status": "diverged"})

    ledgers = _ledgers(result, cfg, grid, p0, c0, horizon)
    state = result.state
    times = grid.times
    snaps = snapshot_indices(grid.nt, snapshots or cfg.snapshots)

    csv_dir = out / "csv"
    csv_dir.mkdir(exist_ok=True)
    fields_out = {"marginal": state.marginal, "flux": state.j, "taf": state.c}
    for n in snaps:
        for name, series in fields_out.items():
            _write_csv(csv_dir / f"{name}_{n:05d}.csv", times[n], series[n], grid, cfg_hash)

    meta = {**head, "grid": {"dim": grid.dim, "x": grid.x.tolist(), "v": grid.v.tolist(),
                             "times": times[snaps].tolist(), "snapshot_indices": snaps},
            "layout": "p: (snapshot, x..., v...); c, flux, marginal: (snapshot, x...)"}
    write_container(out / "fields.bin",
                    {"p": state.p[snaps], "c": state.c[snaps], "flux": state.j[snaps],
                     "marginal": state.marginal[snaps]}, meta)

    plots = _plots(out / "plots", grid, times, state.marginal, state.c) if cfg.plots else []
    ok = all(l.passed for l in ledgers)
    summary = {
        "status": "converged" if result.report.converged else "not_converged",
        "final_mass": result.report.mass[-1],
        "initial_mass": result.report.mass[0],
        "p_sup": float(np.max(state.p)),
        "tau_beta": horizon.tau if horizon is not None else horizon_estimate(cfg, grid, p0, c0),
        "iterations": result.report.iterations,
        "ledgers_passed": ok,
    }
    report = {**head, **summary, "report": result.report.to_dict(),
              "ledgers": [l.to_dict() for l in ledgers], "plots": plots}
    (out / "report.json").write_text(json.dumps(report, indent=2, default=_json_default))
    code = EXIT_OK if ok else EXIT_VERIFY
    return RunOutcome(code, out, summary, state.p[-1])


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(type(o).__name__)


def cmd_verify(suite: str) -> int:
    from .checks import run_suite

    rows = run_suite(suite)
    for r in rows:
        print(r.line())
    failed = sum(not r.passed for r in rows)
    print(f"{len(rows) - failed}/{len(rows)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_VERIFY


def parse_values(text: str) -> list[float]:
    parts = [s.strip() for s in text.split(",") if s.strip()]
    if not parts:
        raise ConfigError("sweep needs at least one value")
    out = []
    for s in parts:
        try:
            v = float(s)
        except ValueError:
            raise ConfigError(f"sweep value {s!r} is not numeric") from None
        if not math.isfinite(v):
            raise ConfigError(f"sweep value {s!r} is not finite")
        out.append(v)
    return out


def _sweep_one(args):
    cfg, sub, snapshots = args
    return cmd_run(cfg, sub, snapshots)


def cmd_sweep(cfg: RunConfig, param: str, values: Sequence[float], out_dir, snapshots: Optional[int] = None,
              parallel: bool = False, threads: int = 1) -> tuple[int, Path]:
    if not values:
        raise ConfigError("sweep needs at least one value")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfgs = [cfg.with_field(param, v) for v in values]
    jobs = [(c, out / f"{param}_{i:03d}", snapshots) for i, c in enumerate(cfgs)]
    if parallel and threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            outcomes = list(ex.map(_sweep_one, jobs))
    else:
        outcomes = [_sweep_one(j) for j in jobs]

    orders = [None] * len(values)
    if param == "nt":
        # successive L1 differences of the final density, then observed orders
        grid_like = [PhaseGrid(c.grid, c.params.dim) for c in cfgs]
        diffs = [None]
        for i in range(1, len(outcomes)):
            a, b = outcomes[i - 1].final_p, outcomes[i].final_p
            diffs.append(None if a is None or b is None
                         else float(np.sum(grid_like[i].weights * np.abs(a - b))))
        for i in range(2, len(outcomes)):
            d0, d1 = diffs[i - 1], diffs[i]
            refine = values[i - 1] / values[i - 2]
            if d0 and d1 and refine > 0 and refine != 1:
                orders[i] = math.log(d0 / d1) / math.log(refine)

    path = out / "sweep.csv"
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={cfg.hash} param={param}\n")
        w = csv.writer(fh)
        w.writerow([param, "exit_code", "status", "final_mass", "mass_growth", "p_sup", "tau_beta",
                    "iterations", "convergence_order"])
        for v, o, order in zip(values, outcomes, orders):
            v = int(v) if float(v).is_integer() and param in ("nx", "nv", "nt", "dim") else v
            s = o.summary
            m0 = s.get("initial_mass", 0.0)
            growth = s["final_mass"] / m0 if m0 else ""
            w.writerow([repr(v), o.exit_code, s.get("status", ""), s.get("final_mass", ""), growth,
                        s.get("p_sup", ""), s.get("tau_beta", ""), s.get("iterations", ""),
                        "" if order is None else repr(order)])
    worst = max(o.exit_code for o in outcomes)
    return worst, path


# --- argument parsing ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kinefp", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="YAML run configuration")
            p.add_argument("--out-dir", default="kinefp_out")
            p.add_argument("--snapshots", type=int, default=None, help="number of snapshot intervals")
            p.add_argument("--flux-mode", choices=("cutoff", "raw"), default=None)
        p.add_argument("--threads", type=int, default=None, help="worker count (default KINEFP_THREADS or 1)")

    run = sub.add_parser("run", help="run the coupled scheme and write an artifact directory")
    common(run)
    ver = sub.add_parser("verify", help="run verification suites")
    ver.add_argument("suite", nargs="?", default="all")
    common(ver, config=False)
    sw = sub.add_parser("sweep", help="repeat run over values of one parameter")
    common(sw)
    sw.add_argument("--param", required=True)
    sw.add_argument("--values", required=True, help="comma-separated numbers")
    sw.add_argument("--parallel", action="store_true")
    return ap


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.flux_mode is not None:
        cfg = cfg.replace(params=cfg.params.replace(flux_mode=args.flux_mode))
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        threads = resolve_threads(args.threads)
        if args.command == "verify":
            from .checks import SUITES
            if args.suite not in SUITES + ("all",):
                print(f"error: unknown suite {args.suite!r}; choose from {', '.join(SUITES + ('all',))}",
                      file=sys.stderr)
                return EXIT_CONFIG
            return cmd_verify(args.suite)
        cfg = _load(args)
        if args.snapshots is not None and args.snapshots < 1:
            raise ConfigError("--snapshots must be >= 1")
        if args.command == "run":
            outcome = cmd_run(cfg, args.out_dir, args.snapshots)
            print(json.dumps({"out_dir": str(outcome.out_dir), "exit_code": outcome.exit_code,
                              **outcome.summary}, default=_json_default))
            return outcome.exit_code
        values = parse_values(args.values)
        code, path = cmd_sweep(cfg, args.param, values, args.out_dir, args.snapshots, args.parallel, threads)
        print(path)
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
