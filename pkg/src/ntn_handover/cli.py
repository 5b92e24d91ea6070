"""Command-line entry point: ``run``, ``compare`` and ``analyze``.

Machine-readable results go to stdout (JSON lines for ``run``/``compare``,
``key=value`` lines for ``analyze``) and files under ``--out``; logging goes
to stderr.  Configuration precedence: defaults < config file < ``NTNHO_*``
environment variables < command-line flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path
from typing import Optional, Sequence

from . import geometry as geo
from .scenario import DEFAULT_SEEDS, ConfigError, ScenarioConfig, config_from_mapping, env_overrides, load_config

log = logging.getLogger("ntn_handover")

EXIT_OK = 0
EXIT_RUN_FAILED = 1
EXIT_USAGE = 2


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _int_list(text: str) -> list[int]:
    """``a,b,c`` or an inclusive range ``start:stop:step``."""
    text = text.strip()
    try:
        if ":" in text:
            parts = [int(p) for p in text.split(":")]
            if len(parts) not in (2, 3):
                raise ValueError
            start, stop = parts[0], parts[1]
            step = parts[2] if len(parts) == 3 else 1
            if step < 1 or stop < start:
                raise ValueError
            values = list(range(start, stop + 1, step))
        else:
            values = [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad list or range {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _non_negative(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not math.isfinite(v) or v < 0:
        raise argparse.ArgumentTypeError(f"must be a finite number >= 0, got {text}")
    return v


def _positive(text: str) -> float:
    v = _non_negative(text)
    if v == 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ntn-handover", description="LEO group handover simulator")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging on stderr")
    sub = p.add_subparsers(dest="command", required=True, metavar="{run,compare,analyze}")

    r = sub.add_parser("run", help="simulate one scenario")
    r.add_argument("--config", type=Path)
    r.add_argument("--protocol", choices=("ho", "gho"))
    r.add_argument("--ues", type=_positive_int)
    r.add_argument("--seed", type=int)
    r.add_argument("--out", type=Path, default=Path("out"))
    r.add_argument("--t-end", type=_positive, dest="t_end", help="simulated time limit in ms")
    r.add_argument("--event-log", action="store_true", help="also write the raw event log")
    r.add_argument("--format", choices=("csv", "json"), default="csv")

    c = sub.add_parser("compare", help="HO vs GHO over a grid of UE counts and seeds")
    c.add_argument("--config", type=Path)
    c.add_argument("--ues", type=_int_list, required=True, help="e.g. 10000,20000 or 10000:70000:10000")
    c.add_argument("--seeds", type=_int_list, default=list(DEFAULT_SEEDS))
    c.add_argument("--out", type=Path, default=Path("out"))
    c.add_argument("--t-end", type=_positive, dest="t_end")
    c.add_argument("--jobs", type=_positive_int, default=1, help="worker processes")
    c.add_argument("--format", choices=("csv", "json"), default="csv")

    a = sub.add_parser("analyze", help="cell-level handover load figures")
    a.add_argument("--radius", type=_positive, required=True, help="cell radius, km")
    a.add_argument("--speed", type=_positive, required=True, help="satellite speed, km/s")
    a.add_argument("--ues", type=_positive_int, required=True, help="UEs in the cell")
    a.add_argument("--dt", type=_non_negative, required=True, help="time window, s")
    return p


def resolve_config(path: Optional[Path], environ=None, **flags) -> ScenarioConfig:
    cfg = load_config(path) if path is not None else ScenarioConfig()
    env = env_overrides(environ)
    if env:
        cfg = config_from_mapping(env, base=cfg)
    changes = {k: v for k, v in flags.items() if v is not None}
    if changes:
        cfg = config_from_mapping(changes, base=cfg)
    return cfg


# ---------------------------------------------------------------------------


def load_figures(radius: float, speed: float, ues: int, dt: float) -> dict:
    moved = speed * dt
    a_circle = math.pi * radius**2
    if moved >= 2 * radius:
        a_int, n_ho = 0.0, float(ues)
    else:
        a_int = geo.intersect_area(radius, moved)
        n_ho = float(ues) * (a_circle - a_int) / a_circle
    return {
        "A_circle_km2": a_circle,
        "A_intersect_km2": a_int,
        "A_handoff_km2": a_circle - a_int,
        "density_per_km2": ues / a_circle,
        "N_handoff": n_ho,
    }


def cmd_analyze(args) -> int:
    figs = load_figures(args.radius, args.speed, args.ues, args.dt)
    for k, v in figs.items():
        print(f"{k}={v:.10g}")
    return EXIT_OK


def _run_one(cfg: ScenarioConfig, keep_log: bool = False):
    from .runner import run_scenario

    res = run_scenario(cfg, keep_log=keep_log)
    series = {
        (cfg.protocol, cfg.ue_count, cfg.seed, s.id): res.series(s.id) for s in res.sim.sats
    }
    return res.report, series, res.ledger.log


def _report_line(rep) -> str:
    return json.dumps(asdict(rep), sort_keys=True)


def cmd_run(args) -> int:
    cfg = resolve_config(
        args.config,
        protocol=args.protocol,
        ue_count=args.ues,
        seed=args.seed,
        t_end_ms=args.t_end,
    )
    from .metrics import export, write_event_log

    report, series, events = _run_one(cfg, keep_log=args.event_log)
    written = export([report], args.out, args.format, series)
    if events is not None:
        ev_dir = args.out / "events"
        ev_dir.mkdir(parents=True, exist_ok=True)
        p = ev_dir / f"{cfg.protocol}-{cfg.ue_count}-{cfg.seed}.csv"
        write_event_log(events, p)
        written["events"] = p
    for role, path in written.items():
        log.debug("wrote %s: %s", role, path)
    print(_report_line(report))
    return EXIT_OK


def _grid_job(cfg: ScenarioConfig):
    try:
        return _run_one(cfg)[:2], None
    except Exception as e:  # keep the grid going; reported by the parent
        return None, f"{type(e).__name__}: {e}"


def cmd_compare(args) -> int:
    base = resolve_config(args.config, t_end_ms=args.t_end)
    grid = [
        base.replace(protocol=p, ue_count=n, seed=s)
        for n in sorted(set(args.ues))
        for p in ("ho", "gho")
        for s in sorted(set(args.seeds))
    ]
    log.info("running %d simulations with %d worker(s)", len(grid), args.jobs)
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_grid_job, grid))
    else:
        results = [_grid_job(cfg) for cfg in grid]

    reports, series, failures = [], {}, 0
    for cfg, (ok, err) in zip(grid, results):
        if err is not None:
            failures += 1
            log.error("run %s n=%d seed=%d failed: %s", cfg.protocol, cfg.ue_count, cfg.seed, err)
            continue
        rep, ser = ok
        reports.append(rep)
        series.update(ser)
    from .metrics import export

    # deterministic merge order
    reports.sort(key=lambda r: (r.protocol, r.ue_count, r.seed))
    export(reports, args.out, args.format, series)
    for rep in reports:
        print(_report_line(rep))
    return EXIT_RUN_FAILED if failures else EXIT_OK


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "analyze": cmd_analyze}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2) if args.verbose else logging.INFO
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"ntn-handover: config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"ntn-handover: {e}", file=sys.stderr)
        return EXIT_RUN_FAILED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
