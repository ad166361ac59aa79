"""Command-line entry point and sweep orchestration.

``simulate --config run.yaml --out results/`` or ``simulate --preset fig5a``.

Every experiment is broken into independent work items (one trajectory per
series, or one field point per series); items run on ``workers`` processes
and results are assembled in input order, so output bytes do not depend on
the worker count.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .config import ConfigError, ExperimentConfig, config_to_dict, load_config, sweep_points
from .output import Table, write_table
from .presets import PRESETS, preset_config
from .propagate import NumericalFailure, evolve_protocol
from .response import SIGN_CONVENTION, epr_probe, field_response
from .model import build_space

__all__ = ["EXIT_OK", "EXIT_CONFIG", "EXIT_NUMERICAL", "EXIT_IO", "run_experiment", "run_sweep", "run_preset", "main"]

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("trepr")


def _init_worker():
    threadpool_limits(1)


@contextmanager
def _mapper(workers: int):
    """``map``-like callable over ``workers`` processes (order-preserving)."""
    with threadpool_limits(1):
        if workers <= 1:
            yield map
        else:
            with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker) as pool:
                yield pool.map


def _population_task(args):
    params, protocol, units = args
    tr = evolve_protocol(params, protocol, units)
    cols = [tr.population(m) for m in ("gs", "es", "t")]
    if tr.correlation is not None:
        cols.append(tr.correlation)
    return tr.times, cols


def _field_task(args):
    return field_response(*args)


def _metadata(config: ExperimentConfig, schema: list) -> dict:
    echo = config_to_dict(config)
    # execution detail only; keeps output bytes independent of the worker count
    echo.pop("workers")
    meta = {
        "config": echo,
        "mk_to_rad_per_ns": config.units.mk_to_rad_per_ns,
        "sign_convention": SIGN_CONVENTION,
        "columns": schema,
    }
    for key, value in config.metadata:
        meta[key] = value
    if config.normalize and config.observable == "populations":
        meta["normalize"] = "ignored for population output"
    return meta


def _series_column(config):
    return [config.sweep.parameter] if config.sweep is not None else []


def _populations(config, points, map_fn) -> Table:
    tasks = [(params, config.protocol, config.units) for _, params, _ in points]
    results = list(map_fn(_population_task, tasks))
    columns = _series_column(config) + ["t_ns", "pop_gs", "pop_es", "pop_t"]
    if config.model.kind == "DRTS":
        columns.append("corr_s1s2")
    rows = []
    for (value, _, _), (times, cols) in zip(points, results):
        lead = [] if value is None else [value]
        for i, t in enumerate(times):
            rows.append(lead + [t] + [c[i] for c in cols])
    return Table("populations", columns, rows, _metadata(config, columns))


def _field_items(config, points, times=None):
    """One work item per (series, field); ``times=None`` means each series' observe_time."""
    tasks = []
    for _, params, spec in points:
        ts = (spec.observe_time,) if times is None else times
        tasks += [(params, f, spec, config.protocol, ts, config.units) for f in spec.field_grid]
    return tasks


def _spectrum(config, points, map_fn) -> Table:
    tasks = _field_items(config, points)
    results = iter(map_fn(_field_task, tasks))
    labels = epr_probe(build_space(config.model.kind)).labels
    names = [lab.replace(".", "_") for lab in labels]
    columns = _series_column(config) + ["field_mK", "chi_re", "chi_im"]
    for n in names:
        columns += [f"comp_{n}_re", f"comp_{n}_im"]
    rows = []
    for value, _, spec in points:
        series = [next(results)[0] for _ in spec.field_grid]
        chi = np.array([s.value for s in series])
        comps = np.array([[s.components[lab] for lab in labels] for s in series])
        if config.normalize:
            scale = np.abs(chi.imag).max()
            if scale > 0:
                chi, comps = chi / scale, comps / scale
        lead = [] if value is None else [value]
        for f, c, cs in zip(spec.field_grid, chi, comps):
            row = lead + [f, c.real, c.imag]
            for x in cs:
                row += [x.real, x.imag]
            rows.append(row)
    return Table("spectrum", columns, rows, _metadata(config, columns))


def _trepr(config, points, map_fn) -> Table:
    times = tuple(config.time_grid)
    tasks = _field_items(config, points, times)
    results = iter(map_fn(_field_task, tasks))
    columns = _series_column(config) + ["t_ns", "field_mK", "chi_re", "chi_im"]
    rows = []
    for value, _, spec in points:
        per_field = [next(results) for _ in spec.field_grid]
        surface = np.array([[col[i].value for col in per_field] for i in range(len(times))])
        if config.normalize:
            scale = np.abs(surface.imag).max()
            if scale > 0:
                surface = surface / scale
        lead = [] if value is None else [value]
        for i, t in enumerate(times):
            for j, f in enumerate(spec.field_grid):
                rows.append(lead + [t, f, surface[i, j].real, surface[i, j].imag])
    return Table("trepr", columns, rows, _metadata(config, columns))


_BUILDERS = {"populations": _populations, "spectrum": _spectrum, "trepr": _trepr}


def build_table(config: ExperimentConfig, workers: int | None = None) -> Table:
    """Run ``config`` and return its output table (nothing written)."""
    points = sweep_points(config)
    with _mapper(config.workers if workers is None else workers) as map_fn:
        return _BUILDERS[config.observable](config, points, map_fn)


def run_experiment(config: ExperimentConfig, out_dir=None, plot: bool = False) -> list[Path]:
    """Run ``config`` and write its table (and optionally a figure); returns written paths."""
    table = build_table(config)
    directory = Path(out_dir if out_dir is not None else config.output.directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = [write_table(table, directory, config.output.format)]
    if plot:
        from .plotting import plot_table

        paths.append(plot_table(table, directory / f"{table.name}.png"))
    return paths


def run_sweep(config: ExperimentConfig, out_dir=None, plot: bool = False) -> list[Path]:
    """Run a parameter sweep; outputs are byte-identical for any worker count."""
    if config.sweep is None:
        raise ConfigError("sweep", "run_sweep needs experiment 'sweep' with a sweep section")
    return run_experiment(config, out_dir, plot)


def run_preset(name: str, out_dir=None, fmt: str | None = None, workers: int | None = None,
               normalize: bool | None = None, plot: bool = False) -> list[Path]:
    config = preset_config(name)
    if fmt is not None:
        config = replace(config, output=replace(config.output, format=fmt))
    if workers is not None:
        config = replace(config, workers=workers)
    if normalize:
        config = replace(config, normalize=True)
    return run_experiment(config, out_dir, plot)


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="simulate", description="TR-EPR simulations of radical-triplet systems")
    src = ap.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="YAML experiment file")
    src.add_argument("--preset", choices=PRESETS, help="built-in figure preset")
    ap.add_argument("--out", help="output directory (overrides output.directory)")
    ap.add_argument("--format", choices=("csv", "json"), help="output format (overrides output.format)")
    ap.add_argument("--workers", type=int, help="worker processes (overrides workers)")
    ap.add_argument("--normalize", action="store_true", help="divide spectra by max |signal| per series")
    ap.add_argument("--plot", action="store_true", help="also render a PNG figure next to the data file")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.workers is not None and args.workers < 1:
            raise ConfigError("workers", f"must be a positive integer, got {args.workers}")
        config = preset_config(args.preset) if args.preset else load_config(args.config)
        if args.format:
            config = replace(config, output=replace(config.output, format=args.format))
        if args.workers is not None:
            config = replace(config, workers=args.workers)
        if args.normalize:
            config = replace(config, normalize=True)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        paths = run_experiment(config, args.out, plot=args.plot)
    except (NumericalFailure, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    for p in paths:
        print(os.fspath(p))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
