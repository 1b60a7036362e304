"""Command-line entry point: ``sasimg <command> [--config F] [--set k=v] --in X --out DIR``.

Every command writes its products, a merged ``config.cfg`` snapshot, an
append-only ``run.log`` and a ``<command>.manifest.json`` into the output
directory.

Exit codes: 0 success, 1 processing failure, 2 usage error, 3 invalid
input or configuration. Failures print one JSON object on stderr.
"""

import argparse
import csv
import json
import os
import sys
import time
import traceback

import numpy as np

from . import __version__
from ._validation import ValidationError
from .beamform import (BackprojectionOptions, cull_blocks, cull_blocks_bistatic,
                       reconstruct_with_report)
from .config import dumps, load_config, loads, parse_override, resolve_workers
from .geometry import grid_from_config
from .io import (DatasetFormatError, RunLog, RunManifest, file_digest, read_artifact,
                 read_dataset, write_artifacts, write_dataset)
from .motion import apply_motion, solve_motion
from .perfmodel import fit_power_law, predict_runtime, run_benchmark, write_report
from .preprocess import preprocess_dataset, pulse_compress
from .render import DynamicRangeCompressor, export_raster
from .scenarios import simulate_from_config
from .volume import mip, reconstruct_volume

EXIT_OK, EXIT_FAILURE, EXIT_USAGE, EXIT_INVALID = 0, 1, 2, 3

COMMANDS = {
    "simulate": "simulate a survey from the sim section",
    "preprocess": "pulse compression, whitening and TVG",
    "motion": "estimate sway/heave and write corrected navigation",
    "reconstruct": "2-D backprojection to a complex image",
    "reconstruct3d": "layered sub-bottom volume with slice/MIP rasters",
    "render": "dynamic range compression to an 8-bit raster",
    "bench": "time reconstructions across worker counts and fit a power law",
    "pipeline": "preprocess, motion, reconstruct and render in one run",
}


class Run:
    """Output directory, log and bookkeeping for one invocation."""

    def __init__(self, command, config, out_dir):
        self.command = command
        self.config = config
        self.out = out_dir
        os.makedirs(out_dir, exist_ok=True)
        self.log = RunLog(os.path.join(out_dir, "run.log"))
        self.inputs = {}
        self.outputs = []
        self.timings = {}

    def path(self, name):
        return os.path.join(self.out, name)

    def add_input(self, path):
        self.inputs[path] = file_digest(path)

    def add_output(self, name):
        if name not in self.outputs:
            self.outputs.append(name)

    def timed(self, stage, fn, *args, **kwargs):
        t = time.perf_counter()
        result = fn(*args, **kwargs)
        seconds = time.perf_counter() - t
        self.timings[stage] = round(self.timings.get(stage, 0.0) + seconds * 1e3, 3)
        self.log.stage(stage, seconds)
        return result

    def finish(self):
        with open(self.path("config.cfg"), "w", encoding="utf-8") as fh:
            fh.write(dumps(self.config))
        self.add_output("config.cfg")
        outputs = {name: file_digest(self.path(name)) for name in sorted(self.outputs)}
        outputs["run.log"] = None
        manifest = RunManifest(self.command, self.config.digest(), __version__, dict(self.inputs),
                               outputs, {"sim.seed": self.config.sim.seed}, dict(self.timings))
        manifest.write(self.path(f"{self.command}.manifest.json"))
        return manifest


def _load_input(run, path):
    if not path:
        raise ValidationError("--in", "an input dataset is required")
    if not os.path.isfile(path):
        raise ValidationError("--in", f"input not found: {path}")
    run.add_input(path)
    return run.timed("read", read_dataset, path)


def _write_dataset(run, dataset, name):
    run.timed("write", write_dataset, dataset, run.path(name))
    run.add_output(name)


def _write_csv(run, name, header, rows):
    with open(run.path(name), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    run.add_output(name)


def _write_raster(run, raster, stem):
    name = f"{stem}.{run.config.drc.format}"
    export_raster(raster, run.path(name))
    run.add_output(name)


def cmd_simulate(run, source):
    dataset = run.timed("simulate", simulate_from_config, run.config,
                        resolve_workers(run.config))
    _write_dataset(run, dataset, "dataset.sasd")
    return "dataset.sasd"


def cmd_preprocess(run, source):
    dataset = _load_input(run, source)
    dataset, products = run.timed("preprocess", preprocess_dataset, dataset, run.config)
    _write_dataset(run, dataset, "preprocessed.sasd")
    if run.config.processing.debug_products:
        for key, values in products.items():
            values = np.asarray(values).reshape(-1)
            _write_csv(run, f"debug_{key}.csv", ["bin", key],
                       [(k, repr(float(v))) for k, v in enumerate(values)])
    return "preprocessed.sasd"


def cmd_motion(run, source):
    dataset = _load_input(run, source)
    if not run.config.processing.motion_correction:
        run.log.event(stage="motion", status="skipped", reason="motion_correction_disabled")
        _write_dataset(run, dataset, "corrected.sasd")
        return "corrected.sasd"
    solution = run.timed("motion", solve_motion, dataset, run.config, run.log)
    run.log.event(stage="motion", converged=solution.converged, iterations=solution.iterations,
                  measurements=solution.n_measurements, loss=solution.loss["total"])
    _write_dataset(run, apply_motion(dataset, solution), "corrected.sasd")
    rows = [(k, repr(float(vy)), repr(float(vz)), *(repr(float(c)) for c in pos))
            for k, (vy, vz, pos) in enumerate(zip(solution.v_y, solution.v_z,
                                                  solution.positions))]
    _write_csv(run, "velocities.csv", ["ping", "v_y", "v_z", "x", "y", "z"], rows)
    if run.config.processing.debug_products:
        _write_csv(run, "debug_delays.csv",
                   ["pair", "channel_a", "channel_b", "t_ref", "t_coarse", "t_fine", "rho"],
                   [(m.pair, m.channel_a, m.channel_b, repr(m.t_ref), repr(m.t_coarse),
                     repr(m.t_fine), repr(m.rho)) for m in solution.measurements])
    return "corrected.sasd"


def _compressed(run, dataset):
    if run.config.processing.pulse_compression and not dataset.compressed:
        return run.timed("pulse_compress", pulse_compress, dataset, dataset.waveform)
    return dataset


def _debug_masks(run, dataset, grid, opts):
    pings = sorted(dataset.pings, key=lambda p: p.ping_index)
    picks = sorted({0, len(pings) // 2, len(pings) - 1})
    cull = cull_blocks_bistatic if opts.bistatic else cull_blocks
    for k in picks:
        mask = cull(pings[k], grid, opts.beam, opts.block_size, opts.elevation_test)
        raster = np.where(mask.keep, 255, 0).astype(np.uint8)
        name = f"debug_mask_ping{pings[k].ping_index}.pgm"
        export_raster(raster, run.path(name), "pgm")
        run.add_output(name)


def cmd_reconstruct(run, source):
    dataset = _compressed(run, _load_input(run, source))
    opts = BackprojectionOptions.from_config(run.config, dataset)
    pings = sorted(dataset.pings, key=lambda p: p.ping_index)
    grid = grid_from_config(run.config, pings[0].nav, pings[-1].nav, opts.beam)
    image, report = run.timed("backproject", reconstruct_with_report, dataset, grid, opts,
                              run.log)
    run.log.event(stage="backproject_summary", pings=len(pings), skipped=report.total_skipped,
                  arena_bytes=report.arena_bytes, arena_allocations=report.arena_allocations)
    files = write_artifacts(image, run.out, "image", log=run.log)["files"]
    for name, digest in files.items():
        if digest is not None:
            run.add_output(name)
    if run.config.processing.debug_products:
        _debug_masks(run, dataset, grid, opts)
    return run.out


def cmd_reconstruct3d(run, source):
    dataset = _compressed(run, _load_input(run, source))
    opts = BackprojectionOptions.from_config(run.config, dataset)
    pings = sorted(dataset.pings, key=lambda p: p.ping_index)
    grid = grid_from_config(run.config, pings[0].nav, pings[-1].nav, opts.beam)
    volume = run.timed("volume", reconstruct_volume, dataset, grid, config=run.config,
                       log=run.log)
    files = write_artifacts(volume, run.out, "volume", log=run.log)["files"]
    for name, digest in files.items():
        if digest is not None:
            run.add_output(name)
    drc = DynamicRangeCompressor.from_config(run.config)
    for axis in ("depth", "x", "y"):
        _write_raster(run, drc.fit_transform(mip(volume, axis)), f"mip_{axis}")
    if run.config.processing.debug_products:
        for k, layer in enumerate(volume.layers):
            _write_raster(run, drc.fit_transform(layer.data), f"slice_{k:02d}")
    return run.out


def _product_source(source):
    if not source:
        raise ValidationError("--in", "an image or volume directory is required")
    if os.path.isfile(source) and source.endswith(".meta"):
        return os.path.dirname(source) or ".", os.path.basename(source)[:-5]
    for name in ("image", "volume"):
        if os.path.isfile(os.path.join(source, f"{name}.meta")):
            return source, name
    raise ValidationError("--in", f"no image.meta or volume.meta in {source}")


def cmd_render(run, source):
    directory, name = _product_source(source)
    for suffix in (".bin", ".meta"):
        run.add_input(os.path.join(directory, name + suffix))
    product, _ = run.timed("read", read_artifact, directory, name)
    data = mip(product, "depth") if name == "volume" else product.data
    drc = DynamicRangeCompressor.from_config(run.config)
    raster = run.timed("drc", drc.fit_transform, data)
    p = drc.params_
    run.log.event(stage="drc", brightness=p.brightness, median=p.median,
                  q=p.q if p.q is not None else "none", scale=p.scale)
    _write_raster(run, raster, name)
    return run.out


def cmd_bench(run, source):
    c = run.config
    if source:
        dataset = _load_input(run, source)
    else:
        dataset = run.timed("simulate", simulate_from_config, c)
    dataset = _compressed(run, dataset)
    opts = BackprojectionOptions.from_config(c, dataset)
    pings = sorted(dataset.pings, key=lambda p: p.ping_index)
    grid = grid_from_config(c, pings[0].nav, pings[-1].nav, opts.beam)
    samples = run.timed("bench", run_benchmark, dataset, grid, c, c.bench.repetitions,
                        c.bench.worker_counts, c.bench.per_worker_gflops)
    fit = fit_power_law(samples) if len({s.capability for s in samples}) > 1 else None
    budget = c.bench.realtime_budget_s or None
    paths = write_report(samples, fit, run.out, budget)
    for path in paths.values():
        run.add_output(os.path.basename(path))
    for s in samples:
        run.log.event(stage="bench_sample", workers=s.workers, capability=s.capability,
                      runtime_s=s.runtime_s)
    if fit is not None:
        run.log.event(stage="bench_fit", coefficient=fit.coefficient, exponent=fit.exponent,
                      r2=fit.r2)
        if budget:
            x = max(s.capability for s in samples)
            y, ok = predict_runtime(fit, x, budget)
            run.log.event(stage="bench_predict", capability=x, runtime_s=y, realtime=ok)
    return run.out


def cmd_pipeline(run, source):
    """Chain the stages through their on-disk products, exactly as separate runs would."""
    current = cmd_preprocess(run, source)
    current = cmd_motion(run, run.path(current))
    cmd_reconstruct(run, run.path(current))
    cmd_render(run, run.out)
    return run.out


HANDLERS = {
    "simulate": cmd_simulate, "preprocess": cmd_preprocess, "motion": cmd_motion,
    "reconstruct": cmd_reconstruct, "reconstruct3d": cmd_reconstruct3d, "render": cmd_render,
    "bench": cmd_bench, "pipeline": cmd_pipeline,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _report("usage", message, key=None)
        raise SystemExit(EXIT_USAGE)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="configuration file (dotted key = value lines)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")
    common.add_argument("--in", dest="source", help="input dataset, or product directory for render")
    common.add_argument("--out", help="output directory (default: paths.output, else .)")
    parser = _Parser(prog="sasimg", description="Synthetic aperture sonar image formation.")
    parser.add_argument("--version", action="version", version=f"sasimg {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    for name, text in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def _report(kind, message, **fields):
    payload = {"error": kind, "message": str(message)}
    payload.update(fields)
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)


def _config(args):
    overrides = dict(parse_override(item) for item in args.set)
    if args.config:
        return load_config(args.config, overrides)
    return loads("", overrides)


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        config = _config(args)
        source = args.source or config.paths.dataset or None
        run = Run(args.command, config, args.out or config.paths.output or ".")
        run.log.event(stage="start", command=args.command, version=__version__,
                      config_hash=config.digest())
        HANDLERS[args.command](run, source)
        manifest = run.finish()
        run.log.event(stage="done", outputs=len(manifest.outputs))
    except (ValidationError, DatasetFormatError) as exc:
        _report("invalid", exc, key=getattr(exc, "key", None))
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001  every other failure is a processing error
        _report("processing", exc, type=type(exc).__name__,
                trace=traceback.format_exc(limit=3).splitlines()[-3:])
        return EXIT_FAILURE
    print(json.dumps({"status": "ok", "command": args.command, "out": run.out,
                      "outputs": sorted(manifest.outputs)}, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
