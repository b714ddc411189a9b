"""``capskin`` command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime error.
"""

from __future__ import annotations

import argparse
import asyncio
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from capskin.calib import DEFAULT_KNOTS, fit_force_calibration, read_cycles_csv, write_cycles_csv
from capskin.characterize import NOISE_SAMPLES, characterize, press_trace
from capskin.config import RunConfig, default_config, load_config
from capskin.daq.frame import FrameError, frame_with_prefix
from capskin.daq.scan import Scanner, TaxelChannel, run_virtual
from capskin.daq.stream import StreamServer
from capskin.errors import CalibrationError, ConfigError, DataError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4

log = logging.getLogger("capskin")


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else default_config()
    return cfg.with_seed(getattr(args, "seed", None))


def _out_dir(args, cfg: RunConfig) -> Path:
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_simulate(args) -> int:
    cfg = _config(args).with_rate(args.rate)
    if args.duration <= 0:
        raise ConfigError("must be positive", "--duration")
    scanner = Scanner(cfg.topology, cfg.model, cfg.channel, cfg.contacts, cfg.poses)
    frames = run_virtual(scanner, args.duration)
    out = _out_dir(args, cfg)
    log_path = out / "frames.bin"
    with log_path.open("wb") as fh:
        for frame in frames:
            fh.write(frame_with_prefix(frame))

    order = cfg.topology.ordered_indices()
    delta = (np.array([f.capacitance for f in frames]) - scanner.baselines()
             if frames else np.zeros((0, len(order))))
    taxels = [
        {"index": i, "min": float(delta[:, k].min()), "max": float(delta[:, k].max()),
         "mean": float(delta[:, k].mean())}
        for k, i in enumerate(order)
    ] if frames else []
    _write_json(out / "summary.json", {
        "frame_count": len(frames),
        "duration_s": args.duration,
        "sample_rate_hz": cfg.channel.sample_rate,
        "seed": cfg.seed,
        "taxel_count": len(order),
        "delta_c_pF": taxels,
    })
    print(f"wrote {len(frames)} frames to {log_path}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    if args.knots < 2:
        raise ConfigError("must be at least 2", "--knots")
    cycles = read_cycles_csv(args.csv)
    curve = fit_force_calibration(cycles, knots=args.knots)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    curve.save(out)
    print(f"{len(cycles)} cycles, {curve.capacitance.size} knots, "
          f"residual rms {curve.residual_rms:.4g} N, max {curve.residual_max:.4g} N -> {out}")
    return EXIT_OK


def cmd_cycles(args) -> int:
    cfg = _config(args)
    channel = TaxelChannel.create(cfg.model, cfg.channel, 0)
    if args.cycles < 1:
        raise ConfigError("must be at least 1", "--cycles")
    _, dc, force = press_trace(channel, n_cycles=args.cycles, peak=args.peak)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_cycles_csv(out, [(dc, force)], cfg.channel.sample_rate)
    print(f"wrote {args.cycles} cycles to {out}")
    return EXIT_OK


def cmd_characterize(args) -> int:
    cfg = _config(args)
    if args.noise_samples < 100:
        raise ConfigError("must be at least 100", "--noise-samples")
    report = characterize(cfg.model, cfg.channel, noise_samples=args.noise_samples)
    paths = report.write(_out_dir(args, cfg), long_csv=args.long_csv)
    print(f"relative error mean {100 * report.relative_error_mean:.3f}%, "
          f"noise reduction {100 * report.noise_reduction:.2f}%, "
          f"hysteresis {100 * report.hysteresis_fraction:.2f}%, "
          f"durability drop {report.durability_drop_pp:.4f} pp")
    for p in paths:
        print(f"wrote {p}")
    return EXIT_OK


def cmd_topology(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    _write_json(out / "topology.json", cfg.topology.to_dict())
    rows = cfg.topology.address_table()
    with (out / "addresses.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    print(f"{len(rows)} taxels in {len(cfg.topology.sections)} sections -> {out}")
    return EXIT_OK


def _parse_bind(bind: str) -> tuple[str, int]:
    host, sep, port = bind.rpartition(":")
    if not sep or not port.isdigit() or int(port) > 65535:
        raise ConfigError(f"expected host:port, got {bind!r}", "--bind")
    return host or "127.0.0.1", int(port)


async def _stream(server: StreamServer, duration: float | None) -> None:
    await server.start()
    host, port = server.address
    print(f"streaming on {host}:{port} at {server.rate_hz:g} Hz", flush=True)
    try:
        if duration is None:
            await asyncio.Event().wait()
        else:
            await asyncio.sleep(duration)
    finally:
        await server.stop()


def cmd_stream(args) -> int:
    cfg = _config(args).with_rate(args.rate)
    host, port = _parse_bind(args.bind)
    scanner = Scanner(cfg.topology, cfg.model, cfg.channel, cfg.contacts, cfg.poses)
    server = StreamServer(scanner.scan, cfg.channel.sample_rate, host, port)
    try:
        asyncio.run(_stream(server, args.duration))
    except KeyboardInterrupt:
        pass
    print(f"published {server.frames_published} frames")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="capskin", description="Capacitive skin simulation and calibration.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True, out=True):
        sp.add_argument("--config", help="TOML run configuration (defaults to the reference setup)")
        if seed:
            sp.add_argument("--seed", type=int, help="override the configured seed")
        if out:
            sp.add_argument("--out", help="output directory (defaults to output_dir from the config)")

    sp = sub.add_parser("simulate", help="run the scan loop in virtual time and log frames")
    common(sp)
    sp.add_argument("--duration", type=float, default=2.0, help="seconds of simulated time")
    sp.add_argument("--rate", type=float, help="override the sample rate in Hz")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("calibrate", help="fit a force calibration curve from a t,c,f CSV")
    sp.add_argument("csv")
    sp.add_argument("--out", default="calibration.json")
    sp.add_argument("--knots", type=int, default=DEFAULT_KNOTS)
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("cycles", help="export simulated press-release cycles as a t,c,f CSV")
    common(sp, out=False)
    sp.add_argument("--out", default="cycles.csv")
    sp.add_argument("--cycles", type=int, default=10)
    sp.add_argument("--peak", type=float, default=55.0, help="peak force in N")
    sp.set_defaults(func=cmd_cycles)

    sp = sub.add_parser("characterize", help="run the characterization battery and write a report")
    common(sp)
    sp.add_argument("--noise-samples", type=int, default=NOISE_SAMPLES)
    sp.add_argument("--long-csv", action="store_true", help="also write plot-ready long-format series")
    sp.set_defaults(func=cmd_characterize)

    sp = sub.add_parser("topology", help="export taxel positions and the address table")
    common(sp, seed=False)
    sp.set_defaults(func=cmd_topology)

    sp = sub.add_parser("stream", help="publish live frames over TCP")
    common(sp, out=False)
    sp.add_argument("--bind", default="127.0.0.1:7600", help="host:port to listen on")
    sp.add_argument("--rate", type=float, help="override the sample rate in Hz")
    sp.add_argument("--duration", type=float, help="stop after this many seconds")
    sp.set_defaults(func=cmd_stream)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FrameError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except CalibrationError as e:
        detail = f" {json.dumps(e.diagnostics, sort_keys=True)}" if e.diagnostics else ""
        print(f"calibration failed: {e}{detail}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # anything else is a bug or an environment failure
        log.debug("unhandled error", exc_info=True)
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
