"""Command-line front end: ``separate``, ``simulate`` and ``evaluate``."""
import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import io, metrics, simulate
from .model import Mode, PipelineConfig
from .optimizer import run
from .stft import StftParams, TimeSignal, analyze, synthesize


def _diagnostics_json(diag):
    keep = ("likelihood", "passes", "wall_ms", "config", "wpe_passes", "counts")
    return json.dumps({k: diag[k] for k in keep}, indent=1, sort_keys=True)


def cmd_separate(args, parser):
    try:
        signal = io.read_wav(args.input)
    except (OSError, io.WavFormatError) as exc:
        parser.error(f"cannot read {args.input}: {exc}")
    M = signal.n_channels
    if args.sources >= M:
        parser.error(f"--sources {args.sources} must be smaller than the channel count {M}")
    if args.sources < 1:
        parser.error("--sources must be at least 1")
    try:
        cfg = PipelineConfig(
            num_mics=M,
            num_sources=args.sources,
            prediction_delay=args.delay,
            wpe_iters=args.wpe_iters,
            ive_iters=args.ive_iters,
            mode=args.mode,
            reference_mic=args.ref_mic,
        )
    except ValueError as exc:
        parser.error(str(exc))
    params = StftParams()
    spec = analyze(signal, params)
    prior = None
    if cfg.mode is Mode.NN_GUIDED:
        try:
            prior = io.read_prior(args.prior, spec.n_freq, spec.n_frames, args.sources)
        except (OSError, io.PriorFormatError) as exc:
            parser.error(str(exc))

    result = run(spec, cfg, prior)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    est = synthesize(result.outputs)
    for j in range(args.sources):
        io.write_wav(out_dir / f"source{j}.wav", TimeSignal(est.samples[j], est.sample_rate))
    report = Path(args.seed_report) if args.seed_report else out_dir / "diagnostics.json"
    report.parent.mkdir(parents=True, exist_ok=True)
    report.write_text(_diagnostics_json(result.diagnostics) + "\n")
    if args.plot:
        from .plotting import likelihood_figure

        likelihood_figure(
            out_dir / "likelihood.png",
            result.diagnostics["likelihood"],
            result.diagnostics["wpe_passes"],
        )
    return 0


def cmd_simulate(args, parser):
    if args.sources >= args.mics or args.sources < 1:
        parser.error("need 1 <= --sources < --mics")
    if args.taps < 1:
        parser.error("--taps must be at least 1")
    sc = simulate.make_scenario(
        num_mics=args.mics,
        num_sources=args.sources,
        duration=args.duration,
        length=args.taps,
        decay_ms=args.decay_ms,
        snr_db=args.snr_db,
        seed=args.seed,
        sample_rate=args.rate,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    io.write_wav(out, sc.mixture)
    if args.refs_dir:
        refs = Path(args.refs_dir)
        refs.mkdir(parents=True, exist_ok=True)
        for j in range(args.sources):
            io.write_wav(refs / f"ref{j}.wav", TimeSignal(sc.early[j, args.ref_mic], args.rate))
    if args.prior_out:
        gamma = np.stack(
            [
                np.abs(analyze(TimeSignal(sc.early[j, args.ref_mic], args.rate)).data[:, :, 0]) ** 2
                for j in range(args.sources)
            ],
            axis=-1,
        )
        io.write_prior(args.prior_out, gamma)
    return 0


def cmd_evaluate(args, parser):
    names = [m.strip() for m in args.metrics.split(",") if m.strip()]
    unknown = [m for m in names if m not in metrics.METRICS]
    if unknown:
        parser.error(f"unknown metrics {unknown}; choose from {sorted(metrics.METRICS)}")
    if len(args.estimate) != len(args.reference):
        parser.error("give one --reference per --estimate")
    rows = []
    for est_path, ref_path in zip(args.estimate, args.reference):
        est, ref = io.read_wav(est_path), io.read_wav(ref_path)
        if est.n_channels != 1 or ref.n_channels != 1:
            parser.error("evaluate expects mono files")
        if est.sample_rate != ref.sample_rate:
            parser.error(f"sample rates differ: {est_path} vs {ref_path}")
        n = min(est.n_samples, ref.n_samples)
        row = {"estimate": est_path, "reference": ref_path}
        for m in names:
            row[m] = metrics.METRICS[m](est.samples[0, :n], ref.samples[0, :n], est.sample_rate)
        rows.append(row)

    fields = ["estimate", "reference"] + names
    writer = csv.DictWriter(sys.stdout, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    if args.report:
        from .plotting import metric_bars

        report = Path(args.report)
        report.mkdir(parents=True, exist_ok=True)
        with open(report / "metrics.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
        table = {m: [(Path(r["estimate"]).stem, r[m]) for r in rows] for m in names}
        metric_bars(report / "metrics.png", table)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="convbf",
        description="Joint dereverberation and separation with a factorized convolutional beamformer.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("separate", help="separate a multichannel WAV")
    p.add_argument("--input", required=True, help="multichannel WAV")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--sources", type=int, required=True, help="number of speech sources J")
    p.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.BLIND_COARSE_FINE.value)
    p.add_argument("--prior", help="CBFP prior spectra file (nn-guided mode)")
    p.add_argument("--delay", type=int, default=2, help="prediction delay in frames")
    p.add_argument("--wpe-iters", type=int, default=10)
    p.add_argument("--ive-iters", type=int, default=100)
    p.add_argument("--ref-mic", type=int, default=0)
    p.add_argument("--seed-report", help="diagnostics JSON path (default OUT_DIR/diagnostics.json)")
    p.add_argument("--plot", action="store_true", help="also write likelihood.png")
    p.set_defaults(func=cmd_separate)

    p = sub.add_parser("simulate", help="write a synthetic mixture")
    p.add_argument("--mics", type=int, default=4)
    p.add_argument("--sources", type=int, default=2)
    p.add_argument("--taps", type=int, default=1, help="mixing filter length in samples")
    p.add_argument("--decay-ms", type=float, default=300.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="mixture WAV")
    p.add_argument("--duration", type=float, default=5.0, help="seconds")
    p.add_argument("--snr-db", type=float, default=0.0)
    p.add_argument("--rate", type=int, default=16000)
    p.add_argument("--ref-mic", type=int, default=0)
    p.add_argument("--refs-dir", help="write early source images at --ref-mic here")
    p.add_argument("--prior-out", help="write oracle prior spectra (CBFP) here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="score estimates against references")
    p.add_argument("--estimate", nargs="+", required=True)
    p.add_argument("--reference", nargs="+", required=True)
    p.add_argument("--metrics", default="si_sdr,fwssnr,cd", help="comma separated")
    p.add_argument("--report", help="directory for metrics.csv and metrics.png")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    if args.command == "separate" and args.mode == Mode.NN_GUIDED.value and not args.prior:
        sub.error("--mode nn-guided requires --prior")
    return args.func(args, sub)


if __name__ == "__main__":
    sys.exit(main())
