"""Command line: ``labelsr generate | superresolve | reproduce``.

Settings come from an INI file (``--config``) whose sections mirror the
package modules; command-line flags override file values.  Exit codes:
0 success, 1 usage error, 2 I/O error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, io, pipeline
from .baselines import NotTrainableError, TrainingDiverged
from .cnn import CHECKPOINT_VERSION, CnnTrainingError
from .features import logmel
from .pipeline import BundleFeatures, ExperimentConfig
from .synthgen import SynthesisError, make_dataset

log = logging.getLogger("labelsr")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3
NUMERIC_ERRORS = (FloatingPointError, np.linalg.LinAlgError, NotTrainableError,
                  TrainingDiverged, CnnTrainingError)
QUICK_DURATIONS = (("fine", 20.0), ("weak", 100.0), ("test", 100.0))
TABLE_SNR = -19.8
SPLITS = ("fine", "weak", "test")

# (section, key) -> (target, field, parser); target is "config", "noise" or "event"
_INI_KEYS = {
    ("synthgen", "noise_profile"): ("noise", "profile", str),
    ("synthgen", "envelope_rate_hz"): ("noise", "envelope_rate_hz", float),
    ("synthgen", "highband_cutoff_hz"): ("noise", "highband_cutoff_hz", float),
    ("synthgen", "highband_fraction"): ("noise", "highband_fraction", float),
    ("synthgen", "fundamental_hz"): ("event", "fundamental_hz", float),
    ("synthgen", "n_harmonics"): ("event", "n_harmonics", int),
    ("synthgen", "vibrato_depth_hz"): ("event", "vibrato_depth_hz", float),
    ("synthgen", "vibrato_rate_hz"): ("event", "vibrato_rate_hz", float),
    ("synthgen", "sample_rate"): ("config", "sample_rate", int),
    ("features", "n_select"): ("config", "n_select", int),
    ("kde", "bandwidth_scale"): ("config", "kde_bandwidth_scale", float),
    ("baselines", "svm_c"): ("config", "svm_c", float),
    ("baselines", "rf_trees"): ("config", "rf_trees", int),
    ("baselines", "mlp_hidden"): ("config", "mlp_hidden", int),
    ("baselines", "mlp_epochs"): ("config", "mlp_epochs", int),
    ("baselines", "mlp_lr"): ("config", "mlp_lr", float),
    ("postprocess", "median"): ("config", "median", "bool"),
    ("postprocess", "rejection"): ("config", "rejection", "bool"),
    ("postprocess", "median_window_ms"): ("config", "median_window_ms", float),
    ("postprocess", "reject_low"): ("config", "reject_low", float),
    ("postprocess", "reject_high"): ("config", "reject_high", float),
    ("cnn", "epochs"): ("config", "cnn_epochs", int),
    ("cnn", "lr"): ("config", "cnn_lr", float),
    ("cnn", "batch_size"): ("config", "cnn_batch_size", int),
    ("cnn", "dtype"): ("config", "cnn_dtype", str),
    ("pipeline", "snr_grid_db"): ("config", "snr_grid_db", "floats"),
    ("pipeline", "iterations"): ("config", "iterations", int),
    ("pipeline", "master_seed"): ("config", "master_seed", int),
    ("pipeline", "classifiers"): ("config", "classifiers", "names"),
    ("pipeline", "run_outer"): ("config", "run_outer", "bool"),
    ("pipeline", "outer_weak_negatives"): ("config", "outer_weak_negatives", "bool"),
    ("pipeline", "jobs"): ("config", "jobs", int),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def load_config(path=None, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """ExperimentConfig from an INI file layered over ``base`` (default: library defaults)."""
    cfg = base or ExperimentConfig()
    if path is None:
        return cfg
    ini = configparser.ConfigParser()
    with open(path) as fh:  # OSError propagates as an I/O failure
        ini.read_file(fh)
    fields, noise, event = {}, {}, {}
    targets = {"config": fields, "noise": noise, "event": event}
    for section in ini.sections():
        for key in ini[section]:
            spec = _INI_KEYS.get((section, key))
            if spec is None:
                raise UsageError(f"{path}: unknown setting [{section}] {key}")
            target, name, kind = spec
            try:
                if kind == "bool":
                    value = ini[section].getboolean(key)
                elif kind == "floats":
                    value = _floats(ini[section][key])
                elif kind == "names":
                    value = tuple(v.strip() for v in ini[section][key].split(",") if v.strip())
                else:
                    value = kind(ini[section][key])
            except ValueError as exc:
                raise UsageError(f"{path}: bad value for [{section}] {key}: {exc}") from None
            targets[target][name] = value
    try:
        return dataclasses.replace(cfg, noise=dataclasses.replace(cfg.noise, **noise),
                                   event=dataclasses.replace(cfg.event, **event), **fields)
    except (ValueError, SynthesisError) as exc:
        raise UsageError(f"{path}: {exc}") from None


def _common(p):
    p.add_argument("--seed", type=int, help="master seed (default from config, else 0)")
    p.add_argument("--config", type=Path, help="INI file with [synthgen], [features], [kde], "
                   "[baselines], [postprocess], [cnn] and [pipeline] sections")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--jobs", type=int, help="concurrent iterations")
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser():
    parser = _Parser(prog="labelsr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version",
                        version=f"labelsr {__version__} (checkpoint CNN1 v{CHECKPOINT_VERSION}, features LMSF v1)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic dataset (WAV + label CSVs)")
    _common(g)
    g.add_argument("--snr", type=float, default=TABLE_SNR, help="event SNR in dB")
    g.add_argument("--quick", action="store_true", help="short splits (20/100/100 s)")

    s = sub.add_parser("superresolve", help="pseudo-fine labels for the weak class-1 frames")
    _common(s)
    s.add_argument("--data", type=Path, required=True, help="directory written by 'generate'")
    s.add_argument("--classifier", default="KDE", help=f"one of {', '.join(pipeline.INNER_KINDS)}")
    s.add_argument("--no-median", action="store_true")
    s.add_argument("--no-reject", action="store_true")

    r = sub.add_parser("reproduce", help="run the SNR sweep and write metrics + summary CSVs")
    _common(r)
    r.add_argument("--snr", type=float, action="append", help="SNR in dB (repeatable); default: config grid")
    r.add_argument("--iterations", type=int)
    r.add_argument("--classifiers", help="comma-separated inner classifiers")
    r.add_argument("--inner-only", action="store_true", help="skip the CNN stage")
    r.add_argument("--quick", action="store_true", help="short splits and few epochs, for smoke tests")
    return parser


def _resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    over = {}
    if args.seed is not None:
        over["master_seed"] = args.seed
    if args.jobs is not None:
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        over["jobs"] = args.jobs
    if getattr(args, "snr", None) is not None and args.command == "reproduce":
        over["snr_grid_db"] = tuple(args.snr)
    if getattr(args, "iterations", None) is not None:
        over["iterations"] = args.iterations
    if getattr(args, "classifiers", None):
        over["classifiers"] = tuple(c.strip() for c in args.classifiers.split(","))
    if getattr(args, "inner_only", False):
        over["run_outer"] = False
    if getattr(args, "quick", False):
        over.update(durations=QUICK_DURATIONS, cnn_epochs=2, rf_trees=10, mlp_epochs=5)
        if args.command == "reproduce" and args.iterations is None:
            over["iterations"] = 1
    try:
        return dataclasses.replace(cfg, **over)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_generate(args, cfg: ExperimentConfig):
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    seed = pipeline.iteration_seeds(cfg.master_seed, 0)["dataset"]
    bundle = make_dataset(cfg.event, cfg.noise, args.snr, seed, cfg.sample_rate,
                          dict(cfg.durations) if cfg.durations else None)
    files = {}
    for name in SPLITS:
        split = getattr(bundle, name)
        io.write_wav(out / f"{name}.wav", split.clip)
        files[f"{name}.wav"] = out / f"{name}.wav"
        if split.labels is not None:
            io.write_labels(out / f"{name}.labels.csv", split.labels)
            files[f"{name}.labels.csv"] = out / f"{name}.labels.csv"
        # hidden ground truth, for scoring only
        io.write_labels(out / f"{name}.truth.csv", split.truth)
        files[f"{name}.truth.csv"] = out / f"{name}.truth.csv"
    manifest = {
        "version": __version__,
        "snr_db": args.snr,
        "master_seed": cfg.master_seed,
        "dataset_seed": seed,
        "sample_rate": cfg.sample_rate,
        "durations": {n: len(getattr(bundle, n).clip) / cfg.sample_rate for n in SPLITS},
        "noise": dataclasses.asdict(cfg.noise),
        "event": dataclasses.asdict(cfg.event),
        "files": {k: io.sha256(p) for k, p in files.items()},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    for name, digest in manifest["files"].items():
        print(f"{digest}  {name}")
    return EXIT_OK


def _load_dataset(data: Path):
    manifest = json.loads((data / "manifest.json").read_text())
    feats, tracks = {}, {}
    for name in ("fine", "weak"):
        clip = io.read_wav(data / f"{name}.wav")
        feats[name] = logmel(clip)
        res = 0.1 if name == "fine" else 5.0
        tracks[name] = io.read_labels(data / f"{name}.labels.csv", manifest["durations"][name], res)
    bf = BundleFeatures(
        feats["fine"], feats["weak"], None,
        tracks["fine"].to_frames()[: feats["fine"].n_frames],
        tracks["weak"].to_frames()[: feats["weak"].n_frames],
        None, None,
    )
    return bf, manifest


def cmd_superresolve(args, cfg: ExperimentConfig):
    if args.classifier not in pipeline.INNER_KINDS:
        raise UsageError(f"unknown classifier {args.classifier!r}; expected one of {pipeline.INNER_KINDS}")
    bf, manifest = _load_dataset(args.data)
    median, rejection = not args.no_median, not args.no_reject
    seeds = pipeline.iteration_seeds(cfg.master_seed, 0)
    inner = pipeline.train_inner(bf, args.classifier, cfg, seeds[args.classifier])
    series = pipeline.superresolve(inner, bf, median, rejection, cfg)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / f"pseudo_{args.classifier}.csv"
    io.write_pseudo_labels(path, series, {
        "classifier": args.classifier,
        "median": median,
        "rejection": rejection,
        "median_window_ms": cfg.median_window_ms,
        "reject_window": f"{cfg.reject_low} < p < {cfg.reject_high}",
        "seed": seeds[args.classifier],
        "n_select": cfg.n_select,
        "selected_bands": " ".join(map(str, inner.selected)),
        "snr_db": manifest.get("snr_db"),
    })
    print(f"{path}: {len(series)} frames, rejected fraction {series.rejected_fraction:.3f}")
    return EXIT_OK


def format_table(rows, snr_db):
    sel = [r for r in rows if r["stage"] == "outer" and abs(r["snr_db"] - snr_db) < 1e-9]
    sel.sort(key=lambda r: r["f1_mean"], reverse=True)
    lines = [f"SNR {snr_db:g} dB, outer stage (mean +- sd over iterations)",
             f"{'classifier':<12} {'F1':>15} {'precision':>15} {'recall':>15}"]
    for r in sel:
        cells = [f"{r[m + '_mean']:.3f} +- {r[m + '_std']:.3f}" for m in ("f1", "precision", "recall")]
        lines.append(f"{r['classifier']:<12} " + " ".join(f"{c:>15}" for c in cells))
    return "\n".join(lines)


def cmd_reproduce(args, cfg: ExperimentConfig):
    args.out.mkdir(parents=True, exist_ok=True)

    def progress(snr, it):
        log.info("done %g dB iteration %d", snr, it)

    result = pipeline.run_experiment(cfg, progress)
    io.write_metrics(args.out / "metrics.csv", result.records)
    rows = pipeline.summarize(result.records)
    io.write_summary(args.out / "summary.csv", rows)
    meta = {k: (v if isinstance(v, (int, float, str, bool, type(None))) else repr(v))
            for k, v in result.metadata.items()}
    (args.out / "metadata.json").write_text(json.dumps(meta, indent=2) + "\n")
    if result.failures:
        with open(args.out / "failures.txt", "w") as fh:
            for f in result.failures:
                fh.write(f"== {f.snr_db:g} dB iteration {f.iteration}\n{f.error}\n")
        log.warning("%d iteration(s) failed; see failures.txt", len(result.failures))
    if not result.records:
        return EXIT_NUMERIC
    if cfg.run_outer:
        grid = cfg.snr_grid_db
        snr = TABLE_SNR if any(abs(s - TABLE_SNR) < 1e-9 for s in grid) else grid[0]
        print(format_table(rows, snr))
    print(f"wrote {len(result.records)} records to {args.out / 'metrics.csv'}")
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    commands = {"generate": cmd_generate, "superresolve": cmd_superresolve, "reproduce": cmd_reproduce}
    try:
        cfg = _resolve_config(args)
        return commands[args.command](args, cfg)
    except UsageError as exc:
        print(f"labelsr: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"labelsr: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NUMERIC_ERRORS as exc:
        print(f"labelsr: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, SynthesisError) as exc:
        print(f"labelsr: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
