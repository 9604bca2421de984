"""Command-line entry point (``doha <command> ...``).

Every command accepts ``--config FILE.json`` (keys are flag names; explicit
flags win over file values), ``--seed`` and ``--manifest``. A JSON run
manifest with the resolved configuration, output paths and per-phase wall
times is written on success and on failure.

Exit codes: 0 on success, 2 for invalid parameters, 1 for data or numeric
errors.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DohaError, ParameterError
from .harmonizer import (
    GradientBatch,
    HarmonizerConfig,
    NormQueue,
    harmonize_step,
    read_gradients,
    read_queue,
    write_queue,
)
from .signal import SynthSpec, bandpass, read_signal, synth_ppg, write_signal
from .ssp import autocorr_seq, build_ssp, invert_hr, phase_invariance_report, write_seq_csv, write_ssp_csv
from .toy import (
    EVAL_SEED_OFFSET,
    METRIC_FIELDS,
    MODES,
    REFERENCE_EVAL_CLIP_LEN,
    REFERENCE_EVAL_PER_DOMAIN,
    REFERENCE_OUTLIER_FRAC,
    REFERENCE_TRAIN_PER_DOMAIN,
    ToyModel,
    TrainConfig,
    evaluate_items,
    load_corpus,
    make_corpus,
    predict_hr,
    read_metrics_csv,
    reference_domains,
    save_corpus,
    train,
    write_metrics_csv,
)

SWEEP_FIELDS = ("delay", "mode", "max_dev")


class Run:
    """Collects the manifest of one command invocation."""

    def __init__(self, command: str, config: dict, manifest_path: Path | None):
        self.command = command
        self.config = config
        self.manifest_path = manifest_path
        self.outputs: list = []
        self.timings: dict = {}
        self.extra: dict = {}
        self.started = datetime.now(timezone.utc).isoformat()

    @contextmanager
    def phase(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = time.perf_counter() - t0

    def output(self, path) -> Path:
        path = Path(path)
        self.outputs.append(str(path))
        return path

    def write_manifest(self, status: str, error: str | None = None) -> None:
        if self.manifest_path is None:
            return
        doc = {
            "command": self.command,
            "config": self.config,
            "seed": self.config.get("seed"),
            "version": __version__,
            "outputs": self.outputs,
            "timings": self.timings,
            "status": status,
            "error": error,
            "started": self.started,
            "finished": datetime.now(timezone.utc).isoformat(),
        }
        doc.update(self.extra)
        self.manifest_path.parent.mkdir(parents=True, exist_ok=True)
        self.manifest_path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")


# ---------------------------------------------------------------------------
# helpers


def _floats(text) -> tuple:
    if text is None or text == "":
        return ()
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    return tuple(float(v) for v in str(text).split(","))


def _delays(text) -> list:
    """``"1-25"`` or ``"1,5,9"`` (or a JSON list) to a list of ints."""
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    out = []
    for part in str(text).split(","):
        if "-" in part.strip()[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part.strip():
            out.append(int(part))
    if not out:
        raise ParameterError("no delays given")
    return out


def _fmt(v: float) -> str:
    return repr(float(v))


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _json_dump(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f")


def render_svg(series: dict, xlabel: str, ylabel: str, title: str = "") -> str:
    """Minimal line chart: ``series`` maps label -> (xs, ys)."""
    W, H, L, R, T, B = 640, 400, 70, 170, 40, 50
    pts = [(x, y) for xs, ys in series.values() for x, y in zip(xs, ys) if math.isfinite(y)]
    if not pts:
        raise ParameterError("nothing to plot: every value is undefined")
    x0, x1 = min(p[0] for p in pts), max(p[0] for p in pts)
    y0, y1 = min(p[1] for p in pts), max(p[1] for p in pts)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1
    pw, ph = W - L - R, H - T - B

    def sx(x):
        return L + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return T + ph - (y - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W / 2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
           f'<line x1="{L}" y1="{T + ph}" x2="{L + pw}" y2="{T + ph}" stroke="black"/>',
           f'<line x1="{L}" y1="{T}" x2="{L}" y2="{T + ph}" stroke="black"/>']
    for k in range(5):
        xv = x0 + k * (x1 - x0) / 4
        yv = y0 + k * (y1 - y0) / 4
        out.append(f'<text x="{sx(xv):.1f}" y="{T + ph + 16}" text-anchor="middle">{xv:.4g}</text>')
        out.append(f'<text x="{L - 6}" y="{sy(yv) + 4:.1f}" text-anchor="end">{yv:.4g}</text>')
    out.append(f'<text x="{L + pw / 2:.1f}" y="{H - 10}" text-anchor="middle">{xlabel}</text>')
    out.append(f'<text x="16" y="{T + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {T + ph / 2:.1f})">{ylabel}</text>')
    for n, (label, (xs, ys)) in enumerate(series.items()):
        color = PALETTE[n % len(PALETTE)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys) if math.isfinite(y))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{coords}">'
                   f'<title>{label}</title></polyline>')
        ly = T + 14 + 18 * n
        out.append(f'<line x1="{L + pw + 12}" y1="{ly - 4}" x2="{L + pw + 32}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{L + pw + 38}" y="{ly}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args, run: Run) -> int:
    spec = SynthSpec(args.hr, args.fs, args.frames, _floats(args.harmonics), args.noise,
                     args.delay, args.trend, args.seed)
    with run.phase("synth"):
        sig = synth_ppg(spec)
    with run.phase("write"):
        write_signal(sig, run.output(args.out))
    print(f"wrote {len(sig)} samples to {args.out}")
    return 0


def cmd_ssp(args, run: Run) -> int:
    with run.phase("read"):
        sig = read_signal(args.input, args.fs)
    with run.phase("ssp"):
        if not args.raw:
            sig = bandpass(sig)
        ssp = build_ssp(sig, args.lwin)
        seq = autocorr_seq(ssp)
        hr = invert_hr(ssp)
    with run.phase("write"):
        if args.out_map:
            write_ssp_csv(ssp, run.output(args.out_map))
        if args.out_seq:
            write_seq_csv(seq, run.output(args.out_seq))
        if args.out_hr:
            _json_dump(run.output(args.out_hr), {"hr_bpm": hr, "L_win": args.lwin, "map_size": ssp.size})
    print(f"map {ssp.size}x{ssp.size}  HR {hr:.2f} bpm")
    return 0


def cmd_harmonize(args, run: Run) -> int:
    with run.phase("read"):
        batch = read_gradients(args.grads)
        if args.queue:
            queue = read_queue(args.queue, args.queue_len, args.warmup)
        else:
            queue = NormQueue(args.queue_len, args.warmup)
    cfg = HarmonizerConfig(args.T, args.queue_len, args.warmup, args.seed, args.exclude_sifted_targets)
    with run.phase("harmonize"):
        res = harmonize_step(batch, queue, cfg, step=args.step)
    with run.phase("write"):
        out = run.output(args.out)
        out.write_text(",".join(_fmt(v) for v in res.update) + "\n")
        queue_out = args.out_queue or str(Path(args.out).with_suffix("")) + ".queue.csv"
        write_queue(queue, run.output(queue_out))
        report = {
            "update": res.update.tolist(),
            "threshold": res.threshold,
            "raw_norms": res.raw_norms.tolist(),
            "kept": res.kept.tolist(),
            "zeroed_ids": res.zeroed_ids(batch),
            "projections": [[p.i, p.j, p.dot_before, p.dot_after] for p in res.projections],
            "sifted_deflections": len(res.sifted_deflections()),
        }
        if args.report:
            _json_dump(run.output(args.report), report)
    print("update " + " ".join(f"{v:.6g}" for v in res.update))
    if report["zeroed_ids"]:
        print("zeroed " + " ".join(str(i) for i in report["zeroed_ids"]))
    return 0


def cmd_corpus(args, run: Run) -> int:
    eval_split = args.split == "eval"
    per = args.per_domain or (REFERENCE_EVAL_PER_DOMAIN if eval_split else REFERENCE_TRAIN_PER_DOMAIN)
    clip_len = args.clip_len or (REFERENCE_EVAL_CLIP_LEN if eval_split else 75)
    seed = args.seed + (EVAL_SEED_OFFSET if eval_split else 0)
    with run.phase("generate"):
        items = make_corpus(reference_domains(args.outlier_frac), per, seed, clip_len, L_win=args.lwin)
    out = Path(args.out)
    if out.exists() and any(out.iterdir()):
        raise ParameterError(f"output directory {out} is not empty")
    with run.phase("write"):
        save_corpus(items, run.output(out))
    print(f"wrote {len(items)} items ({per} per domain, {clip_len} frames) to {out}")
    return 0


def _train_config(args, mode: str) -> TrainConfig:
    hcfg = HarmonizerConfig(args.T, args.queue_len, args.warmup, args.seed, args.exclude_sifted_targets)
    return TrainConfig(batch_size=args.batch, clip_len=args.clip_len, epochs=args.epochs,
                       lr_max=args.lr_max, lr_min=args.lr_min, L_win=args.lwin, harmonizer=hcfg,
                       mode=mode, seed=args.seed)


def cmd_train(args, run: Run) -> int:
    modes = list(MODES) if args.mode == "all" else [args.mode]
    with run.phase("load"):
        corpus = load_corpus(args.corpus_dir)
        holdout = []
        if args.holdout:
            names = {it.domain for it in corpus}
            if args.holdout not in names:
                raise ParameterError(f"holdout domain {args.holdout!r} not in corpus {sorted(names)}")
            corpus = [it for it in corpus if it.domain != args.holdout]
            if args.eval_dir:
                holdout = load_corpus(args.eval_dir, [args.holdout])
        elif args.eval_dir:
            holdout = load_corpus(args.eval_dir)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    epoch_times = {}
    for mode in modes:
        cfg = _train_config(args, mode)
        with run.phase(f"train:{mode}"):
            res = train(cfg, corpus, holdout)
        epoch_times[mode] = [m.wall_time for m in res.metrics]
        run.extra["epoch_times"] = epoch_times
        write_metrics_csv(res.metrics, run.output(out_dir / f"metrics-{mode}.csv"))
        run.output(out_dir / f"model-{mode}.json").write_text(res.model.to_json() + "\n")
        last = res.metrics[-1]
        print(f"{mode:10s} loss {res.init_loss:.4f} -> {last.train_loss:.4f}  "
              f"holdout MAE {last.holdout_mae:.3f}")
    return 0


def cmd_eval(args, run: Run) -> int:
    with run.phase("load"):
        model = ToyModel.from_json(Path(args.model).read_text())
        items = load_corpus(args.corpus_dir, [args.domain] if args.domain else None)
    with run.phase("evaluate"):
        preds = [predict_hr(model, it.clip) for it in items]
        metrics = evaluate_items(model, items)
    metrics = {k: (None if math.isnan(v) else v) for k, v in metrics.items()}
    metrics["n"] = len(items)
    with run.phase("write"):
        if args.out:
            _json_dump(run.output(args.out), metrics)
        if args.out_preds:
            _write_rows(run.output(args.out_preds), ("item_id", "domain", "true_hr", "pred_hr"),
                        [(it.item_id, it.domain, _fmt(it.true_hr), _fmt(p)) for it, p in zip(items, preds)])
    r = "undefined" if metrics["r"] is None else f"{metrics['r']:.3f}"
    print(f"n {len(items)}  MAE {metrics['mae']:.3f}  RMSE {metrics['rmse']:.3f}  r {r}")
    return 0


def _read_table(path: Path):
    with open(path, newline="") as fh:
        header = next(csv.reader(fh), None)
    if header == list(METRIC_FIELDS):
        return "metrics", read_metrics_csv(path)
    if header == list(SWEEP_FIELDS):
        with open(path, newline="") as fh:
            return "sweep", list(csv.DictReader(fh))
    raise ParameterError(f"{path}: not a metrics or delay-sweep CSV")


def cmd_report(args, run: Run) -> int:
    if not args.inputs:
        raise ParameterError("report needs at least one input file")
    if not (args.out_svg or args.out_csv):
        raise ParameterError("report needs --out-svg and/or --out-csv")
    series: dict = {}
    kinds = set()
    rows = []
    with run.phase("read"):
        for p in map(Path, args.inputs):
            kind, table = _read_table(p)
            kinds.add(kind)
            if kind == "metrics":
                xs = [m.epoch for m in table]
                ys = [float(getattr(m, args.metric)) for m in table]
                label = p.stem
                series[label] = (xs, ys)
                rows += [(label, x, _fmt(y)) for x, y in zip(xs, ys)]
            else:
                for mode in dict.fromkeys(r["mode"] for r in table):
                    sub = [r for r in table if r["mode"] == mode]
                    label = f"{p.stem}:{mode}"
                    xs = [int(r["delay"]) for r in sub]
                    ys = [float(r["max_dev"]) for r in sub]
                    series[label] = (xs, ys)
                    rows += [(label, x, _fmt(y)) for x, y in zip(xs, ys)]
    if len(kinds) > 1:
        raise ParameterError("cannot mix metrics and delay-sweep files in one report")
    kind = kinds.pop()
    xname, yname = ("epoch", args.metric) if kind == "metrics" else ("delay", "max_dev")
    with run.phase("write"):
        if args.out_csv:
            _write_rows(run.output(args.out_csv), ("series", xname, yname), rows)
        if args.out_svg:
            title = "held-out metric per epoch" if kind == "metrics" else "interior map deviation per delay"
            run.output(args.out_svg).write_text(render_svg(series, xname, yname, title))
    print(f"{len(series)} series from {len(args.inputs)} file(s)")
    return 0


def cmd_delay_sweep(args, run: Run) -> int:
    spec = SynthSpec(args.hr, args.fs, args.frames, _floats(args.harmonics), args.noise, seed=args.seed)
    spec.validate()
    delays = _delays(args.delays)
    modes = ["truncation", "circular"] if args.mode == "both" else [args.mode]
    rows = []
    with run.phase("sweep"):
        for mode in modes:
            dev = phase_invariance_report(spec, delays, args.lwin, mode=mode, filtered=not args.raw)
            rows += [(d, mode, _fmt(v)) for d, v in zip(delays, dev)]
    with run.phase("write"):
        _write_rows(run.output(args.out), SWEEP_FIELDS, rows)
    worst = {m: max(float(r[2]) for r in rows if r[1] == m) for m in modes}
    print("max deviation " + "  ".join(f"{m} {v:.3g}" for m, v in worst.items()))
    return 0


# ---------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of flag values; explicit flags take precedence")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--manifest", help="manifest path (default derived from the main output)")


def _harmonizer_flags(p):
    p.add_argument("--T", type=float, default=5.0, help="top-T%% norm quantile for sifting")
    p.add_argument("--queue-len", type=int, default=150)
    p.add_argument("--warmup", type=int, default=20)
    p.add_argument("--exclude-sifted-targets", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="doha", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesise a pulse signal")
    _common(p)
    p.add_argument("--hr", type=float, required=True)
    p.add_argument("--fs", type=float, default=30.0)
    p.add_argument("--frames", type=int, default=300)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--delay", type=int, default=0)
    p.add_argument("--trend", type=float, default=0.0)
    p.add_argument("--harmonics", default="", help="comma-separated harmonic amplitudes")
    p.add_argument("--out", required=True, help=".json or .csv")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ssp", help="build the self-similarity map and invert it to HR")
    _common(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--fs", type=float, default=None, help="sample rate for CSV input")
    p.add_argument("--lwin", type=int, default=17)
    p.add_argument("--raw", action="store_true", help="skip the cardiac band-pass")
    p.add_argument("--out-map")
    p.add_argument("--out-seq")
    p.add_argument("--out-hr")
    p.set_defaults(func=cmd_ssp)

    p = sub.add_parser("harmonize", help="sift and project one batch of instance gradients")
    _common(p)
    p.add_argument("--grads", required=True, help="DOHAGRAD binary or CSV (one row per instance)")
    p.add_argument("--queue", help="norm history, one value per line, oldest first")
    _harmonizer_flags(p)
    p.add_argument("--step", type=int, default=0)
    p.add_argument("--out", required=True, help="update vector CSV")
    p.add_argument("--out-queue")
    p.add_argument("--report")
    p.set_defaults(func=cmd_harmonize)

    p = sub.add_parser("corpus", help="write the reference multi-domain corpus")
    _common(p)
    p.add_argument("--split", choices=("train", "eval"), default="train")
    p.add_argument("--per-domain", type=int, default=None)
    p.add_argument("--clip-len", type=int, default=None)
    p.add_argument("--lwin", type=int, default=17)
    p.add_argument("--outlier-frac", type=float, default=REFERENCE_OUTLIER_FRAC)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_corpus)

    p = sub.add_parser("train", help="train the toy model")
    _common(p)
    p.add_argument("--corpus-dir", required=True)
    p.add_argument("--eval-dir")
    p.add_argument("--holdout", help="domain excluded from training and used for evaluation")
    p.add_argument("--mode", choices=MODES + ("all",), default="full-doha")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("--clip-len", type=int, default=75)
    p.add_argument("--lr-max", type=float, default=5e-4)
    p.add_argument("--lr-min", type=float, default=1e-6)
    p.add_argument("--lwin", type=int, default=17)
    _harmonizer_flags(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="held-out HR metrics of a trained model")
    _common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--corpus-dir", required=True)
    p.add_argument("--domain")
    p.add_argument("--out")
    p.add_argument("--out-preds")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="plot metrics or delay-sweep files")
    _common(p)
    p.add_argument("inputs", nargs="*")
    p.add_argument("--metric", choices=METRIC_FIELDS[2:], default="holdout_mae")
    p.add_argument("--out-svg")
    p.add_argument("--out-csv")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("delay-sweep", help="map deviation under phase delays")
    _common(p)
    p.add_argument("--hr", type=float, default=72.0)
    p.add_argument("--fs", type=float, default=30.0)
    p.add_argument("--frames", type=int, default=300)
    p.add_argument("--harmonics", default="0.4,0.15")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--delays", default="1-25", help='range "1-25" or list "1,5,9"')
    p.add_argument("--mode", choices=("truncation", "circular", "both"), default="both")
    p.add_argument("--lwin", type=int, default=17)
    p.add_argument("--raw", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_delay_sweep)
    return parser


def _manifest_path(args) -> Path | None:
    if getattr(args, "manifest", None):
        return Path(args.manifest)
    if getattr(args, "out_dir", None):
        return Path(args.out_dir) / "manifest.json"
    for key in ("out", "out_map", "out_csv", "out_svg", "out_hr", "out_seq", "out_preds"):
        v = getattr(args, key, None)
        if v:
            return Path(str(v) + ".manifest.json")
    return None


def _parse(argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    parser = build_parser()
    if known.config:
        try:
            cfg = json.loads(Path(known.config).read_text())
        except (OSError, ValueError) as exc:
            parser.error(f"cannot read config {known.config}: {exc}")
        if not isinstance(cfg, dict):
            parser.error("config file must hold a JSON object")
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        choices = parser._subparsers._group_actions[0].choices
        command = next((a for a in argv if a in choices), None)
        if command is None:
            parser.error("no command given")
        subparser = choices[command]
        valid = {a.dest for a in subparser._actions}
        unknown = sorted(set(cfg) - valid)
        if unknown:
            parser.error(f"unknown config keys for {command}: {', '.join(unknown)}")
        # required flags satisfied by the file must not be demanded on the command line
        for a in subparser._actions:
            if a.dest in cfg:
                a.required = False
        subparser.set_defaults(**cfg)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    args = _parse(sys.argv[1:] if argv is None else list(argv))
    config = {k: v for k, v in vars(args).items() if k not in ("func", "manifest", "config")}
    run = Run(args.command, config, _manifest_path(args))
    try:
        code = args.func(args, run)
    except ParameterError as exc:
        run.write_manifest("error", str(exc))
        print(f"doha {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (DohaError, OSError, ValueError) as exc:
        run.write_manifest("error", str(exc))
        print(f"doha {args.command}: error: {exc}", file=sys.stderr)
        return 1
    run.write_manifest("ok")
    return code


if __name__ == "__main__":
    sys.exit(main())
