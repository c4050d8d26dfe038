"""Command-line front end: extract, synth, train, eval, classify, sweep.

Exit status: 0 success, 1 usage/configuration error, 2 data or model error.
Diagnostics go to stderr; data goes to files or stdout.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from vpnflow import evalkit, ingest, synth
from vpnflow.decision import Method, Thresholds, provenance_of
from vpnflow.descriptor import ModelFileError, PipelineDescriptor, load_pipeline, write_descriptor
from vpnflow.errors import (
    CaptureError,
    ConfigError,
    DatasetFormatError,
    LabelRangeError,
    NumericalError,
)
from vpnflow.neural.losses import LossKind
from vpnflow.neural.modelio import write_model
from vpnflow.neural.train import MARGIN_SLACK, TrainConfig, split_indices, train, write_loss_curve

log = logging.getLogger("vpnflow")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vpnflow", description=__doc__.splitlines()[0])
    parser.add_argument("-q", "--quiet", action="store_true", help="suppress progress lines")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("extract", help="pcap files -> labeled FLOW1 dataset")
    p.add_argument("captures", nargs="+", help="classic Ethernet pcap files")
    p.add_argument("--label", type=int, required=True, help="label 0..5 applied to every flow")
    p.add_argument("--out", required=True)
    p.add_argument("--csv", help="also write the debug CSV export here")

    p = sub.add_parser("synth", help="generate the synthetic six-class dataset")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)
    p.add_argument("--per-class", type=int, help="samples per class (default 2000)")
    p.add_argument("--config", help="key=value profile override file")

    p = sub.add_parser("train", help="train the two-network cascade")
    p.add_argument("--arch", choices=["mlp", "lstm"], default="mlp")
    p.add_argument("--method", choices=["score", "distance"], required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="net1 model path; siblings are derived from it")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--wd", type=float, default=0.05)
    p.add_argument("--test-frac", type=float, default=0.2)
    _threshold_flags(p)
    p.add_argument("--margin-eta", type=float,
                   help=f"margin of the distance loss (default: eta + {MARGIN_SLACK})")
    p.add_argument("--hidden", type=int, default=300, help="LSTM hidden size")
    p.add_argument("--step-width", type=int, default=28, help="LSTM bytes per time step")

    p = sub.add_parser("eval", help="evaluate a pipeline on a FLOW1 dataset")
    p.add_argument("--pipeline", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=["test", "all"], default="test",
                   help="'test' uses the held-out split recorded in the pipeline")
    p.add_argument("--out", help="report CSV (default stdout)")
    p.add_argument("--confusion", help="confusion matrix CSV")
    p.add_argument("--against", help="second pipeline (other method) for a paired comparison CSV")

    p = sub.add_parser("classify", help="print one decision per sample or flow")
    p.add_argument("--pipeline", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="FLOW1 dataset")
    src.add_argument("--pcap", help="classic Ethernet pcap")
    p.add_argument("--out", help="decision CSV (default stdout)")

    p = sub.add_parser("sweep", help="threshold sweep with cached network outputs")
    p.add_argument("--pipeline", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--axis", choices=["lambda", "eta"], required=True)
    p.add_argument("--values", type=_floats,
                   help="comma-separated thresholds (default: 9 points, lambda = k*mu/10 "
                        "or eta = delta + 0.2k for k = 1..9)")
    p.add_argument("--split", choices=["test", "all"], default="test")
    p.add_argument("--out", help="sweep CSV (default stdout)")
    return parser


def _threshold_flags(p):
    p.add_argument("--lambda", dest="lam", type=float, default=0.5)
    p.add_argument("--mu", type=float, default=0.9)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=0.1)


def _read_flow1(path):
    if not Path(path).is_file():
        raise DataError(f"{path}: data file not found")
    return ingest.read_dataset_arrays(path)


def _siblings(out: str) -> dict[str, Path]:
    out = Path(out)
    stem = out.with_suffix("") if out.suffix == ".nnmd" else out
    return {
        "net1": out,
        "net2": stem.with_name(stem.name + ".net2.nnmd"),
        "pipeline": stem.with_name(stem.name + ".pipeline.txt"),
        "loss1": stem.with_name(stem.name + ".loss.csv"),
        "loss2": stem.with_name(stem.name + ".net2.loss.csv"),
    }


def cmd_extract(args):
    if not 0 <= args.label < ingest.N_LABELS:
        raise UsageError(f"--label must be in 0..5, got {args.label}")
    samples = []
    for path in args.captures:
        if not Path(path).is_file():
            raise DataError(f"{path}: capture not found")
        capture = ingest.parse_capture(path)
        flows = ingest.assemble_flows(capture, label=args.label)
        log.info("%s: %d packets, %d skipped, %d flows", path, len(capture), capture.skipped, len(flows))
        samples += [ingest.LabeledSample(ingest.featurize(f), args.label) for f in flows]
    n = ingest.write_dataset(samples, args.out)
    if args.csv:
        ingest.export_csv(samples, args.csv)
    log.info("wrote %d samples to %s", n, args.out)


def cmd_synth(args):
    cfg = synth.SynthConfig(seed=args.seed)
    if args.config:
        if not Path(args.config).is_file():
            raise DataError(f"{args.config}: config file not found")
        cfg = synth.load_config(args.config, cfg)
    if args.per_class is not None:
        cfg = synth.SynthConfig((args.per_class,) * ingest.N_LABELS, cfg.seed, cfg.profiles)
    n = ingest.write_dataset(synth.generate(cfg), args.out)
    log.info("wrote %d samples to %s", n, args.out)


def cmd_train(args):
    method = Method(args.method)
    thresholds = Thresholds(args.lam, args.mu, args.eta, args.delta)
    thresholds.check(method)
    margin = args.margin_eta if args.margin_eta is not None else args.eta + MARGIN_SLACK
    kind = LossKind.MSE if method is Method.SCORE else LossKind.MARGIN
    cfg = TrainConfig(
        batch_size=args.batch, epochs=args.epochs, learning_rate=args.lr, weight_decay=args.wd,
        test_fraction=args.test_frac, seed=args.seed, loss_kind=kind, margin_eta=margin,
        lstm_hidden=args.hidden, step_width=args.step_width,
    )
    raw, labels = _read_flow1(args.data)
    x = raw / 255.0
    paths = _siblings(args.out)
    log.info("training net1 (%s, %s) on all labels", args.arch, method.value)
    r1 = train(x, labels, args.arch, cfg)
    log.info("training net2 (%s, %s) on labels 0..4", args.arch, method.value)
    r2 = train(x, labels, args.arch, cfg, class_filter=range(5))
    write_model(r1.params, paths["net1"])
    write_model(r2.params, paths["net2"])
    write_loss_curve(r1.curve, paths["loss1"])
    write_loss_curve(r2.curve, paths["loss2"])
    base = paths["pipeline"].parent
    desc = PipelineDescriptor(
        method=method,
        net1=str(paths["net1"].resolve().relative_to(base.resolve())),
        net2=str(paths["net2"].resolve().relative_to(base.resolve())),
        thresholds=thresholds, arch=args.arch, seed=args.seed, test_fraction=args.test_frac,
    )
    write_descriptor(desc, paths["pipeline"])
    for name, path in paths.items():
        log.info("wrote %s: %s", name, path)


def _eval_arrays(args, desc):
    raw, labels = _read_flow1(args.data)
    if args.split == "test":
        _, test = split_indices(len(raw), desc.test_fraction, desc.seed)
        raw, labels = raw[test], labels[test]
    return raw, labels


def cmd_eval(args):
    pipeline, desc = load_pipeline(args.pipeline)
    raw, labels = _eval_arrays(args, desc)
    cm, report = evalkit.evaluate((raw, labels), pipeline)
    evalkit.write_text(evalkit.report_csv(report), args.out)
    if args.confusion:
        evalkit.write_text(evalkit.confusion_csv(cm), args.confusion)
    log.info("%s accuracy %.4f on %d samples", report.method, report.accuracy, report.n_samples)
    if args.against:
        other, _ = load_pipeline(args.against)
        pair = {pipeline.method: pipeline, other.method: other}
        if set(pair) != {Method.SCORE, Method.DISTANCE}:
            raise UsageError("--against needs one score and one distance pipeline")
        cmp = evalkit.compare_methods((raw, labels), pair[Method.SCORE], pair[Method.DISTANCE])
        log.info("distance - score accuracy delta: %+.4f", cmp.accuracy_delta)
        sys.stdout.write(evalkit.comparison_csv(cmp))


def cmd_classify(args):
    pipeline, desc = load_pipeline(args.pipeline)
    names = desc.labels
    if args.data:
        raw, _ = _read_flow1(args.data)
        keys = [str(i) for i in range(len(raw))]
    else:
        if not Path(args.pcap).is_file():
            raise DataError(f"{args.pcap}: capture not found")
        flows = ingest.assemble_flows(ingest.parse_capture(args.pcap))
        raw = np.stack([ingest.featurize(f).raw for f in flows]) if flows else np.zeros((0, 784), np.uint8)
        keys = [
            f"{k.protocol.name} {k.endpoint_a[0]}:{k.endpoint_a[1]} {k.endpoint_b[0]}:{k.endpoint_b[1]}"
            for k in (f.key for f in flows)
        ]
    lines = ["flow,decision,provenance"]
    if len(raw):
        outcomes, prov = pipeline.classify_batch(raw / 255.0)
        for key, o, p in zip(keys, outcomes, prov):
            lines.append(f"{key},{names[int(o)]},{provenance_of(p).value}")
    evalkit.write_text("\n".join(lines) + "\n", args.out)


def default_sweep_values(axis: str, t: Thresholds) -> list[float]:
    if axis == "lambda":
        return [round(t.mu * k / 10, 6) for k in range(1, 10)]
    return [round(t.delta + 0.2 * k, 6) for k in range(1, 10)]


def cmd_sweep(args):
    pipeline, desc = load_pipeline(args.pipeline)
    raw, labels = _eval_arrays(args, desc)
    values = args.values or default_sweep_values(args.axis, pipeline.thresholds)
    grid = evalkit.sweep((raw, labels), pipeline, args.axis, values)
    evalkit.write_text(evalkit.sweep_csv(grid), args.out)


COMMANDS = {
    "extract": cmd_extract, "synth": cmd_synth, "train": cmd_train,
    "eval": cmd_eval, "classify": cmd_classify, "sweep": cmd_sweep,
}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(message)s"))
    root = logging.getLogger("vpnflow")
    root.addHandler(handler)
    root.setLevel(logging.WARNING if args.quiet else logging.INFO)
    try:
        COMMANDS[args.command](args)
        return 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except ModelFileError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return 2
    except (DataError, DatasetFormatError, CaptureError, LabelRangeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    finally:
        root.removeHandler(handler)


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
