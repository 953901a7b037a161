"""Command-line entry point.

Exit codes: 0 success, 1 validation error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import fields, replace

from . import bow, evaluation, forest
from .config import RunConfig, TUNABLES, load_config_file, synthetic_config
from .errors import ConfigError, SymbioError
from .ingest import formats
from .ingest.synthetic import SyntheticConfig, generate_synthetic
from .pipeline import VbowSource, build_training_table, detections_to_csv, run_sequence
from .vocab import VocabularyDB

log = logging.getLogger("symbiolcd")

EXIT_OK, EXIT_VALIDATION, EXIT_IO = 0, 1, 2

FRAMES_FILE = "frames.jsonl"
TRUTH_FILE = "ground_truth.csv"
DESCRIPTOR_DIR = "descriptors"
GENERATOR_KEYS = {f.name for f in fields(SyntheticConfig)} - {"seed"}
# generator settings that also have a `gen` flag
GEN_FLAG_ALIASES = {
    "n_frames": "n_frames", "label_noise_rate": "label_noise",
    "position_noise_sigma": "position_sigma", "scale_drift": "scale_drift",
    "descriptor_flip_rate": "flip_rate", "loop_revisit_spec": "revisit",
}


class _Parser(argparse.ArgumentParser):
    """Argument errors are validation errors (exit 1), not argparse's default 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _unit_interval(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"{text} is not in [0, 1]")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"{text} is not a positive integer")
    return v


def _revisit(text: str) -> tuple[int, int, int]:
    try:
        a, b, c = (int(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("revisit must be START:ORIGIN:LENGTH") from None
    return a, b, c


# ---------------------------------------------------------------- option groups

def _add_common(p):
    d = RunConfig()
    p.add_argument("--config", help="JSON file of tunables; explicit flags take precedence")
    p.add_argument("--seed", type=int, default=d.seed, help="root seed for all randomness")
    p.add_argument("--threads", type=_positive_int, default=d.threads,
                   help="worker threads (never changes outputs)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def _add_inputs(p, truth_required=True):
    g = p.add_argument_group("inputs")
    g.add_argument("--data", help=f"directory holding {FRAMES_FILE}, {TRUTH_FILE} and {DESCRIPTOR_DIR}/")
    g.add_argument("--frames", help=f"frames JSONL (default DATA/{FRAMES_FILE})")
    g.add_argument("--truth", help=f"ground-truth CSV (default DATA/{TRUTH_FILE})"
                   + ("" if truth_required else "; optional"))
    g.add_argument("--descriptors", help=f"descriptor directory (default DATA/{DESCRIPTOR_DIR})")
    g.add_argument("--pair-scores", help="precomputed vBoW pair scores CSV; overrides descriptors")
    g.add_argument("--bow-tree", help="vocabulary tree file; built from descriptors when absent")
    d = RunConfig()
    g.add_argument("--bow-k", type=_positive_int, default=d.bow_k, help="vocabulary tree branching")
    g.add_argument("--bow-depth", type=_positive_int, default=d.bow_depth, help="vocabulary tree depth")


def _add_pipeline(p):
    d = RunConfig()
    g = p.add_argument_group("object filter")
    g.add_argument("--moving-labels", type=lambda s: tuple(x for x in s.split(",") if x),
                   default=d.moving_labels, help="comma-separated classes treated as moving")
    g.add_argument("--max-objects", type=int, default=d.max_objects, help="objects kept per frame")
    g.add_argument("--max-area-fraction", type=float, default=d.max_area_fraction,
                   help="drop boxes larger than this fraction of the image")
    g.add_argument("--min-confidence", type=float, default=d.min_confidence,
                   help="drop detections below this confidence")
    g = p.add_argument_group("matching")
    g.add_argument("--alpha", type=float, default=d.alpha, help="weight of the temporal penalty")
    g.add_argument("--beta-s", type=float, default=d.beta_s, help="temporal penalty decay")
    g.add_argument("--eps-pos", type=float, default=d.eps_pos, help="position tolerance for label matches")
    g.add_argument("--insert-period", type=_positive_int, default=d.insert_period,
                   help="vocabulary insertion period K (frames)")
    g.add_argument("--exclusion-window", type=_positive_int, default=d.exclusion_window,
                   help="minimum query/reference separation W (frames)")


def _add_forest(p):
    d = RunConfig()
    g = p.add_argument_group("forest")
    g.add_argument("--estimators", type=_positive_int, default=d.estimators, help="number of trees")
    g.add_argument("--max-features", default=d.max_features,
                   help="features tried per split: sqrt, all, or a count")
    g.add_argument("--max-depth", type=_positive_int, default=d.max_depth, help="depth cap (none = unlimited)")
    g.add_argument("--min-samples-split", type=int, default=d.min_samples_split,
                   help="smallest node that may be split")
    g.add_argument("--features", choices=sorted(evaluation.ARMS), default="both",
                   help="feature set to train on")


def _add_split(p, runs=False):
    d = RunConfig()
    p.add_argument("--split", type=float, default=d.split, help="held-out fraction")
    p.add_argument("--split-seed", type=int, default=d.split_seed, help="seed for splits and forests")
    if runs:
        p.add_argument("--runs", type=_positive_int, default=d.runs, help="repeated split+train+test runs")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="symbiolcd", description=__doc__.splitlines()[0] + " Loop-closure toolkit.",
                     formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    subs = {}

    p = subs["gen"] = sub.add_parser("gen", help="generate a synthetic dataset", formatter_class=fmt)
    _add_common(p)
    p.add_argument("--out", required=True, help="output directory")
    sc = SyntheticConfig()
    p.add_argument("--n-frames", type=_positive_int, default=sc.n_frames, help="sequence length")
    p.add_argument("--revisit", type=_revisit, action="append",
                   help="START:ORIGIN:LENGTH revisit segment, repeatable "
                        f"(default {' '.join(':'.join(map(str, r)) for r in sc.loop_revisit_spec)})")
    p.add_argument("--label-noise", type=_unit_interval, default=sc.label_noise_rate,
                   help="per-object label corruption rate")
    p.add_argument("--position-sigma", type=float, default=sc.position_noise_sigma,
                   help="centroid jitter (pixels)")
    p.add_argument("--scale-drift", type=float, default=sc.scale_drift, help="revisit zoom change")
    p.add_argument("--flip-rate", type=_unit_interval, default=sc.descriptor_flip_rate,
                   help="descriptor bit-flip rate")
    p.add_argument("--zero-noise", action="store_true", help="switch every noise source off")

    p = subs["bow-build"] = sub.add_parser("bow-build", help="build a vocabulary tree", formatter_class=fmt)
    _add_common(p)
    p.add_argument("--descriptors", required=True, help="descriptor directory")
    p.add_argument("--bow-k", type=_positive_int, default=RunConfig().bow_k, help="branching factor")
    p.add_argument("--bow-depth", type=_positive_int, default=RunConfig().bow_depth, help="depth")
    p.add_argument("--out", required=True, help="vocabulary tree file")

    p = subs["train"] = sub.add_parser("train", help="train a forest", formatter_class=fmt)
    _add_common(p)
    _add_inputs(p)
    _add_pipeline(p)
    _add_forest(p)
    p.add_argument("--model-out", required=True, help="model file")
    p.add_argument("--vocab-out", help="write the final semantic vocabulary here")

    p = subs["predict"] = sub.add_parser("predict", help="detect loop closures", formatter_class=fmt)
    _add_common(p)
    _add_inputs(p, truth_required=False)
    _add_pipeline(p)
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--threshold", type=float, default=RunConfig().threshold,
                   help="emit pairs whose vote fraction is strictly above this, in [0, 1]")
    p.add_argument("--out", help="detections CSV (default stdout)")
    p.add_argument("--vocab-in", help="warm-start the semantic vocabulary from this file")
    p.add_argument("--vocab-out", help="write the final semantic vocabulary here")

    p = subs["eval"] = sub.add_parser("eval", help="repeated split/train/test", formatter_class=fmt)
    _add_common(p)
    _add_inputs(p)
    _add_pipeline(p)
    _add_forest(p)
    _add_split(p, runs=True)
    p.add_argument("--out", help="per-run CSV")

    p = subs["ablate"] = sub.add_parser("ablate", help="feature-set ablation", formatter_class=fmt)
    _add_common(p)
    _add_inputs(p)
    _add_pipeline(p)
    _add_forest(p)
    _add_split(p)
    p.add_argument("--out", help="ablation CSV")

    p = subs["importance"] = sub.add_parser("importance", help="feature importance", formatter_class=fmt)
    _add_common(p)
    _add_inputs(p)
    _add_pipeline(p)
    _add_forest(p)
    p.add_argument("--model", help="read importances from this model instead of training")
    return parser, subs


def parse_args(argv=None) -> argparse.Namespace:
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        values = load_config_file(args.config)
        if args.command == "gen":
            values = {GEN_FLAG_ALIASES.get(k, k): v for k, v in values.items()}
        sub = subs[args.command]
        dests = {a.dest for a in sub._actions}
        unknown = set(values) - TUNABLES - GENERATOR_KEYS - dests
        if unknown:
            raise ConfigError(f"{args.config}: unknown settings {sorted(unknown)}")
        sub.set_defaults(**{k: v for k, v in values.items() if k in dests})
        args = parser.parse_args(argv)
        args.generator = {k: v for k, v in values.items() if k in GENERATOR_KEYS}
    return args


# ---------------------------------------------------------------- helpers

def run_config(args) -> RunConfig:
    names = {f.name for f in fields(RunConfig)}
    cfg = RunConfig(**{k: v for k, v in vars(args).items() if k in names and v is not None})
    cfg.moving_labels = tuple(cfg.moving_labels)
    cfg.validate()
    return cfg


def _path(explicit, data, default_name):
    if explicit:
        return explicit
    if data:
        return os.path.join(data, default_name)
    return None


def load_inputs(args, need_truth=True):
    frames_path = _path(args.frames, args.data, FRAMES_FILE)
    if frames_path is None:
        raise ConfigError("no frames given (use --data or --frames)")
    with open(frames_path, encoding="utf-8") as fh:
        frames = formats.parse_frames(fh)
    truth = None
    truth_path = _path(args.truth, args.data, TRUTH_FILE)
    if truth_path and (need_truth or os.path.exists(truth_path)):
        with open(truth_path, encoding="utf-8") as fh:
            truth = formats.parse_ground_truth(fh)
    elif need_truth:
        raise ConfigError("no ground truth given (use --data or --truth)")
    return frames, truth


def load_vbow(args, cfg: RunConfig) -> VbowSource:
    table = None
    if args.pair_scores:
        with open(args.pair_scores, encoding="utf-8") as fh:
            table = formats.parse_pair_scores(fh)
    desc_path = _path(args.descriptors, args.data, DESCRIPTOR_DIR)
    descriptors, tree = {}, None
    if desc_path and (args.descriptors or os.path.isdir(desc_path)):
        descriptors = formats.load_descriptor_dir(desc_path)
        if args.bow_tree:
            tree = bow.VocabTree.from_bytes(formats.read_bytes(args.bow_tree))
        elif descriptors:
            tree = bow.build_vocabulary([descriptors[f] for f in sorted(descriptors)],
                                        cfg.bow_k, cfg.bow_depth, seed=cfg.seed)
    if table is None and tree is None:
        log.warning("no pair scores or descriptors: every vBoW score is 0")
    return VbowSource(table, descriptors, tree)


def training_table(args, cfg: RunConfig, db=None):
    frames, truth = load_inputs(args)
    vbow = load_vbow(args, cfg)
    return build_training_table(frames, vbow, truth, cfg.pipeline(), db)


def _print_importance(model):
    for name, value in zip(model.feature_names, forest.feature_importance(model)):
        print(f"{name:<15} {value:.6f}")


def _write_or_print(path, data: bytes):
    if path:
        formats.write_bytes(path, data)
    else:
        sys.stdout.write(data.decode("utf-8"))


# ---------------------------------------------------------------- subcommands

def cmd_gen(args) -> int:
    overrides = dict(getattr(args, "generator", {}) or {})
    overrides.update(n_frames=args.n_frames, label_noise_rate=args.label_noise,
                     position_noise_sigma=args.position_sigma, scale_drift=args.scale_drift,
                     descriptor_flip_rate=args.flip_rate)
    if args.revisit:
        overrides["loop_revisit_spec"] = tuple(tuple(r) for r in args.revisit)
    cfg = synthetic_config(args.seed, overrides)
    if args.zero_noise:
        cfg = cfg.zero_noise()
    data = generate_synthetic(cfg)
    os.makedirs(args.out, exist_ok=True)
    formats.write_bytes(os.path.join(args.out, FRAMES_FILE), formats.serialize_frames(data.frames))
    formats.write_bytes(os.path.join(args.out, TRUTH_FILE), formats.serialize_ground_truth(data.truth))
    formats.save_descriptor_dir(os.path.join(args.out, DESCRIPTOR_DIR), data.descriptors)
    print(f"{len(data.frames)} frames, {len(data.truth)} labelled pairs "
          f"({data.n_positive} loops) -> {args.out}")
    return EXIT_OK


def cmd_bow_build(args) -> int:
    descriptors = formats.load_descriptor_dir(args.descriptors)
    tree = bow.build_vocabulary([descriptors[f] for f in sorted(descriptors)],
                                args.bow_k, args.bow_depth, seed=args.seed)
    formats.write_bytes(args.out, tree.to_bytes())
    print(f"{tree.n_nodes} nodes, {len(tree.leaves)} leaves -> {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = run_config(args)
    db = VocabularyDB(cfg.insert_period, cfg.exclusion_window) if args.vocab_out else None
    data = training_table(args, cfg, db).select(evaluation.ARMS[args.features])
    print(f"training rows: {len(data)} ({data.n_positive} loop, {len(data) - data.n_positive} non-loop)")
    model = forest.train(data, cfg.hyperparams(), n_jobs=cfg.threads)
    formats.write_bytes(args.model_out, forest.save(model))
    if db is not None:
        formats.write_bytes(args.vocab_out, db.dumps())
    _print_importance(model)
    return EXIT_OK


def cmd_predict(args) -> int:
    cfg = run_config(args)
    model = forest.load(formats.read_bytes(args.model))
    frames, truth = load_inputs(args, need_truth=False)
    vbow = load_vbow(args, cfg)
    if args.vocab_in:
        db = VocabularyDB.loads(formats.read_bytes(args.vocab_in))
    else:
        db = VocabularyDB(cfg.insert_period, cfg.exclusion_window)
    detections, report = run_sequence(frames, vbow, model, cfg.pipeline(), truth, db)
    _write_or_print(args.out, detections_to_csv(detections))
    if args.vocab_out:
        formats.write_bytes(args.vocab_out, db.dumps())
    print(f"{report.n_frames} frames, {report.n_candidates} candidates, "
          f"{report.n_detections} detections", file=sys.stderr)
    for start, first in report.regions:
        where = "missed" if first is None else f"first detection at frame {first}"
        print(f"loop region starting at frame {start}: {where}", file=sys.stderr)
    if truth is not None:
        scored = [(d.query_frame_id, d.reference_frame_id) for d in detections
                  if (d.query_frame_id, d.reference_frame_id) in truth]
        rep = evaluation.precision_recall(scored, truth)
        print(f"precision {evaluation.fmt_metric(rep.precision)} "
              f"recall {evaluation.fmt_metric(rep.recall)}", file=sys.stderr)
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = run_config(args)
    data = training_table(args, cfg)
    rep = evaluation.repeated_eval(cfg.runs, data, cfg.hyperparams(), base_seed=cfg.split_seed,
                                   test_fraction=cfg.split, n_jobs=cfg.threads,
                                   features=evaluation.ARMS[args.features])
    print(f"{cfg.runs} runs, features: {args.features}")
    print(evaluation.format_summary(rep))
    print(f"pooled    tp {rep.tp}  fp {rep.fp}  fn {rep.fn}  "
          f"precision {evaluation.fmt_metric(rep.precision)}  recall {evaluation.fmt_metric(rep.recall)}")
    if args.out:
        formats.write_bytes(args.out, evaluation.runs_to_csv(rep))
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = run_config(args)
    data = training_table(args, cfg)
    split_seed, forest_seed = evaluation.run_seeds(cfg.split_seed, 0)
    tr, te = evaluation.stratified_split(data.y, cfg.split, split_seed)
    hp = replace(cfg.hyperparams(), seed=forest_seed)
    rows = evaluation.ablation(data.subset(tr), data.subset(te), hp, n_jobs=cfg.threads)
    print(evaluation.format_table(rows))
    if args.out:
        formats.write_bytes(args.out, evaluation.reports_to_csv(rows))
    return EXIT_OK


def cmd_importance(args) -> int:
    if args.model:
        model = forest.load(formats.read_bytes(args.model))
    else:
        cfg = run_config(args)
        data = training_table(args, cfg).select(evaluation.ARMS[args.features])
        model = forest.train(data, cfg.hyperparams(), n_jobs=cfg.threads)
    _print_importance(model)
    return EXIT_OK


COMMANDS = {
    "gen": cmd_gen, "bow-build": cmd_bow_build, "train": cmd_train, "predict": cmd_predict,
    "eval": cmd_eval, "ablate": cmd_ablate, "importance": cmd_importance,
}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (SymbioError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
