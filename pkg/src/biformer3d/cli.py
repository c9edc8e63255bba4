"""Command-line entry points.

Verbs: gen-data, train, eval, baseline, ablate, upsample, heatmap.
Every verb accepts --config (JSON), --seed, and --out-dir; bare commands
run a small desk-scale configuration end to end. Exit codes: 0 success,
2 configuration error, 3 data error, 4 numeric failure.
"""

import argparse
import json
import os
import sys

from . import harness
from .bundle import read_bundle, write_bundle, write_labels
from .domain import equiangular_grid, fibonacci_grid, stack_field
from .errors import ConfigError, DataError, NumericError
from .synthetic import HeadModel, synth_corpus

DEFAULT_OUT = {
    "gen-data": os.path.join("runs", "corpus"),
    "train": os.path.join("runs", "train"),
    "eval": os.path.join("runs", "eval"),
    "baseline": os.path.join("runs", "baseline"),
    "ablate": os.path.join("runs", "ablate"),
    "upsample": os.path.join("runs", "upsample"),
    "heatmap": os.path.join("runs", "heatmap"),
}


def load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as f:
            cfg = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path!r}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path!r} is not valid JSON: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


def _grid_from_config(d: dict):
    kind = d.get("kind", "fibonacci")
    radius = float(d.get("radius_m", 1.5))
    if kind == "fibonacci":
        return fibonacci_grid(int(d.get("count", 81)), radius)
    if kind == "equiangular":
        return equiangular_grid(
            int(d.get("n_azimuth", 12)),
            int(d.get("n_elevation", 6)),
            float(d.get("elevation_max_deg", 60.0)),
            radius,
        )
    raise ConfigError(f"unknown grid kind {kind!r}")


def cmd_gen_data(args, config) -> int:
    d = dict(config.get("data", {}))
    seed = args.seed if args.seed is not None else int(d.get("seed", 0))
    n_subjects = int(d.get("n_subjects", 20))
    k = int(d.get("K", 64))
    fs = float(d.get("sample_rate_hz", 48000.0))
    grid = _grid_from_config(d.get("grid", {}))
    head = HeadModel(**d.get("head", {}))
    out_dir = args.out_dir
    os.makedirs(out_dir, exist_ok=True)
    pairs = synth_corpus(n_subjects, grid, head, seed, k, fs)
    ids = []
    for subject, labels in pairs:
        stacked = stack_field(subject)
        write_bundle(stacked, os.path.join(out_dir, f"{subject.subject_id}.hrir"))
        write_labels(
            subject.subject_id, labels.itd_us, labels.ild_db,
            os.path.join(out_dir, f"{subject.subject_id}.labels.json"),
        )
        ids.append(subject.subject_id)
    manifest = {
        "subjects": ids,
        "n_directions": len(grid),
        "K": k,
        "sample_rate_hz": fs,
        "seed": seed,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2)
    print(f"wrote {len(ids)} subjects x {len(grid)} directions to {out_dir}")
    return 0


def _experiment(args, config) -> harness.ExperimentConfig:
    if args.corpus is None:
        raise ConfigError("--corpus is required")
    exp = harness.ExperimentConfig.from_dict(
        config.get("experiment", {}), args.corpus
    )
    if args.seed is not None:
        exp = harness.ExperimentConfig.from_dict(
            {**config.get("experiment", {}), "seed": args.seed}, args.corpus
        )
    return exp


def cmd_train(args, config) -> int:
    exp = _experiment(args, config)
    result = harness.train(exp, args.out_dir)
    best = result["best_val_nmse_db"]
    print(f"checkpoint: {result['checkpoint']}")
    print(f"training log: {result['log']}")
    if best is not None:
        print(f"best validation NMSE: {best:.3f} dB")
    return 0


def _parse_ms(text, config, default=(5, 9, 27)):
    if text:
        try:
            return [int(m) for m in text.split(",") if m.strip()]
        except ValueError as e:
            raise ConfigError(f"bad --m list {text!r}") from e
    ms = config.get("eval", {}).get("ms")
    return [int(m) for m in ms] if ms else list(default)


def _parse_subjects(text, config):
    if text:
        return [s.strip() for s in text.split(",") if s.strip()]
    return config.get("eval", {}).get("subjects")


def _print_aggregates(rows) -> None:
    for row in rows:
        if row["subject_id"] == "aggregate":
            print(
                f"M={row['M']:>3}  NMSE {row['nmse_db']:8.3f} dB"
                f"  CD {row['cd']:.5f}"
                f"  ITD-E {row['itd_e_us']:8.3f} us"
                f"  ILD-E {row['ild_e_db']:7.3f} dB"
            )


def cmd_eval(args, config) -> int:
    if args.checkpoint is None or args.corpus is None:
        raise ConfigError("--checkpoint and --corpus are required")
    ms = _parse_ms(args.m, config)
    rows = harness.evaluate_checkpoint(
        args.checkpoint, args.corpus, ms,
        subject_ids=_parse_subjects(args.subjects, config),
    )
    path = os.path.join(args.out_dir, "metrics.csv")
    harness.write_metric_csv(rows, path)
    _print_aggregates(rows)
    print(f"metrics: {path}")
    return 0


def cmd_baseline(args, config) -> int:
    if args.corpus is None:
        raise ConfigError("--corpus is required")
    ms = _parse_ms(args.m, config)
    subjects = harness.load_corpus(args.corpus)
    wanted = _parse_subjects(args.subjects, config)
    if wanted:
        subjects = [s for s in subjects if s.stacked.subject_id in set(wanted)]
        if len(subjects) != len(set(wanted)):
            raise ConfigError("some requested subjects are not in the corpus")
    fs = subjects[0].stacked.sample_rate_hz
    rows = harness.evaluate_subjects(
        subjects, ms,
        lambda st, mask: harness.nearest_neighbor_baseline(
            st.payload, st.directions, mask),
        fs,
    )
    path = os.path.join(args.out_dir, "baseline.csv")
    harness.write_metric_csv(rows, path)
    _print_aggregates(rows)
    print(f"metrics: {path}")
    return 0


def cmd_ablate(args, config) -> int:
    exp = _experiment(args, config)
    table = harness.run_ablation(exp, args.out_dir, eval_m=args.eval_m)
    width = max(len(r["variant"]) for r in table)
    for row in table:
        print(
            f"{row['variant']:<{width}}  NMSE {row['nmse_db']:8.3f} dB"
            f"  CD {row['cd']:.5f}"
            f"  ITD-E {row['itd_e_us']:8.3f} us"
            f"  ILD-E {row['ild_e_db']:7.3f} dB"
        )
    print(f"table: {os.path.join(args.out_dir, 'ablation.csv')}")
    return 0


def cmd_upsample(args, config) -> int:
    if args.checkpoint is None or args.bundle is None:
        raise ConfigError("--checkpoint and --bundle are required")
    if args.targets:
        try:
            with open(args.targets) as f:
                targets = json.load(f)
        except OSError as e:
            raise ConfigError(f"cannot read targets {args.targets!r}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"targets file is not valid JSON: {e}") from e
    else:
        targets = config.get("targets")
    if not targets:
        raise ConfigError("no target directions given (--targets or config)")
    out_path = args.out or os.path.join(args.out_dir, "upsampled.hrir")
    result = harness.upsample(args.checkpoint, args.bundle, targets, out_path)
    print(f"wrote {result.n_directions} directions to {out_path}")
    return 0


def cmd_heatmap(args, config) -> int:
    if args.bundle is None:
        raise ConfigError("--bundle is required")
    stacked = read_bundle(args.bundle)
    out_path = args.out or os.path.join(args.out_dir, "heatmap.pgm")
    pixels = harness.render_heatmap(stacked, out_path)
    print(f"wrote {pixels.shape[1]}x{pixels.shape[0]} PGM to {out_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out-dir", help="output directory")

    parser = argparse.ArgumentParser(
        prog="biformer3d",
        description="Binaural HRIR field reconstruction from sparse measurements",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("gen-data", parents=[common],
                       help="synthesize a spherical-head corpus")
    p.set_defaults(run=cmd_gen_data)

    p = sub.add_parser("train", parents=[common], help="train a model")
    p.add_argument("--corpus", help="corpus directory")
    p.set_defaults(run=cmd_train)

    p = sub.add_parser("eval", parents=[common],
                       help="evaluate a checkpoint on fixed masks")
    p.add_argument("--checkpoint")
    p.add_argument("--corpus")
    p.add_argument("--m", help="comma-separated sparsity levels, e.g. 5,9,27")
    p.add_argument("--subjects", help="comma-separated subject ids")
    p.set_defaults(run=cmd_eval)

    p = sub.add_parser("baseline", parents=[common],
                       help="nearest-neighbor baseline metrics")
    p.add_argument("--corpus")
    p.add_argument("--m", help="comma-separated sparsity levels")
    p.add_argument("--subjects", help="comma-separated subject ids")
    p.set_defaults(run=cmd_baseline)

    p = sub.add_parser("ablate", parents=[common],
                       help="train and compare the standard variants")
    p.add_argument("--corpus", help="corpus directory")
    p.add_argument("--eval-m", type=int, default=5)
    p.set_defaults(run=cmd_ablate)

    p = sub.add_parser("upsample", parents=[common],
                       help="predict HRIRs at new directions")
    p.add_argument("--checkpoint")
    p.add_argument("--bundle", help="measured input bundle")
    p.add_argument("--targets", help="JSON file with [[az, el, r], ...]")
    p.add_argument("--out", help="output bundle path")
    p.set_defaults(run=cmd_upsample)

    p = sub.add_parser("heatmap", parents=[common],
                       help="render a bundle as a PGM heatmap")
    p.add_argument("--bundle")
    p.add_argument("--out", help="output image path")
    p.set_defaults(run=cmd_heatmap)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        if args.out_dir is None:
            args.out_dir = DEFAULT_OUT[args.verb]
        os.makedirs(args.out_dir, exist_ok=True)
        return args.run(args, config)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
