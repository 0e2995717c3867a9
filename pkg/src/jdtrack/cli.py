"""``jdtrack`` command line: track, eval, simulate, mine, bench.

Exit codes: 0 success, 1 usage or configuration error, 2 data error.
Machine-readable outputs are JSON, human-readable ones aligned tables.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields, replace

from . import bench, config, kernels, metrics, sim
from .config import ConfigError
from .embed import NoValidBatchError, margin_violation_fraction, mine_hard_triplets, \
    sample_batch, triplet_loss
from .io import FormatError, attach_embeddings, ensure_parent, read_embeddings, read_kitti, \
    read_labeled_embeddings, read_mot, write_kitti, write_mot
from .tracker import TrackerError, results_to_detections, run_sequence

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _dump_json(obj, path):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path == "-":
        sys.stdout.write(text)
        return
    ensure_parent(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _load_config(args) -> dict:
    overrides = dict(config.parse_override(s) for s in getattr(args, "set", None) or [])
    # explicit flags win over both the file and --set
    for name in ("dets", "embs", "out", "timing", "format", "iou_threshold", "kitti_type",
                 "batches", "mining_seed"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return config.load(getattr(args, "config", None), overrides)


def _read_frames(path, fmt, kitti_type):
    return read_mot(path) if fmt == "mot" else read_kitti(path, kitti_type)


# -- track ------------------------------------------------------------------

def cmd_track(args) -> int:
    cfg = _load_config(args)
    params = config.tracker_params(cfg)
    if not cfg["dets"]:
        raise UsageError("track needs --dets (or 'dets' in the config)")
    if not cfg["out"]:
        raise UsageError("track needs --out (or 'out' in the config)")
    if params.uses_appearance and not cfg["embs"]:
        raise UsageError("beta > 0 needs an embedding file (--embs); set beta=0 for motion only")
    frames = _read_frames(cfg["dets"], cfg["format"], cfg["kitti_type"])
    if cfg["embs"]:
        try:
            frames = attach_embeddings(frames, read_embeddings(cfg["embs"]),
                                       required=params.uses_appearance)
        except ValueError as exc:
            if isinstance(exc, FormatError):
                raise
            raise DataError(f"{cfg['embs']}: {exc}") from None
    kernels.warm_up()
    results, timing = run_sequence(frames, params)
    hyps = results_to_detections(results)
    ensure_parent(cfg["out"])
    if cfg["format"] == "mot":
        write_mot(cfg["out"], hyps)
    else:
        write_kitti(cfg["out"], hyps, cfg["kitti_type"])
    timing_path = cfg["timing"] or cfg["out"] + ".timing.json"
    payload = timing.to_dict()
    payload["backend"] = kernels.BACKEND
    _dump_json(payload, timing_path)
    s = timing.summary()
    print(f"tracked {len(results)} frames, {len({d.track_id for d in hyps})} tracks -> {cfg['out']}")
    print(f"{'stage':<8}{'mean ms':>10}{'max ms':>10}")
    for stage in ("predict", "matrix", "solve", "update", "total"):
        print(f"{stage:<8}{s[stage]['mean_ms']:10.4f}{s[stage]['max_ms']:10.4f}")
    print(f"fps {s['fps']:.1f} (timing -> {timing_path})")
    return EXIT_OK


# -- eval -------------------------------------------------------------------

def _eval_pair(job):
    gt, hyp, fmt, kitti_type, thr = job
    g = _read_frames(gt, fmt, kitti_type)
    h = _read_frames(hyp, fmt, kitti_type)
    return metrics.accumulate(g, h, thr)


def _labels(paths):
    stems = [os.path.splitext(os.path.basename(p))[0] for p in paths]
    if len(set(stems)) == len(stems):
        return stems
    return list(paths)


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    if len(args.gt) != len(args.hyp):
        raise UsageError(f"got {len(args.gt)} --gt but {len(args.hyp)} --hyp files")
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    jobs = [(g, h, cfg["format"], cfg["kitti_type"], cfg["iou_threshold"])
            for g, h in zip(args.gt, args.hyp)]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            counts = list(pool.map(_eval_pair, jobs))
    else:
        counts = [_eval_pair(j) for j in jobs]
    rows = {label: metrics.MotReport.from_counts(c)
            for label, c in zip(_labels(args.hyp), counts)}
    if len(counts) > 1:
        total = counts[0]
        for c in counts[1:]:
            total = total + c
        rows["OVERALL"] = metrics.MotReport.from_counts(total)
    print(metrics.format_table(rows))
    if args.json:
        _dump_json({name: rep.to_dict() for name, rep in rows.items()}, args.json)
    return EXIT_OK


# -- simulate ---------------------------------------------------------------

_SCENARIO_FIELDS = {f.name for f in fields(sim.ScenarioParams)}


def _scenario_params(args) -> sim.ScenarioParams:
    table = {}
    if args.scenario_config:
        try:
            with open(args.scenario_config, "rb") as fh:
                table = config.tomllib.load(fh)
        except config.tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{args.scenario_config}: {exc}") from None
        except OSError as exc:
            raise ConfigError(f"cannot read scenario config: {exc}") from None
    preset = args.preset or table.pop("preset", None)
    unknown = set(table) - _SCENARIO_FIELDS
    if unknown:
        raise ConfigError(f"unknown scenario keys {sorted(unknown)}")
    seed = args.seed if args.seed is not None else table.pop("seed", 0)
    table.pop("seed", None)
    try:
        if preset:
            if preset not in sim.PRESETS:
                raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(sim.PRESETS)}")
            base = sim.PRESETS[preset](seed)
            return replace(base, **table) if table else base
        return sim.ScenarioParams(seed=seed, **table)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad scenario: {exc}") from None


def cmd_simulate(args) -> int:
    params = _scenario_params(args)
    scenario = sim.generate(params)
    paths = sim.save(scenario, args.out_dir)
    n_gt = sum(len(v) for v in scenario.gt.values())
    n_det = sum(len(v) for v in scenario.detections.values())
    print(f"{params.frames} frames, {params.n_objects} objects, {n_gt} gt boxes, "
          f"{n_det} detections (seed {params.seed})")
    width = max(len(k) for k in paths)
    for name, path in paths.items():
        print(f"  {name.ljust(width)}  {path}")
    return EXIT_OK


# -- mine -------------------------------------------------------------------

def cmd_mine(args) -> int:
    cfg = _load_config(args)
    mp = config.mining_params(cfg)
    sequence = read_labeled_embeddings(args.labeled_embs)
    rows = []
    for k in range(cfg["batches"]):
        try:
            batch = sample_batch(sequence, mp, [cfg["mining_seed"], k])
        except NoValidBatchError as exc:
            raise DataError(str(exc)) from None
        except ValueError as exc:
            raise DataError(f"{args.labeled_embs}: {exc}") from None
        triplets = mine_hard_triplets(batch)
        loss = triplet_loss(triplets, batch.embeddings, mp.margin)
        rows.append({"batch": k, "items": len(batch),
                     "identities": len(batch.identity_counts()),
                     "triplets": len(triplets), "loss": loss,
                     "violation_fraction": margin_violation_fraction(
                         triplets, batch.embeddings, mp.margin)})
    print(f"{'batch':>5}{'items':>7}{'ids':>5}{'triplets':>10}{'loss':>12}{'violating':>11}")
    for r in rows:
        print(f"{r['batch']:5d}{r['items']:7d}{r['identities']:5d}{r['triplets']:10d}"
              f"{r['loss']:12.6f}{r['violation_fraction']:11.4f}")
    if args.json:
        _dump_json({"margin": mp.margin, "batches": rows}, args.json)
    return EXIT_OK


# -- bench ------------------------------------------------------------------

def _int_list(text):
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("track counts must be positive")
    return values


def cmd_bench(args) -> int:
    cfg = _load_config(args)
    tracks = args.tracks or list(bench.DEFAULT_TRACKS)
    if args.frames <= 3 or args.repeats < 1 or args.dim < 1:
        raise UsageError("need --frames > 3, --repeats >= 1, --dim >= 1")
    result = bench.run(tracks, dim=args.dim, frames=args.frames, repeats=args.repeats,
                       params=config.tracker_params(cfg))
    print(bench.format_table(result))
    if args.json:
        _dump_json(result, args.json)
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def _add_config_args(p):
    p.add_argument("--config", help="TOML config file (flat keys, see 'jdtrack --help')")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one config key; repeatable")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="jdtrack", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter,
                     epilog=config.describe())
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    raw = argparse.RawDescriptionHelpFormatter

    p = sub.add_parser("track", help="run the tracker on a detection file",
                       formatter_class=raw, epilog=config.describe())
    p.add_argument("--dets", help="detection file (MOT or KITTI)")
    p.add_argument("--embs", help="JSON Lines embedding sidecar; required when beta > 0")
    p.add_argument("--out", help="hypothesis file to write")
    p.add_argument("--format", choices=("mot", "kitti"))
    p.add_argument("--timing", help="timing JSON path (default <out>.timing.json)")
    _add_config_args(p)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="CLEAR-MOT evaluation of hypothesis files")
    p.add_argument("--gt", action="append", required=True, help="ground-truth file; repeatable")
    p.add_argument("--hyp", action="append", required=True,
                   help="hypothesis file, paired with --gt in order; repeatable")
    p.add_argument("--format", choices=("mot", "kitti"))
    p.add_argument("--iou-threshold", dest="iou_threshold", type=float)
    p.add_argument("--json", help="write the report as JSON here ('-' for stdout)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (one per sequence)")
    _add_config_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("simulate", help="generate a synthetic scene")
    p.add_argument("--scenario-config", help="TOML file with scene parameters")
    p.add_argument("--preset", help=f"one of {', '.join(sorted(sim.PRESETS))}")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", default="sim", help="output directory (default: sim)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("mine", help="batch-hard triplet mining report",
                       formatter_class=raw, epilog=config.describe())
    p.add_argument("--labeled-embs", required=True, help="embedding file with identity labels")
    p.add_argument("--batches", type=int)
    p.add_argument("--seed", dest="mining_seed", type=int)
    p.add_argument("--json", help="write the report as JSON here ('-' for stdout)")
    _add_config_args(p)
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("bench", help="per-stage timing versus track count")
    p.add_argument("--tracks", type=_int_list,
                   help="comma-separated track counts (default 8,16,32,64,128)")
    p.add_argument("--dim", type=int, default=128)
    p.add_argument("--frames", type=int, default=30)
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--json", help="write results as JSON here ('-' for stdout)")
    _add_config_args(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"jdtrack {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FormatError as exc:
        print(f"jdtrack {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DataError, TrackerError, metrics.EvaluationError, OSError) as exc:
        print(f"jdtrack {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
