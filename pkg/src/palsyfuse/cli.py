"""Command-line entry point: synth, extract, train, eval, report.

Exit codes: 0 success, 1 validation error (bad flags, missing files, invalid
config), 2 runtime error. Output files are written atomically (temp file in
the target directory, then rename), so interrupted runs never leave
truncated artifacts.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

from . import evaluation, geometry, models, rasterizer, synthgen
from .datamodel import (DatasetManifest, read_frames, write_frames,
                        write_features_csv, write_image, write_manifest)
from .errors import ConfigError, PalsyFuseError
from .nn import save_weights
from .rng import derive_seed

ERROR_PREFIX = "palsyfuse: error:"

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    """argparse that reports flag errors with our prefix and exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _atomic_write_text(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_via(path: str, writer) -> None:
    """Run writer(tmp_path), then rename tmp_path over path."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _require_file(path: str, what: str) -> None:
    if not os.path.isfile(path):
        raise ConfigError(f"{what} not found: {path}")


def _load_run_config(path: str) -> evaluation.RunConfig:
    _require_file(path, "config file")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: not valid JSON: {e}") from e
    cfg = evaluation.RunConfig.from_json_obj(obj)
    if cfg.dataset["kind"] == "files":
        _require_file(cfg.dataset["frames"], "frames file")
    if cfg.roles_path:
        _require_file(cfg.roles_path, "roles file")
    if cfg.contours_path:
        _require_file(cfg.contours_path, "contours file")
    return cfg


def _resolve_threads(flag_value) -> int:
    env = os.environ.get("PALSYFUSE_THREADS")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError as e:
            raise ConfigError(f"PALSYFUSE_THREADS must be an integer, got {env!r}") from e
    if flag_value is not None:
        return max(1, int(flag_value))
    return os.cpu_count() or 1


# ---------------------------------------------------------------------------
# subcommands

def cmd_synth(args) -> int:
    n_palsy = round(args.subjects * args.palsy_fraction)
    n_healthy = args.subjects - n_palsy
    frames = synthgen.generate_dataset(
        n_palsy=n_palsy, n_healthy=n_healthy, frames_per_subject=args.frames,
        seed=args.seed, jitter_sigma=args.jitter)
    os.makedirs(args.out, exist_ok=True)
    _atomic_write_via(os.path.join(args.out, "frames.jsonl"),
                      lambda tmp: write_frames(frames, tmp))
    manifest = DatasetManifest.from_frames(frames)
    _atomic_write_via(os.path.join(args.out, "manifest.json"),
                      lambda tmp: write_manifest(manifest, tmp))
    print(f"wrote {len(frames)} frames from {args.subjects} subjects "
          f"({n_palsy} affected) to {args.out}")
    return EXIT_OK


_EXTRACT_MODALITIES = ("handcrafted", "expression", "coordinates", "bnw", "rgb")


def cmd_extract(args) -> int:
    _require_file(args.frames, "frames file")
    if args.roles:
        _require_file(args.roles, "roles file")
    if args.contours:
        _require_file(args.contours, "contours file")
    wanted = [m.strip() for m in args.modalities.split(",") if m.strip()]
    for m in wanted:
        if m not in _EXTRACT_MODALITIES:
            raise ConfigError(
                f"unknown modality {m!r} (known: {', '.join(_EXTRACT_MODALITIES)})")
    frames = read_frames(args.frames)
    roles = geometry.RoleMap.from_json(args.roles) if args.roles else geometry.default_role_map()
    contours = (rasterizer.ContourSet.from_json(args.contours)
                if args.contours else rasterizer.default_contours())

    if any(m in wanted for m in ("handcrafted", "expression", "coordinates")):
        os.makedirs(args.out_features, exist_ok=True)
    if "handcrafted" in wanted:
        vectors = [geometry.handcrafted29(f, roles) for f in frames]
        _atomic_write_via(os.path.join(args.out_features, "handcrafted.csv"),
                          lambda tmp: write_features_csv(vectors, tmp))
    if "expression" in wanted:
        vectors = [geometry.expression_features(f) for f in frames]
        _atomic_write_via(os.path.join(args.out_features, "expression.csv"),
                          lambda tmp: write_features_csv(vectors, tmp))
    if "coordinates" in wanted:
        vectors = [geometry.flatten_coordinates(f, roles) for f in frames]
        _atomic_write_via(os.path.join(args.out_features, "coordinates.csv"),
                          lambda tmp: write_features_csv(vectors, tmp))
    if "bnw" in wanted or "rgb" in wanted:
        os.makedirs(args.out_images, exist_ok=True)
        size = (args.size, args.size)
        for f in frames:
            if "bnw" in wanted:
                img = rasterizer.render_line_segments(f, contours, size)
                _atomic_write_via(
                    os.path.join(args.out_images, f"bnw_{f.subject_id}_{f.frame_id}.pgm"),
                    lambda tmp, img=img: write_image(img, tmp))
            if "rgb" in wanted:
                img = rasterizer.render_face_sketch(f, contours, size)
                _atomic_write_via(
                    os.path.join(args.out_images, f"rgb_{f.subject_id}_{f.frame_id}.ppm"),
                    lambda tmp, img=img: write_image(img, tmp))
    print(f"extracted {', '.join(wanted)} for {len(frames)} frames")
    return EXIT_OK


def cmd_train(args) -> int:
    config = _load_run_config(args.config)
    names = [m["name"] for m in config.model_cfgs]
    if args.model not in names:
        raise ConfigError(f"model {args.model!r} is not in the config's models list "
                          f"({', '.join(names)})")
    frames = evaluation.load_dataset_frames(config)
    for f in frames:
        if f.label is None:
            raise ConfigError(f"frame {f.subject_id}/{f.frame_id} has no label")
    roles = (geometry.RoleMap.from_json(config.roles_path)
             if config.roles_path else geometry.default_role_map())
    contours = (rasterizer.ContourSet.from_json(config.contours_path)
                if config.contours_path else rasterizer.default_contours())
    modality = evaluation.MODALITY_BY_MODEL_PREFIX[args.model]
    modal = evaluation.extract_modalities(frames, {modality}, roles, contours,
                                          config.image_size)
    import numpy as np
    X = evaluation._as_model_input(modal[modality], np.arange(len(frames)))
    y = np.array([f.binary_label() for f in frames], dtype=np.float64)
    overrides = {k: v for k, v in dict(
        next(m for m in config.model_cfgs if m["name"] == args.model)).items()
        if k != "name"}
    spec = models.build_model_spec(args.model,
                                   seed=derive_seed(config.seed, "train", args.model),
                                   overrides=overrides)
    tm = models.train(spec, (X, y))
    _atomic_write_via(args.out_weights, lambda tmp: save_weights(tm.net, tmp))
    print(f"trained {args.model} for {len(tm.loss_log)} epochs "
          f"(final loss {tm.loss_log[-1]:.6f}); weights -> {args.out_weights}")
    return EXIT_OK


def cmd_eval(args) -> int:
    config = _load_run_config(args.config)
    out_dir = args.out_report or config.output_dir
    if not out_dir:
        raise ConfigError("no output directory: pass --out-report or set "
                          "'output_dir' in the config")
    threads = _resolve_threads(args.threads)
    report = evaluation.run_experiment(config, threads=threads,
                                       progress=lambda line: print(line, flush=True))
    os.makedirs(out_dir, exist_ok=True)
    report_obj = report.to_json_obj()
    _atomic_write_text(os.path.join(out_dir, "report.json"),
                       report.to_json_text())
    _atomic_write_text(os.path.join(out_dir, "report.md"),
                       evaluation.render_markdown_report(report_obj))
    evaluation.write_prediction_csvs(report, out_dir)
    if report.incomplete:
        print(f"{len(report.incomplete)} fold(s) failed; averages withheld")
        return EXIT_RUNTIME
    print(f"wrote report for {len(report.folds)} folds to {out_dir}")
    return EXIT_OK


def cmd_report(args) -> int:
    _require_file(args.report, "report file")
    with open(args.report, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{args.report}: not valid JSON: {e}") from e
    if args.format == "md":
        sys.stdout.write(evaluation.render_markdown_report(obj))
    else:
        sys.stdout.write(json.dumps(obj, sort_keys=True, indent=2) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="palsyfuse",
                     description="Facial-asymmetry detection pipeline: synthesize data, "
                                 "extract modalities, train models, evaluate with "
                                 "leave-one-patient-out cross-validation.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("synth", parents=[], help="generate a synthetic dataset",
                       description="Generate a deterministic synthetic dataset "
                                   "(frames.jsonl + manifest.json).")
    p.add_argument("--subjects", type=int, default=50, help="total subject count")
    p.add_argument("--palsy-fraction", type=float, default=0.2,
                   help="fraction of subjects that are affected")
    p.add_argument("--frames", type=int, default=50, help="frames per subject")
    p.add_argument("--seed", type=int, default=0, help="generator seed")
    p.add_argument("--jitter", type=float, default=0.01,
                   help="landmark jitter, in units of the interocular distance")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="extract feature and image modalities",
                       description="Compute structured features and/or rendered "
                                   "images from a frames.jsonl file.")
    p.add_argument("--frames", required=True, help="input frames.jsonl")
    p.add_argument("--roles", default=None,
                   help="role-map JSON (default: bundled synthetic topology)")
    p.add_argument("--contours", default=None,
                   help="contour-set JSON (default: bundled synthetic topology)")
    p.add_argument("--out-features", default="features",
                   help="directory for feature CSVs")
    p.add_argument("--out-images", default="images", help="directory for images")
    p.add_argument("--size", type=int, default=64, help="rendered image size")
    p.add_argument("--modalities", default="handcrafted,expression,coordinates,bnw,rgb",
                   help="comma list of: handcrafted, expression, coordinates, bnw, rgb")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train one model on a config's dataset",
                       description="Train a single named model on the full dataset "
                                   "described by the run config and save its weights.")
    p.add_argument("--config", required=True, help="run config JSON")
    p.add_argument("--model", required=True, help="model name from the config")
    p.add_argument("--out-weights", required=True, help="output NNW1 weights path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="run the LOPO evaluation",
                       description="Run the full leave-one-patient-out experiment "
                                   "and write report.json, report.md, and "
                                   "per-fold prediction CSVs.")
    p.add_argument("--config", required=True, help="run config JSON")
    p.add_argument("--out-report", default=None,
                   help="output directory (default: config output_dir)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker processes (default: logical cores; "
                        "PALSYFUSE_THREADS overrides)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="re-render a report",
                       description="Print a stored report.json as markdown or JSON.")
    p.add_argument("--report", required=True, help="path to report.json")
    p.add_argument("--format", choices=("md", "json"), default="md",
                   help="output format")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_help()
            return EXIT_VALIDATION
        return args.func(args)
    except _UsageError as e:
        print(f"{ERROR_PREFIX} {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except ConfigError as e:
        print(f"{ERROR_PREFIX} {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as e:
        print(f"{ERROR_PREFIX} file not found: {e.filename or e}", file=sys.stderr)
        return EXIT_VALIDATION
    except PalsyFuseError as e:
        print(f"{ERROR_PREFIX} {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:  # unexpected — still a clean exit for scripts
        print(f"{ERROR_PREFIX} unexpected: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
