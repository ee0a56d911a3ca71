"""Command line for the ingest adapter."""

from __future__ import annotations

import argparse
import sys

from .backends import BackendError, MediaPipeBackend, RecordedBackend
from .config import AdapterConfig, AdapterConfigError
from .ingest import ingest
from .topology import TopologyError, emit_rolemap

ERROR_PREFIX = "palsy-ingest: error:"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="palsy-ingest",
        description="Convert subject image directories into frames.jsonl via an "
                    "external face-landmark model, and emit topology fixtures.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("ingest", help="run the landmark model over a dataset")
    p.add_argument("--config", required=True, help="adapter config JSON")
    backend = p.add_mutually_exclusive_group(required=True)
    backend.add_argument("--mediapipe-model", metavar="TASK_FILE",
                         help="face-landmarker model asset for the mediapipe backend")
    backend.add_argument("--recorded", metavar="FIXTURE_JSON",
                         help="replay recorded detections (offline/golden runs)")

    p = sub.add_parser("emit-rolemap", help="write roles.json + contours.json")
    p.add_argument("--topology", default="facemesh478", help="topology version")
    p.add_argument("--out", required=True, help="output directory")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "ingest":
            config = AdapterConfig.from_json(args.config)
            backend = (RecordedBackend(args.recorded) if args.recorded
                       else MediaPipeBackend(args.mediapipe_model))
            summary = ingest(config, backend)
            print(f"wrote {summary['total_frames']} frames "
                  f"({summary['total_skipped']} skipped) to {config.output_path}")
            return 0
        if args.command == "emit-rolemap":
            roles_path, contours_path = emit_rolemap(args.topology, args.out)
            print(f"wrote {roles_path} and {contours_path}")
            return 0
        parser.print_help()
        return 1
    except (AdapterConfigError, TopologyError, FileNotFoundError) as e:
        print(f"{ERROR_PREFIX} {e}", file=sys.stderr)
        return 1
    except BackendError as e:
        print(f"{ERROR_PREFIX} {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
