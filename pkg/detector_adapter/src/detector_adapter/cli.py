"""Command-line entry: speak the detection protocol on stdin/stdout."""

from __future__ import annotations

import argparse

from .service import BackendConfig, parse_scores, run_service


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="detector-adapter",
        description="Detector backend speaking the line-JSON detection "
                    "protocol on stdin/stdout.")
    parser.add_argument("--detector", default="colorblob",
                        choices=("colorblob", "faster-rcnn", "grounding-dino"),
                        help="which detector to serve")
    parser.add_argument("--device", default="cpu",
                        help="inference device for model detectors")
    parser.add_argument("--scores", default="primary",
                        help="score floors: 'primary' (0.5), 'secondary' "
                             "(0.35,0.25), 'BOX' or 'BOX,TEXT'")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scores = parse_scores(args.scores)
    except ValueError as exc:
        build_parser().error(str(exc))
        raise SystemExit(2)  # unreachable; error() exits
    config = BackendConfig(detector=args.detector, device=args.device,
                           scores=scores)
    return run_service(config)


if __name__ == "__main__":
    raise SystemExit(main())
