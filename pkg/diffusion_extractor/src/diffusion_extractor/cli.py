"""Command line front end for batch feature extraction."""

import argparse
import sys

from .config import ExtractorConfig
from .errors import ExtractorError
from .extract import extract_frames


def build_parser():
    p = argparse.ArgumentParser(
        prog="diffusion-extract",
        description="Extract per-layer feature files from depth-map frame sets.",
    )
    p.add_argument("frames", nargs="+", help="frames.json manifests to process")
    p.add_argument("--out", "-o", required=True, help="output directory")
    p.add_argument("--backend", choices=("diffusion", "stats"), default="diffusion")
    p.add_argument("--layers", type=int, nargs="+", default=[0, 3, 6],
                   help="decoder layers to capture")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--channels", type=int, default=16,
                   help="stats backend output width")
    p.add_argument("--timestep", type=int, default=261,
                   help="denoising step whose activations are kept")
    p.add_argument("--total-steps", type=int, default=1000)
    p.add_argument("--height", type=int, default=512)
    p.add_argument("--width", type=int, default=704)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = ExtractorConfig(
            timestep=args.timestep,
            total_steps=args.total_steps,
            layers=tuple(args.layers),
            target_height=args.height,
            target_width=args.width,
            channels=args.channels,
            backend=args.backend,
            seed=args.seed,
            out_dir=args.out,
        )
        for frames in args.frames:
            for path in extract_frames(frames, cfg):
                print(path)
    except ExtractorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
