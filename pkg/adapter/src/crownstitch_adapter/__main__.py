"""Entry point: python -m crownstitch_adapter --model dummy|green-threshold|module:path"""

import argparse
import sys

from .models import load_model
from .protocol import serve


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="crownstitch_adapter",
        description="Serve an instance-segmentation model over the crownstitch wire protocol.",
    )
    parser.add_argument(
        "--model",
        default="dummy",
        help="dummy, green-threshold, or a module.path:attribute hook.",
    )
    args = parser.parse_args(argv)
    try:
        model = load_model(args.model)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return serve(sys.stdin, sys.stdout, model, name=args.model)
    except (BrokenPipeError, OSError) as exc:
        print(f"stream error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
