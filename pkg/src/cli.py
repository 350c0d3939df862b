import argparse
import logging
import sys

from .commands import rendering, scene, training
from .config import config
from .errors import RejectedInputError

logger = logging.getLogger("neuralmvs.cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    pass


class ArgumentParser(argparse.ArgumentParser):
    """argparse that raises instead of exiting with status 2."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="neural_mvs", description="Single-pass novel view synthesis.")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    toy = commands.add_parser("make-toy", help="Generate an analytic toy scene")
    toy.add_argument("--out", required=True, help="Output scene directory")
    toy.add_argument("--scene", default="sphere", choices=["sphere", "plane", "two-spheres"])
    toy.add_argument("--views", type=int, default=20, help="Number of cameras (>= 4)")
    toy.add_argument("--res", default="64x64", help="Resolution WxH, divisible by 8")
    toy.add_argument("--config", default="hemisphere", choices=["hemisphere", "fronto-parallel"])
    toy.add_argument("--seed", type=int, default=0)
    toy.add_argument("--cell-size", type=float, default=0.25, help="Checkerboard cell size")
    toy.set_defaults(handler=scene.make_toy_command)

    train = commands.add_parser("train", help="Train (or resume) a model on a scene")
    train.add_argument("--data", required=True, help="Scene directory")
    train.add_argument("--config", required=True, help="TrainConfig JSON file")
    train.add_argument("--out", required=True, help="Run directory")
    train.add_argument("--resume", help="Checkpoint to fine-tune from")
    train.set_defaults(handler=training.train_command)

    render = commands.add_parser("render", help="Render one dataset view")
    render.add_argument("--checkpoint", required=True)
    render.add_argument("--data", required=True)
    render.add_argument("--view-index", type=int, required=True)
    render.add_argument("--out", required=True, help="Output directory")
    render.set_defaults(handler=rendering.render_command)

    evaluate = commands.add_parser("eval", help="Evaluate a checkpoint on a split")
    evaluate.add_argument("--checkpoint", required=True)
    evaluate.add_argument("--data", required=True)
    evaluate.add_argument("--split", default="test", choices=["train", "test"])
    evaluate.add_argument("--out", required=True, help="Metrics JSON file")
    evaluate.set_defaults(handler=rendering.eval_command)

    select = commands.add_parser("select-views", help="Show the working set of a target view")
    select.add_argument("--data", required=True)
    select.add_argument("--target-index", type=int, required=True)
    select.add_argument("--out", required=True, help="Output JSON file")
    select.set_defaults(handler=scene.select_views_command)

    ablate = commands.add_parser("ablate", help="Run the ablation matrix")
    ablate.add_argument("--data", required=True)
    ablate.add_argument("--config", required=True)
    ablate.add_argument("--out", required=True)
    ablate.set_defaults(handler=training.ablate_command)
    return parser


def configure_logging() -> None:
    logging.basicConfig(
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        level=getattr(logging, config.LOG_LEVEL.upper(), logging.INFO),
    )


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE

    try:
        result = args.handler(args)
    except (RejectedInputError, FileNotFoundError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:
        logger.exception(f"Command '{args.command}' failed")
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_RUNTIME

    if result.message:
        print(result.message)
    for path in result.artifacts:
        logger.debug(f"Wrote {path}")
    return result.exit_code
