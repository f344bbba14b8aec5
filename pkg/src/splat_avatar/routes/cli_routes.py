# splat_avatar/routes/cli_routes.py
"""
CLI routes - sub-command definitions and error-line dispatch
"""

import argparse
import sys
from typing import List, Optional

from ..config.app_config import Config
from ..controllers.cli_controller import CliController
from ..exceptions import SplatAvatarError
from ..models.harness_model import EvalSplit
from ..schemas.report_schemas import ErrorLineSchema
from ..services.ablation_service import ABLATION_VARIANTS
from ..utils.logging_utils import logger

controller = CliController()

EXIT_CODES = {"config": 2, "io": 3, "dataset": 4}


def _config_args(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="flat YAML config file (defaults when omitted)")
    parser.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key"
    )


def _common_args(parser: argparse.ArgumentParser, dataset: bool = True):
    if dataset:
        parser.add_argument("--dataset", required=True, help="dataset root directory")
    parser.add_argument("--threads", type=int, default=None, help="tile workers (SPLAT_AVATAR_THREADS)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="splat-avatar", description=Config.APP_DESCRIPTION)
    parser.add_argument("--version", action="version", version=f"%(prog)s {Config.APP_VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    # Training
    train = sub.add_parser("train", help="optimise a splat avatar on a dataset")
    _common_args(train)
    _config_args(train)
    train.add_argument("--out", help="run directory (SPLAT_AVATAR_OUT_DIR)")
    train.add_argument("--progress", action="store_true", help="show a progress bar")
    train.set_defaults(handler=controller.train)

    # Rendering
    render = sub.add_parser("render", help="render a checkpoint to PNG")
    _common_args(render)
    render.add_argument("--checkpoint", required=True)
    render.add_argument("--timestep", type=int, default=0)
    render.add_argument("--camera", action="append", help="camera name (repeatable, default all)")
    render.add_argument("--out", help="output directory")
    render.set_defaults(handler=controller.render)

    # Evaluation
    evaluate = sub.add_parser("eval", help="score a checkpoint on the held-out splits")
    _common_args(evaluate)
    evaluate.add_argument("--checkpoint", required=True)
    evaluate.add_argument("--split", choices=[s.value for s in EvalSplit] + ["all"], default="all")
    evaluate.add_argument("--out", help="report directory")
    evaluate.set_defaults(handler=controller.eval)

    # Dataset synthesis
    synth = sub.add_parser("synth", help="write a synthetic head-proxy dataset")
    synth.add_argument("--out", required=True, help="dataset root to create")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--frames", type=int, default=60)
    synth.add_argument("--heldout", type=int, default=15, help="held-out cameras")
    synth.add_argument("--size", type=int, default=64, help="image width and height")
    synth.set_defaults(handler=controller.synth)

    # Export
    export = sub.add_parser("export", help="write world-space splats as PLY")
    _common_args(export)
    export.add_argument("--checkpoint", required=True)
    export.add_argument("--timestep", type=int, default=0)
    export.add_argument("--out", required=True, help="PLY path")
    export.set_defaults(handler=controller.export)

    # Ablation
    ablate = sub.add_parser("ablate", help="train and evaluate the supervision variants")
    _common_args(ablate)
    _config_args(ablate)
    ablate.add_argument("--variants", nargs="+", choices=list(ABLATION_VARIANTS))
    ablate.add_argument("--out", help="ablation directory")
    ablate.set_defaults(handler=controller.ablate)

    default_config = sub.add_parser("default-config", help="print or write the complete default config")
    default_config.add_argument("--out", help="file to write (stdout when omitted)")
    default_config.set_defaults(handler=controller.default_config)
    return parser


def exit_code(error: SplatAvatarError) -> int:
    return EXIT_CODES.get(error.category, 1)


def run(argv: Optional[List[str]] = None) -> int:
    """Parse, dispatch, and map library errors to `error[<category>]: <message>` plus an exit code"""
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except SplatAvatarError as e:
        logger.log_service_error(args.command, e.message)
        print(ErrorLineSchema(category=e.category, message=e.message).line(), file=sys.stderr)
        return exit_code(e)
