"""Command line interface."""

import argparse
import gettext
import logging
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Optional

from chivessel.__about__ import APP_NAME, APP_VERSION, __description__
from chivessel.cli.overlays import render_overlays
from chivessel.config import PipelineConfig, load_config
from chivessel.conversions import NotSupportedUnitError, susceptibility_units
from chivessel.exceptions import ChivesselError
from chivessel.pipeline import run_eval, run_phantom, run_pipeline, run_vesselness
from chivessel.storage import OutputWriter, dump_json

gettext.bindtextdomain("chivessel", "locale")
gettext.textdomain("chivessel")
_ = gettext.gettext

logger = logging.getLogger(__name__)

LOG_LEVELS = (logging.WARNING, logging.INFO, logging.DEBUG)


def _add_segment_parser(commands: argparse._SubParsersAction) -> None:
    parser = commands.add_parser(
        "segment",
        help=_("segment the vessels of a set of susceptibility maps"),
    )
    parser.add_argument("--config", type=Path, help=_("YAML config file"))
    parser.add_argument("--out", type=Path, help=_("output directory"))
    parser.add_argument("--r2star", type=Path, help=_("R2* map"))
    parser.add_argument("--chi-para", type=Path, help=_("paramagnetic map"))
    parser.add_argument("--chi-dia", type=Path, help=_("diamagnetic magnitude map"))
    parser.add_argument("--brain-mask", type=Path, help=_("brain mask"))
    parser.add_argument(
        "--chi-units",
        choices=sorted(susceptibility_units),
        help=_("units of the susceptibility maps"),
    )
    parser.add_argument(
        "--dump-intermediates",
        action="store_true",
        default=None,
        help=_("also write seeds, vesselness maps and component tables"),
    )
    parser.add_argument(
        "--overlays",
        action="store_true",
        default=None,
        help=_("also write PNG quality control slices"),
    )
    parser.add_argument(
        "--skip-refine",
        action="store_true",
        default=None,
        help=_("keep every grown component"),
    )
    parser.add_argument("--threads", type=int, help=_("worker threads"))
    parser.add_argument(
        "--aniso-thresh-para",
        type=float,
        help=_("anisotropy threshold of the paramagnetic mask"),
    )
    parser.add_argument(
        "--aniso-thresh-dia",
        type=float,
        help=_("anisotropy threshold of the diamagnetic mask"),
    )


def _add_eval_parser(commands: argparse._SubParsersAction) -> None:
    parser = commands.add_parser(
        "eval",
        help=_("compare a vessel mask with a reference"),
    )
    parser.add_argument("--pred", type=Path, required=True, help=_("predicted mask"))
    parser.add_argument("--gt", type=Path, required=True, help=_("reference mask"))
    parser.add_argument(
        "--central-slices",
        type=int,
        metavar="N",
        help=_("also score the N central slices of every axis"),
    )
    parser.add_argument("--chi-pred", type=Path, help=_("chi map to score"))
    parser.add_argument("--chi-ref", type=Path, help=_("reference chi map"))
    parser.add_argument("--brain-mask", type=Path, help=_("brain mask"))
    parser.add_argument("--roi", type=Path, help=_("ROI mask"))
    parser.add_argument("--chi", type=Path, help=_("chi map for ROI statistics"))
    parser.add_argument(
        "--chi-units",
        choices=sorted(susceptibility_units),
        default="ppm",
        help=_("units of the --chi map"),
    )
    parser.add_argument("--out", type=Path, help=_("JSON report, stdout otherwise"))


def _add_phantom_parser(commands: argparse._SubParsersAction) -> None:
    parser = commands.add_parser("phantom", help=_("write a synthetic scene"))
    parser.add_argument(
        "--spec", type=Path, help=_("scene spec, default scene otherwise")
    )
    parser.add_argument(
        "--seed", type=int, help=_("noise seed, overrides the scene file")
    )
    parser.add_argument("--out", type=Path, required=True, help=_("output directory"))


def _add_vesselness_parser(commands: argparse._SubParsersAction) -> None:
    parser = commands.add_parser("vesselness", help=_("write the vesselness of a map"))
    parser.add_argument("--input", type=Path, required=True, help=_("input volume"))
    parser.add_argument("--out", type=Path, required=True, help=_("output directory"))
    parser.add_argument(
        "--config", type=Path, help=_("YAML config file for the scales")
    )
    parser.add_argument("--brain-mask", type=Path, help=_("domain of the reductions"))
    parser.add_argument("--threads", type=int, default=1, help=_("worker threads"))


def build_parser() -> argparse.ArgumentParser:
    """Create the argument parser with its four subcommands."""
    parser = argparse.ArgumentParser(prog=APP_NAME, description=__description__)
    parser.add_argument("--version", action="version", version=APP_VERSION)
    parser.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help=_("more logging, repeat for debug output"),
    )
    parser.add_argument("-q", "--quiet", action="store_true", help=_("errors only"))

    commands = parser.add_subparsers(dest="command", required=True)
    _add_segment_parser(commands)
    _add_eval_parser(commands)
    _add_phantom_parser(commands)
    _add_vesselness_parser(commands)
    return parser


def setup_logging(verbose: int, quiet: bool) -> None:  # noqa: FBT001
    """Configure the root logger once, on stderr."""
    level = logging.ERROR if quiet else LOG_LEVELS[min(verbose, len(LOG_LEVELS) - 1)]
    logging.basicConfig(
        level=level,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _segment(args: argparse.Namespace) -> int:
    cfg = PipelineConfig() if args.config is None else load_config(args.config)
    cfg = cfg.with_overrides(
        out=args.out,
        r2star=args.r2star,
        chi_para=args.chi_para,
        chi_dia=args.chi_dia,
        brain_mask=args.brain_mask,
        chi_units=args.chi_units,
        dump_intermediates=args.dump_intermediates,
        emit_overlays=args.overlays,
        skip_refine=args.skip_refine,
        threads=args.threads,
        aniso_thresh_para=args.aniso_thresh_para,
        aniso_thresh_dia=args.aniso_thresh_dia,
    )
    run_pipeline(cfg, overlays=render_overlays)
    return 0


def _eval(args: argparse.Namespace) -> int:
    report = run_eval(
        args.pred,
        args.gt,
        central=args.central_slices,
        chi_pred=args.chi_pred,
        chi_ref=args.chi_ref,
        brain_mask=args.brain_mask,
        roi=args.roi,
        chi=args.chi,
        chi_units=args.chi_units,
    )
    text = dump_json(report.to_dict())
    if args.out is None:
        sys.stdout.write(text)
        return 0

    writer = OutputWriter(args.out.parent)
    writer.text(args.out.name, text)
    writer.commit()
    return 0


def _phantom(args: argparse.Namespace) -> int:
    for path in run_phantom(args.out, args.spec, args.seed):
        logger.info("Wrote %s.", path)
    return 0


def _vesselness(args: argparse.Namespace) -> int:
    cfg = None if args.config is None else load_config(args.config).seeds.mfat
    path = run_vesselness(args.input, args.out, cfg, args.brain_mask, args.threads)
    logger.info("Wrote %s.", path)
    return 0


COMMANDS = {
    "segment": _segment,
    "eval": _eval,
    "phantom": _phantom,
    "vesselness": _vesselness,
}


def main_cli(argv: Optional[Sequence[str]] = None) -> int:
    """Run a subcommand and turn failures into exit codes."""
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose, args.quiet)

    try:
        return COMMANDS[args.command](args)
    except (ChivesselError, NotSupportedUnitError) as error:
        sys.stderr.write(_("{app}: error: {error}\n").format(app=APP_NAME, error=error))
        return error.exit_code
