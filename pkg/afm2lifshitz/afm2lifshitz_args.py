"""
afm2lifshitz.afm2lifshitz_args - Command line argument parsing

Defines the subcommands and the options shared by all of them, validates
flag values, and derives the logging configuration and default paths.
"""

import argparse
import sys
from pathlib import Path

from .afm2lifshitz_utils import UnitUtils


class ArgumentParser:
    """Command line argument parser for afm2lifshitz"""

    COMMANDS = ("permittivity", "force", "roughness", "calibrate", "stats", "compare")

    def __init__(self):
        self.parser = self._create_parser()

    def _common_options(self) -> argparse.ArgumentParser:
        """Options shared by every subcommand"""
        common = argparse.ArgumentParser(add_help=False)

        common.add_argument("--config", type=Path, help="JSON run configuration")
        common.add_argument("--out", type=Path, help="Output directory for reports (default: ./afm2lifshitz-out)")
        common.add_argument(
            "--grid", type=str, metavar="ZMIN,ZMAX[,N]", help="Separation grid in nm (N points, else grid_pitch_nm)"
        )
        common.add_argument("--beta", type=float, help="Confidence level (default: 0.95)")
        common.add_argument(
            "--paper-compat",
            action="store_true",
            default=None,
            help="Round Student t quantiles to one decimal",
        )
        common.add_argument("--workers", type=int, help="Worker processes for force curves (0: one per CPU)")
        common.add_argument("--cache-dir", type=Path, help="Directory for cached permittivity grids")
        common.add_argument(
            "--metadata", action="store_true", default=None, help="Add version and timestamp headers to reports"
        )
        common.add_argument("--write-config", type=Path, metavar="PATH", help="Write the effective configuration")

        # Log level selection (can be combined with --console)
        level_group = common.add_mutually_exclusive_group()
        level_group.add_argument("--warning", "-w", action="store_true", help="Only warnings and errors to log")
        level_group.add_argument("--debug", action="store_true", help="All debug information to log (very verbose)")

        # Console output control (mutually exclusive)
        console_group = common.add_mutually_exclusive_group()
        console_group.add_argument(
            "--console", action="store_true", help="Display active log level on stderr (can combine with --debug)"
        )
        console_group.add_argument("--quiet", "-q", action="store_true", help="No console output, log file only")
        return common

    def _create_parser(self):
        """Create the argument parser with all subcommands"""
        common = self._common_options()
        parser = argparse.ArgumentParser(
            prog="afm2lifshitz",
            description="Casimir force between a gold sphere and a silicon plate: theory and data comparison",
            formatter_class=argparse.RawDescriptionHelpFormatter,
            epilog="""
Examples:
  afm2lifshitz permittivity --config run.json --out results/
  afm2lifshitz force --config run.json --grid 62.33,349.97,1693 --workers 0
  afm2lifshitz force --config run.json --sensitivity            # Drude ω_p x1.5 check
  afm2lifshitz roughness --config run.json
  afm2lifshitz calibrate --config run.json --console
  afm2lifshitz stats --config run.json --paper-compat
  afm2lifshitz compare --config run.json --beta 0.95 --debug

Exit Codes:
  0               Every variant consistent with the data
  2               A material variant rejected at 70% confidence
  1               Error (validation, numerical failure, interrupted)

Logging Levels:
  (default)       Info, warnings and errors to the log file
  --warning       Only warnings and errors
  --debug         All debug information
  --console       Also show the active log level on stderr
  --quiet         Log file only

Configuration:
  Settings come from the JSON file given with --config; flags win.
  Relative paths in the file are resolved against its directory.
            """,
        )

        parser.add_argument("--version", "-v", action="store_true", help="Show version and exit")

        subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")

        perm = subparsers.add_parser(
            "permittivity", parents=[common], help="ε(iξ) table of configured materials"
        )
        perm.add_argument(
            "--material",
            action="append",
            metavar="NAME",
            help="Material to tabulate (repeatable, default: sphere and plate)",
        )

        force = subparsers.add_parser("force", parents=[common], help="Lifshitz force curve")
        force.add_argument("--variant", type=str, help="Configured variant to compute (default: sphere and plate)")
        force.add_argument(
            "--sensitivity", action="store_true", help="Also report the force change for ω_p scaled by 1.5"
        )

        subparsers.add_parser("roughness", parents=[common], help="Roughness zero levels and correction ratios")
        subparsers.add_parser("calibrate", parents=[common], help="Electrostatic calibration fits")
        subparsers.add_parser("stats", parents=[common], help="Experimental error budget of a campaign")
        subparsers.add_parser("compare", parents=[common], help="Theory versus experiment band comparison")

        return parser

    def parse_args(self, args=None):
        """Parse command line arguments with validation"""
        args = self.parser.parse_args(args)

        if args.version:
            from . import __version__

            print(__version__)
            sys.exit(0)

        if not args.command:
            self.parser.error(f"a command is required: {', '.join(self.COMMANDS)}")

        self._validate_args(args)
        return args

    def _validate_args(self, args):
        """Validate argument values"""
        if args.grid is not None:
            try:
                UnitUtils.parse_grid(args.grid)
            except ValueError as e:
                self.parser.error(f"Parameter [--grid] {e}")

        if args.beta is not None and not 0 < args.beta < 1:
            self.parser.error(f"Parameter [--beta] must be in (0, 1), got: {args.beta}")

        if args.workers is not None:
            if args.workers < 0:
                self.parser.error(f"Parameter [--workers] must be >= 0, got: {args.workers}")

        if args.config is not None and not args.config.exists():
            self.parser.error(f"Parameter [--config] file not found: {args.config}")

    def get_logging_config(self, args):
        """Determine logging configuration from arguments"""
        config = {
            "level": "default",  # default, warning, debug
            "console": False,  # whether to show logs on stderr
            "quiet": False,  # whether to suppress all console output
        }

        if args.debug:
            config["level"] = "debug"
        elif args.warning:
            config["level"] = "warning"

        if args.console:
            config["console"] = True
        elif args.quiet:
            config["quiet"] = True

        return config

    def get_system_defaults(self, args):
        """Output directory and default log location"""
        out_dir = args.out if args.out else Path.cwd() / "afm2lifshitz-out"
        return {
            "out_dir": out_dir,
            "log_file": out_dir / "afm2lifshitz.log",
        }
