#!/usr/bin/env python3
"""
afm2lifshitz - Casimir force theory and AFM data comparison

Command-line orchestrator: parses arguments, loads and validates the run
configuration, sets up logging, and dispatches to the subcommand pipelines.
"""

import logging
import sys
import time

# Specific imports
from .afm2lifshitz_args import ArgumentParser
from .afm2lifshitz_commands import EXIT_ERROR, CommandRunner
from .afm2lifshitz_config import ConfigManager
from .afm2lifshitz_logging import setup_console_logging, setup_logging
from .afm2lifshitz_report import ReportGenerator

# Package version
from . import __version__


def main(argv=None):
    """Main application entry point"""
    start_time = time.time()

    try:
        # Parse command line arguments
        arg_parser = ArgumentParser()
        args = arg_parser.parse_args(argv)
        defaults = arg_parser.get_system_defaults(args)
        logging_config = arg_parser.get_logging_config(args)

        # Configuration errors go to stderr until the log file is known
        setup_console_logging(logging_config)

        # Load and validate configuration, flags win
        config_manager = ConfigManager(args.config)
        settings = config_manager.load_config(
            beta=args.beta,
            paper_compat=args.paper_compat,
            workers=args.workers,
            cache_dir=str(args.cache_dir) if args.cache_dir else None,
            metadata=args.metadata,
        )
        if args.grid:
            config_manager.set_grid(args.grid)

        log_file = config_manager.resolve(settings["log_file"]) if settings["log_file"] else defaults["log_file"]
        rotation_config = config_manager.get_logging_rotation_config()
        setup_logging(logging_config, log_file, rotation_config)

        logging.info("=" * 60)
        logging.info("afm2lifshitz session started - Version %s", __version__)
        logging.info("Command: %s", args.command)
        config_manager.log_config_summary()

        if args.write_config:
            config_manager.write_config(args.write_config)

        report = ReportGenerator(defaults["out_dir"], metadata=settings["metadata"])
        runner = CommandRunner(config_manager, report)
        code = runner.run(args.command, args)

        elapsed = time.time() - start_time
        logging.info("Reports: %s", report.summary() or "(none)")
        logging.info("Command %s completed in %.2f seconds (exit code %d)", args.command, elapsed, code)
        logging.info("afm2lifshitz session ended successfully")
        logging.info("=" * 60)
        return code

    except KeyboardInterrupt:
        logging.info("Interrupted by user")
        return EXIT_ERROR
    except Exception as e:
        logging.exception("Critical error: %s", str(e))
        logging.info("afm2lifshitz session ended with error")
        logging.info("=" * 60)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
