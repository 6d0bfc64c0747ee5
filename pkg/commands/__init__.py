# commands/__init__.py - Omega Provisioner CLI
import argparse
import logging
from typing import List, Optional

from commands.base_command import EXIT_INPUT, EXIT_OK, BaseCommand
from commands.config_command import ValidateCommand
from commands.history_command import HistoryCommand
from commands.plan_command import PlanCommand
from commands.sim_command import CheckCommand, RunCommand


class CommandRegistry:
    """Maps subcommand names to command objects and builds the argparse tree."""

    def __init__(self):
        self.commands = {}
        self._register_commands()

    def _register_commands(self):
        for command in (ValidateCommand(), RunCommand(), PlanCommand(), CheckCommand(), HistoryCommand()):
            self.commands[command.NAME] = command

    def get_command(self, name: str) -> Optional[BaseCommand]:
        return self.commands.get(name)

    def build_parser(self) -> argparse.ArgumentParser:
        parser = argparse.ArgumentParser(
            prog="omega-provisioner",
            description="Demand-driven batch pool provisioner and its cluster simulators.",
        )
        sub = parser.add_subparsers(dest="command", metavar="COMMAND")
        sub.required = True
        for name, command in self.commands.items():
            command.add_arguments(sub.add_parser(name, help=command.HELP, description=command.HELP))
        return parser

    def dispatch(self, argv: Optional[List[str]] = None) -> int:
        parser = self.build_parser()
        try:
            args = parser.parse_args(argv)
        except SystemExit as e:
            # argparse exits 2 on usage errors; 2 is reserved for verification failures
            return EXIT_OK if not e.code else EXIT_INPUT
        logging.debug(f"CommandRegistry: dispatching '{args.command}'")
        return self.get_command(args.command).execute(args)
