# commands/base_command.py - Omega Provisioner command base
import argparse
import logging
import sys
from abc import ABC, abstractmethod

from core.errors import InputError, InvariantViolation, SimulationError, VerificationError

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_VERIFY = 2


def report(message: str):
    """Diagnostics go to stderr so stdout stays machine-readable."""
    print(message, file=sys.stderr)


class BaseCommand(ABC):
    """Base class for all CLI commands. Maps failures to the stable exit codes."""

    NAME: str = "undefined"
    HELP: str = ""

    def __init__(self):
        self.name = self.__class__.__name__

    def add_arguments(self, parser: argparse.ArgumentParser):
        pass

    @abstractmethod
    def run(self, args: argparse.Namespace) -> int:
        pass

    def execute(self, args: argparse.Namespace) -> int:
        try:
            return self.run(args)
        except InvariantViolation as e:
            report(f"invariant violated: {e}")
            if e.event is not None:
                report(f"last event: {e.event.to_json()}")
            return EXIT_VERIFY
        except VerificationError as e:
            report(f"verification failed: {e}")
            return EXIT_VERIFY
        except (InputError, SimulationError) as e:
            report(f"error: {e.__class__.__name__}: {e}")
            return EXIT_INPUT
        except Exception as e:
            logging.error(f"{self.name} failed: {e}", exc_info=True)
            report(f"error: unexpected failure in {self.NAME}; see log")
            return EXIT_INPUT
