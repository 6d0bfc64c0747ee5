# main.py - Omega Provisioner Entry Point
import sys
from dotenv import load_dotenv

load_dotenv()

from core.logging_setup import setup_logging


def main(argv=None) -> int:
    setup_logging()

    from commands import CommandRegistry
    return CommandRegistry().dispatch(argv)


if __name__ == "__main__":
    sys.exit(main())
