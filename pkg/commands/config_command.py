# commands/config_command.py - validate
from core.config import describe, load_config, render_ini
from core.errors import InputError
from commands.base_command import EXIT_OK, BaseCommand


class ValidateCommand(BaseCommand):
    NAME = "validate"
    HELP = "Parse a provisioner INI file and print it with every default filled in."

    def add_arguments(self, parser):
        parser.add_argument("config_path", help="provisioner INI file")

    def run(self, args) -> int:
        try:
            config = load_config(args.config_path)
        except OSError as e:
            raise InputError(f"cannot read {args.config_path}: {e.strerror}")
        print(render_ini(config), end="")
        for line in describe(config):
            print(line)
        return EXIT_OK
