# commands/history_command.py - history
import os

from commands.base_command import EXIT_OK, BaseCommand
from db.database import get_recent_runs, ledger_path


class HistoryCommand(BaseCommand):
    NAME = "history"
    HELP = "List recent runs from the ledger."

    def add_arguments(self, parser):
        parser.add_argument("--ledger", default=os.getenv("OMEGA_PROVISIONER_LEDGER"), help="SQLite ledger path")
        parser.add_argument("--limit", type=int, default=10)

    def run(self, args) -> int:
        runs = get_recent_runs(limit=args.limit, path=args.ledger)
        if not runs:
            print(f"no runs recorded in {ledger_path(args.ledger)}")
            return EXIT_OK
        for r in runs:
            print(
                f"#{r['id']} {r['created_at'][:19]} {r['scenario']} seed={r['seed']} "
                f"exit={r['exit_code']} events={r['events']} peak_nodes={r['peak_nodes']} "
                f"completed={r['completed_jobs']}"
            )
        return EXIT_OK
