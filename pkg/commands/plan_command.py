# commands/plan_command.py - plan
import json
import logging
import os

from core.config import ProvisionerConfig, load_config
from core.errors import InputError
from core.provisioner import PoolSnapshot, reconcile
from core.schemas import load_jobs, load_pods
from commands.base_command import EXIT_OK, BaseCommand

logger = logging.getLogger(__name__)


class PlanCommand(BaseCommand):
    NAME = "plan"
    HELP = "One reconcile pass over given jobs and pods; prints pods to submit per group."

    def add_arguments(self, parser):
        parser.add_argument("--jobs", required=True, help="JSON list of job records")
        parser.add_argument("--pods", required=True, help="JSON list of execute pod records")
        parser.add_argument("--config", default=os.getenv("OMEGA_PROVISIONER_CONFIG"),
                            help="provisioner INI (default: $OMEGA_PROVISIONER_CONFIG)")
        parser.add_argument("--now", type=int, default=0, help="snapshot time in seconds")

    def _config(self, path) -> ProvisionerConfig:
        if not path:
            logger.info("[Provisioner] No config given, planning with defaults")
            return ProvisionerConfig()
        try:
            return load_config(path)
        except OSError as e:
            raise InputError(f"cannot read {path}: {e.strerror}")

    def run(self, args) -> int:
        config = self._config(args.config)
        jobs, pods = load_jobs(args.jobs), load_pods(args.pods)
        try:
            snapshot = PoolSnapshot(jobs=tuple(jobs), pods=tuple(pods), now=args.now)
        except ValueError as e:
            raise InputError(str(e))
        actions = reconcile(snapshot, config)
        print(json.dumps({g.slug: n for g, n in actions.plan.items()}, sort_keys=True))
        return EXIT_OK
