# commands/sim_command.py - run, check
import argparse
import logging
import os

from core.errors import InputError, InvariantViolation
from commands.base_command import EXIT_OK, EXIT_VERIFY, BaseCommand, report
from db.database import log_run
from sim.checker import check_events, parse_event_lines
from sim.harness import FAULTS, Simulation, emit_events, emit_metrics
from sim.scenario import load_scenario

logger = logging.getLogger(__name__)


def _write(path: str, text: str):
    try:
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(text)
    except OSError as e:
        raise InputError(f"cannot write {path}: {e.strerror}")


class RunCommand(BaseCommand):
    NAME = "run"
    HELP = "Run a scenario; write the metrics CSV and the event log."

    def add_arguments(self, parser):
        parser.add_argument("scenario", help="scenario JSON file")
        parser.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        parser.add_argument("--metrics", help="write metrics CSV here")
        parser.add_argument("--events", help="write the JSONL event log here")
        parser.add_argument("--ledger", default=os.getenv("OMEGA_PROVISIONER_LEDGER"),
                            help="record the run in this SQLite ledger")
        parser.add_argument("--inject-fault", choices=FAULTS, default=None, help=argparse.SUPPRESS)

    def run(self, args) -> int:
        scenario = load_scenario(args.scenario)
        sim = Simulation(scenario, seed=args.seed, fault=args.inject_fault)

        exit_code = EXIT_OK
        try:
            records, samples = sim.run()
        except InvariantViolation as e:
            records, samples = sim.log.records, sim.samples
            report(f"invariant violated: {e}")
            if e.event is not None:
                report(f"last event: {e.event.to_json()}")
            exit_code = EXIT_VERIFY
        else:
            violations = check_events(records)
            for v in violations:
                report(f"violation: {v}")
            if violations:
                exit_code = EXIT_VERIFY

        if args.metrics:
            _write(args.metrics, emit_metrics(samples))
        if args.events:
            _write(args.events, emit_events(records))

        peak_nodes = max((s.nodes_total for s in samples), default=0)
        completed = samples[-1].completed_jobs if samples else 0
        print(
            f"{scenario.name} seed={sim.seed} events={len(records)} samples={len(samples)} "
            f"peak_nodes={peak_nodes} completed_jobs={completed}/{sim.pool.submitted} "
            f"pods_submitted={sim.provisioner.total_submitted}"
        )
        if args.ledger:
            log_run(scenario.name, sim.seed, exit_code, len(records), len(samples),
                    peak_nodes, completed, path=args.ledger)
        return exit_code


class CheckCommand(BaseCommand):
    NAME = "check"
    HELP = "Replay an event log through the invariant checks."

    def add_arguments(self, parser):
        parser.add_argument("--events", required=True, help="JSONL event log")

    def run(self, args) -> int:
        try:
            with open(args.events, "r", encoding="utf-8") as f:
                text = f.read()
        except OSError as e:
            raise InputError(f"cannot read {args.events}: {e.strerror}")
        records = parse_event_lines(text)
        violations = check_events(records)
        if violations:
            for v in violations:
                print(v)
            report(f"{len(violations)} violations in {len(records)} events")
            return EXIT_VERIFY
        print(f"ok: {len(records)} events, no violations")
        return EXIT_OK
