"""
Run registry listing.
"""

import argparse

from app.database.connection import get_db_session, init_db
from app.services.runs import RunService


def runs(args: argparse.Namespace) -> int:
    """Print archived runs, newest first."""
    init_db()
    with get_db_session() as db:
        service = RunService(db)
        records = service.list_runs(command=args.command_filter, status=args.status, limit=args.limit)
        for record in records:
            started = record.started_at.strftime("%Y-%m-%d %H:%M:%S") if record.started_at else "-"
            print(f"{record.run_id}\t{record.command}\t{record.status}\t{record.seed}\t{started}")
            if args.estimates:
                for estimate in service.get_estimates(record.run_id):
                    print(f"    {estimate.name} = {estimate.value:.10g} +/- {estimate.std_error:.3g} (t={estimate.horizon:g})")
    return 0


def register(subparsers: argparse._SubParsersAction, common: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("runs", parents=[common], help="list archived runs")
    parser.add_argument("--command", dest="command_filter")
    parser.add_argument("--status", choices=("started", "completed", "failed"))
    parser.add_argument("--limit", type=int, default=20)
    parser.add_argument("--estimates", action="store_true", help="also print stored estimates")
    parser.set_defaults(handler=runs)
