import json
import logging

from app.cli import EXIT_OK, EXIT_ORACLE_FAILURE, UsageError, u64
from app.services.oracles import run_all

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("oracle-check", help="Run the self-checking oracle suites")
    parser.add_argument("--trials", type=int, default=100, help="Random instances per suite (>= 1)")
    parser.add_argument("--seed", type=u64, default=0)
    parser.set_defaults(handler=handle)


def handle(args) -> int:
    if args.trials < 1:
        raise UsageError(f"--trials must be >= 1, got {args.trials}")
    results = run_all(args.trials, args.seed)
    for result in results:
        print(f"{'PASS' if result.passed else 'FAIL'} {result.name} "
              f"(trials={result.trials}, worst margin={result.worst_margin:.3e})")
    failed = [r for r in results if not r.passed]
    for result in failed:
        print(f"worst instance for {result.name}: {json.dumps(result.worst_instance)}")
    if failed:
        logger.error(f"{len(failed)} oracle suite(s) failed")
        return EXIT_ORACLE_FAILURE
    return EXIT_OK
