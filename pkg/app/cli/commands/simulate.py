import logging

from app.cli import EXIT_OK, u64
from app.exceptions import ConfigError, FileFormatError
from app.schemas.config_file import read_config_file, scenario_from
from app.services.simulator import synthesize
from app.services.storage import sidecar, write_json, write_observations, write_truth

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("simulate", help="Generate a synthetic regime-switching stream")
    parser.add_argument("--scenario", required=True, help="KEY=VALUE scenario file")
    parser.add_argument("--seed", type=u64, help="Overrides the scenario's seed")
    parser.add_argument("--out", required=True, help="Observations CSV to write")
    parser.add_argument("--truth", help="Optional t,active_expert CSV of the hidden chain")
    parser.set_defaults(handler=handle)


def handle(args) -> int:
    try:
        scenario = scenario_from(read_config_file(args.scenario).scenario, seed=args.seed)
    except ConfigError as e:
        raise FileFormatError(f"invalid scenario: {e}", path=args.scenario) from e

    path = synthesize(scenario)
    write_observations(args.out, path.observations)
    if args.truth:
        write_truth(args.truth, [obs.t for obs in path.observations], path.hidden)
    write_json(sidecar(args.out, "meta"), {
        "generator": path.generator,
        "seed": path.seed,
        "n_experts": scenario.n_experts,
        "experts": [e.describe() for e in scenario.experts],
        "t_max": scenario.t_max,
        "dt": scenario.dt,
        "target": scenario.target.value,
    })
    return EXIT_OK
