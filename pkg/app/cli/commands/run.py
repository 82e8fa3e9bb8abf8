import argparse
import logging

from app.cli import EXIT_OK
from app.schemas.config_file import fusion_config_from, read_config_file
from app.schemas.fusion_config import LossKind, QDiag
from app.services.engine import init_engine
from app.services.metrics import run_summary
from app.services.storage import read_observations, sidecar, write_diagnostics, write_json

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("run", help="Fuse an observations file with MoE-F")
    parser.add_argument("--experts", required=True, help="Observations CSV t,y,expert_0,...")
    parser.add_argument("--loss", choices=[k.value for k in LossKind])
    parser.add_argument("--lambda", dest="lambda_", type=float, help="Gibbs temperature (> 0)")
    parser.add_argument("--alpha", type=float, help="Perturbation weight in (0, 1)")
    parser.add_argument("--delta", type=float, help="Noise-decay hyperparameter in (0, 1]")
    parser.add_argument("--dt", type=float, help="Drift step size")
    parser.add_argument("--q-diag", dest="q_diag", choices=[d.value for d in QDiag])
    parser.add_argument("--config", help="KEY=VALUE file with engine settings; flags override it")
    parser.add_argument("--parallel", action=argparse.BooleanOptionalAction, default=True,
                        help="Run the per-expert filters on a thread pool")
    parser.add_argument("--out", required=True, help="Diagnostics JSONL to write")
    parser.set_defaults(handler=handle)


def handle(args) -> int:
    values = read_config_file(args.config).fusion if args.config else {}
    cfg = fusion_config_from(values, **{
        "loss": args.loss, "lambda": args.lambda_, "alpha": args.alpha,
        "delta": args.delta, "dt": args.dt, "q_diag": args.q_diag,
    })
    observations = read_observations(args.experts)
    n = observations[0].n if observations else 1
    with init_engine(n, cfg, parallel=args.parallel) as engine:
        outputs = engine.run_stream(observations)
        floor_events = engine.total_floor_events
    write_diagnostics(args.out, outputs)

    summary = run_summary(observations, outputs, cfg, floor_events=floor_events)
    write_json(sidecar(args.out, "summary"), summary)
    if summary.weighted_f1 is not None:
        print(f"weighted F1: {summary.weighted_f1:.4f}")
    print(f"fused cumulative {summary.loss}: {summary.fused_loss:.4f}")
    for i, loss in enumerate(summary.expert_losses):
        print(f"expert_{i} cumulative {summary.loss}: {loss:.4f}")
    return EXIT_OK
