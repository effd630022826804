from app.cli import add_threads, load_run_config, resolve_out_dir
from app.core.logging import get_logger
from app.use_cases.training_run import TrainingRun

logger = get_logger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("train", help="train a model and write best.ltc, history.jsonl, report.json")
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", default=None, help="output directory (overrides output_dir)")
    add_threads(parser)
    parser.set_defaults(handler=run)


def run(args) -> int:
    config = load_run_config(args.config)
    out_dir = resolve_out_dir(args.out, config)
    report = TrainingRun(threads=args.threads).run(config, out_dir)
    logger.info(f"Wrote checkpoint and report to {out_dir} (val accuracy {report.val.accuracy:.4f})")
    return 0
