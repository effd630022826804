import sys

from app.cli import add_threads
from app.core.errors import ConfigError
from app.repositories.checkpoint_repo import CheckpointRepository
from app.repositories.dataset_repo import DatasetRepository
from app.use_cases.evaluator import evaluate


def register(subparsers) -> None:
    parser = subparsers.add_parser("evaluate", help="print a MetricsReport for a checkpoint on a dataset")
    parser.add_argument("--checkpoint", required=True)
    parser.add_argument("--data", default=None, help="LTNT dataset")
    parser.add_argument("--images", default=None, help="IDX images (with --labels)")
    parser.add_argument("--labels", default=None, help="IDX labels")
    parser.add_argument("--split", default="eval", help="split name recorded in the report")
    add_threads(parser)
    parser.set_defaults(handler=run)


def load_labeled(args):
    repo = DatasetRepository()
    if args.data:
        return repo.load_native(args.data)
    if args.images and args.labels:
        return repo.load_idx(args.images, args.labels)
    raise ConfigError("evaluate needs --data or both --images and --labels")


def run(args) -> int:
    dataset = load_labeled(args)
    model, _ = CheckpointRepository().load(args.checkpoint)
    report = evaluate(model, dataset, args.split, threads=args.threads)
    sys.stdout.write(report.model_dump_json(indent=2) + "\n")
    return 0
