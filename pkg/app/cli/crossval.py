from app.cli import add_threads, load_run_config, resolve_out_dir
from app.use_cases.cross_validation import CrossValidation
from app.use_cases.training_run import write_json


def register(subparsers) -> None:
    parser = subparsers.add_parser("crossval", help="k-fold training/evaluation, writes crossval.json")
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", default=None)
    parser.add_argument("--folds", type=int, default=5)
    parser.add_argument("--val-fraction", type=float, default=0.2)
    add_threads(parser)
    parser.set_defaults(handler=run)


def run(args) -> int:
    config = load_run_config(args.config)
    out_dir = resolve_out_dir(args.out, config)
    report = CrossValidation(threads=args.threads).run(config, k=args.folds, val_fraction=args.val_fraction)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(out_dir / "crossval.json", report.model_dump(mode="json"))
    return 0
