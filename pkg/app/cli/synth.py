from pathlib import Path

from app.repositories.dataset_repo import DatasetRepository
from app.schemas.config import SyntheticKind
from app.services.synthetic import gen_synthetic


def register(subparsers) -> None:
    parser = subparsers.add_parser("synth", help="write a synthetic LTNT dataset")
    parser.add_argument("--kind", choices=[kind.value for kind in SyntheticKind], default="blobs2d")
    parser.add_argument("--count", type=int, default=2000)
    parser.add_argument("--size", type=int, default=32)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--noise", type=float, default=0.1)
    parser.add_argument("--out", required=True, help="output .ltnt file")
    parser.add_argument("--float64", action="store_true", help="store f64 pixels instead of f32")
    parser.set_defaults(handler=run)


def run(args) -> int:
    dataset = gen_synthetic(SyntheticKind(args.kind), args.count, args.size, args.seed, args.noise)
    DatasetRepository().save_native(dataset, Path(args.out), float64=args.float64)
    return 0
