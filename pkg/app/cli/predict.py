import sys

import numpy as np

from app.cli import add_threads
from app.repositories.checkpoint_repo import CheckpointRepository
from app.repositories.dataset_repo import DatasetRepository, read_bytes, parse_idx
from app.models.lotenet import predicted_probability
from app.schemas.reports import Prediction


def register(subparsers) -> None:
    parser = subparsers.add_parser("predict", help="print one class/probability line per input image")
    parser.add_argument("--checkpoint", required=True)
    parser.add_argument("--input", required=True, help="LTNT dataset or IDX image file")
    parser.add_argument("--format", choices=["native", "idx"], default="native")
    add_threads(parser)
    parser.set_defaults(handler=run)


def load_images(path, fmt: str) -> np.ndarray:
    if fmt == "native":
        return DatasetRepository().load_native(path).images
    pixels = parse_idx(read_bytes(path), str(path))
    if pixels.ndim == 2:  # a single image without a count axis
        pixels = pixels[None]
    return (pixels.astype(np.float32) / np.float32(255.0))[..., None]


def run(args) -> int:
    images = load_images(args.input, args.format)
    model, _ = CheckpointRepository().load(args.checkpoint)
    labels, probabilities = model.predict(images, threads=args.threads)
    for index, (label, row) in enumerate(zip(labels, probabilities)):
        line = Prediction(index=index, label=int(label), probability=predicted_probability(int(label), row))
        sys.stdout.write(line.model_dump_json() + "\n")
    return 0
