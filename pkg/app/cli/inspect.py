import json
import sys

from app.cli import load_run_config
from app.core.errors import ConfigError
from app.models.lotenet import summarize
from app.repositories.checkpoint_repo import CheckpointRepository
from app.repositories.dataset_repo import DatasetRepository
from app.schemas.config import RunConfig
from app.schemas.reports import ModelSummary
from app.use_cases.training_run import resolve_model_config

HEADER = ("layer", "stride", "grid", "blocks", "sites", "site_dim", "bond", "out", "params", "bn_params")


def register(subparsers) -> None:
    parser = subparsers.add_parser("inspect", help="per-layer geometry and parameter counts")
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--checkpoint", default=None)
    source.add_argument("--config", default=None)
    source.add_argument("--config-template", action="store_true", help="print the full default config")
    parser.add_argument("--json", action="store_true", help="print the summary as JSON")
    parser.set_defaults(handler=run)


def format_table(summary: ModelSummary) -> str:
    rows = [HEADER]
    for layer in summary.layers:
        rows.append(
            (
                str(layer.layer),
                "-" if layer.stride is None else str(layer.stride),
                "x".join(str(extent) for extent in layer.grid),
                str(layer.blocks),
                str(layer.sites_per_block),
                str(layer.site_dim),
                str(layer.bond_dim),
                str(layer.out_dim),
                str(layer.parameters),
                str(layer.batch_norm_parameters),
            )
        )
    widths = [max(len(row[column]) for row in rows) for column in range(len(HEADER))]
    lines = ["  ".join(cell.rjust(width) for cell, width in zip(row, widths)) for row in rows]
    lines.append(f"input {summary.input_shape} padded to {summary.padded_shape}")
    lines.append(f"forward multiply-adds per image: {summary.forward_cost_per_image}")
    lines.append(f"total parameters: {summary.total_parameters}")
    return "\n".join(lines)


def summary_from_config(config: RunConfig) -> ModelSummary:
    model_config = config.model
    if model_config.input_shape is None:
        dataset = DatasetRepository().load(config.data)
        if dataset is None:
            raise ConfigError("model.input_shape is unset and no dataset is configured")
        model_config = resolve_model_config(model_config, dataset)
    return summarize(model_config)


def run(args) -> int:
    if args.config_template:
        sys.stdout.write(json.dumps(RunConfig().model_dump(mode="json"), indent=2) + "\n")
        return 0
    if args.checkpoint:
        model, _ = CheckpointRepository().load(args.checkpoint)
        summary = model.summary()
    else:
        summary = summary_from_config(load_run_config(args.config))
    sys.stdout.write((summary.model_dump_json(indent=2) if args.json else format_table(summary)) + "\n")
    return 0
