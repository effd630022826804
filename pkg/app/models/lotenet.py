"""The LoTeNet model: squeeze -> per-patch MPS -> batch norm -> unsqueeze, repeated, then a final MPS."""
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from app.core.autodiff import Tape, Variable, stable_sigmoid
from app.core.errors import ConfigError, ShapeMismatchError
from app.core.logging import get_logger
from app.core.settings import settings
from app.core.tensor import Tensor
from app.models.batch_norm import BatchNormState, trace_batch_norm
from app.models.mps import CoreLayout, MpsLayer, core_layout
from app.models.squeeze import pad_to_multiple, padded_extents, squeeze_grid, trace_squeeze, trace_unsqueeze
from app.schemas.config import ModelConfig
from app.schemas.reports import LayerSummary, ModelSummary
from app.services.feature_map import apply_map, feature_dim, site_gain
from app.workers.pool import chunk_ranges, ordered_map

logger = get_logger(__name__)


@dataclass(frozen=True)
class LayerGeometry:
    layer: int  # 1-based; the final block is layer L
    stride: Optional[int]  # None for the final block
    grid: tuple[int, ...]  # patch grid this layer produces (final: grid it consumes)
    blocks: int
    sites_per_block: int
    site_dim: int
    out_dim: int

    @property
    def is_final(self) -> bool:
        return self.stride is None

    def layouts(self, bond_dim: int) -> list[CoreLayout]:
        dims = [self.site_dim] * self.sites_per_block
        position = self.sites_per_block // 2
        return [core_layout(j, dims, bond_dim, self.out_dim, position) for j in range(self.sites_per_block)]


def _require_input_shape(config: ModelConfig) -> list[int]:
    if config.input_shape is None:
        raise ConfigError("model.input_shape is not set; it is filled from the dataset or must be given")
    return list(config.input_shape)


def padded_shape(config: ModelConfig) -> list[int]:
    """Input shape after zero-padding spatial extents to the stride product."""
    *spatial, channels = _require_input_shape(config)
    if not config.pad_to_stride:
        return [*spatial, channels]
    multiple = int(np.prod(config.strides)) if config.strides else 1
    return [*padded_extents(spatial, multiple), channels]


def plan_geometry(config: ModelConfig) -> list[LayerGeometry]:
    *spatial, channels = padded_shape(config)
    channels *= feature_dim(config.feature_map)
    rank = config.spatial_rank
    plan = []
    for layer, stride in enumerate(config.strides, start=1):
        try:
            grid = squeeze_grid(spatial, stride)
        except ShapeMismatchError as error:
            raise ShapeMismatchError(f"layer {layer}: {error}; enable pad_to_stride or change the input") from error
        plan.append(
            LayerGeometry(layer, stride, grid, int(np.prod(grid)), stride**rank, channels, config.virtual_dim)
        )
        spatial, channels = grid, config.virtual_dim
    plan.append(
        LayerGeometry(config.layers, None, tuple(spatial), 1, int(np.prod(spatial)), channels, config.out_dim)
    )
    return plan


def input_scale(config: ModelConfig, geometry: LayerGeometry) -> float:
    """Input-leg weight of noise-free cores so every site contributes a factor of order one.

    The input layer sees mapped pixels (d0 components per image channel);
    later layers see nu-vectors and weight them by their mean.
    """
    if geometry.layer == 1:
        channels = geometry.site_dim // feature_dim(config.feature_map)
        return site_gain(config.feature_map) / channels
    return 1.0 / geometry.site_dim


def _block_cost(layouts: Sequence[CoreLayout]) -> int:
    absorb = sum(layout.site_dim * layout.flat_width for layout in layouts)
    left, out, right = layouts[0].left, layouts[0].out, layouts[0].right
    chain = 0
    for layout in layouts[1:]:
        chain += left * out * right * layout.out * layout.right
        out, right = out * layout.out, layout.right
    return absorb + chain


def forward_cost(config: ModelConfig, batch: int = 1) -> int:
    """Multiply-add count of one forward pass (site absorption plus chain products)."""
    total = 0
    for geometry in plan_geometry(config):
        total += geometry.blocks * _block_cost(geometry.layouts(config.bond_dim))
    return batch * total


def summarize(config: ModelConfig) -> ModelSummary:
    layers = []
    for geometry in plan_geometry(config):
        per_block = sum(layout.size for layout in geometry.layouts(config.bond_dim))
        copies = 1 if geometry.is_final or config.share_weights_per_layer else geometry.blocks
        norm_params = 2 * geometry.out_dim if config.batch_norm and not geometry.is_final else 0
        layers.append(
            LayerSummary(
                layer=geometry.layer,
                stride=geometry.stride,
                grid=list(geometry.grid),
                blocks=geometry.blocks,
                sites_per_block=geometry.sites_per_block,
                site_dim=geometry.site_dim,
                feature_dim=geometry.sites_per_block * geometry.site_dim,
                bond_dim=config.bond_dim,
                out_dim=geometry.out_dim,
                parameters=copies * per_block,
                batch_norm_parameters=norm_params,
            )
        )
    return ModelSummary(
        input_shape=_require_input_shape(config),
        padded_shape=padded_shape(config),
        layers=layers,
        total_parameters=sum(entry.parameters + entry.batch_norm_parameters for entry in layers),
        forward_cost_per_image=forward_cost(config),
    )


class LoTeNetModel:
    """Instantiated LoTeNet parameters plus batch-norm state.

    Parameters are named `layers.{l}.cores.{j}`, `layers.{l}.bn.scale`,
    `layers.{l}.bn.shift` and `final.cores.{j}`, in that declaration order.
    """

    def __init__(
        self,
        config: ModelConfig,
        layers: list[MpsLayer],
        final: MpsLayer,
        norms: list[BatchNormState],
        dtype=np.float64,
    ):
        self.config = config
        self.layers = layers
        self.final = final
        self.norms = norms
        self.dtype = np.dtype(dtype)
        self.geometry = plan_geometry(config)

    @classmethod
    def init(cls, config: ModelConfig, dtype=np.float64) -> "LoTeNetModel":
        rng = np.random.default_rng(config.seed)
        plan = plan_geometry(config)
        layers = [
            MpsLayer.init(
                geometry.blocks,
                geometry.sites_per_block,
                geometry.site_dim,
                config.bond_dim,
                geometry.out_dim,
                rng,
                init_std=config.init_std,
                shared=config.share_weights_per_layer,
                input_scale=input_scale(config, geometry),
            )
            for geometry in plan[:-1]
        ]
        head = plan[-1]
        final = MpsLayer.init(
            1, head.sites_per_block, head.site_dim, config.bond_dim, head.out_dim, rng,
            init_std=config.init_std, shared=True, input_scale=input_scale(config, head),
        )
        norms = [BatchNormState(config.virtual_dim) for _ in layers] if config.batch_norm else []
        model = cls(config, layers, final, norms, dtype)
        model.load_parameters(model.parameters())
        logger.debug(f"Initialized LoTeNet with {model.count_parameters()} parameters")
        return model

    # parameters -----------------------------------------------------------

    def _slots(self):
        for index, layer in enumerate(self.layers, start=1):
            for j in range(len(layer.cores)):
                yield f"layers.{index}.cores.{j}", layer.cores, j
            if self.norms:
                yield f"layers.{index}.bn.scale", self.norms[index - 1], "scale"
                yield f"layers.{index}.bn.shift", self.norms[index - 1], "shift"
        for j in range(len(self.final.cores)):
            yield f"final.cores.{j}", self.final.cores, j

    def parameters(self) -> dict[str, Tensor]:
        params = {}
        for name, owner, key in self._slots():
            params[name] = owner[key] if isinstance(key, int) else getattr(owner, key)
        return params

    def load_parameters(self, params: dict[str, Tensor]) -> None:
        expected = self.parameters()
        missing = set(expected) - set(params)
        unknown = set(params) - set(expected)
        if missing or unknown:
            raise ShapeMismatchError(
                f"parameter names differ: missing {sorted(missing)[:3]}, unknown {sorted(unknown)[:3]}"
            )
        for name, owner, key in self._slots():
            value = params[name]
            if value.shape != expected[name].shape:
                raise ShapeMismatchError(f"{name}: shape {value.shape}, expected {expected[name].shape}")
            value = Tensor(value, dtype=self.dtype)
            if isinstance(key, int):
                owner[key] = value
            else:
                setattr(owner, key, value)

    def buffers(self) -> dict[str, np.ndarray]:
        out = {}
        for index, norm in enumerate(self.norms, start=1):
            out[f"layers.{index}.bn.running_mean"] = norm.running_mean
            out[f"layers.{index}.bn.running_var"] = norm.running_var
        return out

    def load_buffers(self, buffers: dict[str, np.ndarray]) -> None:
        for index, norm in enumerate(self.norms, start=1):
            mean = np.asarray(buffers[f"layers.{index}.bn.running_mean"], dtype=np.float64)
            var = np.asarray(buffers[f"layers.{index}.bn.running_var"], dtype=np.float64)
            if mean.shape != (norm.channels,) or var.shape != (norm.channels,):
                raise ShapeMismatchError(f"layer {index}: running statistics do not match {norm.channels} channels")
            norm.running_mean, norm.running_var = mean.copy(), var.copy()

    def copy(self) -> "LoTeNetModel":
        layers = [
            MpsLayer(
                layer.n_blocks, layer.n_sites, layer.site_dim, layer.bond_dim,
                layer.out_dim, layer.out_position, layer.shared, list(layer.cores),
            )
            for layer in self.layers
        ]
        final = MpsLayer(
            1, self.final.n_sites, self.final.site_dim, self.final.bond_dim,
            self.final.out_dim, self.final.out_position, True, list(self.final.cores),
        )
        return LoTeNetModel(self.config, layers, final, [norm.copy() for norm in self.norms], self.dtype)

    def count_parameters(self) -> int:
        return sum(value.size for value in self.parameters().values())

    def summary(self) -> ModelSummary:
        return summarize(self.config)

    # forward --------------------------------------------------------------

    def prepare(self, images) -> np.ndarray:
        """Pad raw intensities, then apply the local feature map."""
        images = np.asarray(images.numpy() if isinstance(images, Tensor) else images, dtype=np.float64)
        expected = tuple(_require_input_shape(self.config))
        if images.ndim != len(expected) + 1 or images.shape[1:] != expected:
            raise ShapeMismatchError(
                f"input: images of shape {images.shape[1:]} do not match the configured shape {expected}"
            )
        padded = pad_to_multiple(images, 1, target=padded_shape(self.config)[:-1])
        return apply_map(self.config.feature_map, padded).astype(self.dtype, copy=False)

    def trace(
        self,
        tape: Tape,
        images,
        train: bool = False,
        collect: Optional[list] = None,
    ) -> Variable:
        """Forward pass on a tape; returns (batch, M) logits.

        `collect` receives each non-final layer's MPS output (batch, N_l, nu)
        before batch norm.
        """
        x = tape.constant(Tensor(self.prepare(images), dtype=self.dtype))
        batch = x.shape[0]
        scheme = self.config.contraction
        for geometry, layer in zip(self.geometry, self.layers):
            context = f"layer {geometry.layer}"
            try:
                sites = trace_squeeze(tape, x, geometry.stride)
                sites = tape.reshape(sites, (batch, geometry.blocks, geometry.sites_per_block, geometry.site_dim))
                out = layer.trace(tape, sites, prefix=f"layers.{geometry.layer}", scheme=scheme, context=context)
                if collect is not None:
                    collect.append(out.numpy())
                if self.norms:
                    norm = self.norms[geometry.layer - 1]
                    scale = tape.parameter(f"layers.{geometry.layer}.bn.scale", norm.scale)
                    shift = tape.parameter(f"layers.{geometry.layer}.bn.shift", norm.shift)
                    out = trace_batch_norm(tape, out, norm, scale, shift, train)
                x = trace_unsqueeze(tape, out, geometry.grid)
            except ShapeMismatchError as error:
                raise ShapeMismatchError(f"{context}: {error}") from error

        head = self.geometry[-1]
        sites = tape.reshape(x, (batch, 1, head.sites_per_block, head.site_dim))
        out = self.final.trace(tape, sites, prefix="final", scheme=scheme, context=f"layer {head.layer} (final)")
        return tape.reshape(out, (batch, head.out_dim))

    def forward(self, images, train: bool = False) -> Tensor:
        return self.trace(Tape(record=False), images, train=train).value

    def logits(self, images, batch_size: Optional[int] = None, threads: Optional[int] = None) -> np.ndarray:
        """Eval-mode logits, computed in chunks on the worker pool."""
        images = np.asarray(images)
        chunks = chunk_ranges(len(images), batch_size or settings.eval_batch_size)
        parts = ordered_map(lambda bounds: self.forward(images[bounds[0]:bounds[1]]).numpy(), chunks, threads)
        if not parts:
            return np.zeros((0, self.config.out_dim), dtype=self.dtype)
        return np.concatenate(parts, axis=0)

    def predict(self, images, batch_size: Optional[int] = None, threads: Optional[int] = None):
        """Class indices and probabilities; ties go to the lowest class index."""
        return probabilities_from_logits(self.logits(images, batch_size, threads))

    def layer_outputs(self, images) -> list[np.ndarray]:
        collected: list[np.ndarray] = []
        self.trace(Tape(record=False), images, collect=collected)
        return collected


def probabilities_from_logits(logits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(labels, probabilities). M=1 gives P(class 1) and labels 1 only when strictly above 0.5."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.shape[1] == 1:
        positive = stable_sigmoid(logits[:, 0])
        return (positive > 0.5).astype(np.int64), positive[:, None]
    shifted = np.exp(logits - logits.max(axis=1, keepdims=True))
    probabilities = shifted / shifted.sum(axis=1, keepdims=True)
    return np.argmax(probabilities, axis=1).astype(np.int64), probabilities


def predicted_probability(label: int, probabilities: np.ndarray) -> float:
    """Probability attached to the predicted class of one sample."""
    if probabilities.shape[0] == 1:
        return float(probabilities[0] if label == 1 else 1.0 - probabilities[0])
    return float(probabilities[label])
