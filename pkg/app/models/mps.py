"""Matrix product state blocks.

Core storage follows the chain's index structure: boundary cores are (d, beta),
interior cores (beta, d, beta), the output core carries an extra out leg
(beta, d, out, beta) and drops a bond leg when it sits on a boundary. For
contraction every core is viewed canonically as (d, left, out, right) with
size-1 legs where a leg is absent.

Layers hold the cores of all their blocks stacked along a leading block axis
(or unstacked when the layer shares one block across patches). Intermediate
values keep the layout (blocks, batch, ...) so that the chain reduces with
batched matrix products.
"""
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence, Union

import numpy as np

from app.core.autodiff import Tape, Variable
from app.core.errors import ConfigError, NonFiniteError, ReconstructionCapError, ShapeMismatchError
from app.core.settings import settings
from app.core.tensor import Tensor
from app.schemas.config import ContractionScheme

CANONICAL = ("i", "l", "m", "r")


@dataclass(frozen=True)
class CoreLayout:
    labels: tuple[str, ...]
    site_dim: int
    left: int
    out: int
    right: int

    @property
    def extents(self) -> dict[str, int]:
        return {"i": self.site_dim, "l": self.left, "m": self.out, "r": self.right}

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.extents[label] for label in self.labels)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def present(self) -> tuple[str, ...]:
        return tuple(label for label in CANONICAL if label in self.labels)

    @property
    def to_canonical(self) -> tuple[int, ...]:
        """Permutation taking stored axes to canonical (i, l, m, r) order."""
        return tuple(self.labels.index(label) for label in self.present)

    @property
    def flat_width(self) -> int:
        return self.left * self.out * self.right


def core_layout(position: int, site_dims: Sequence[int], bond_dim: int, out_dim: int, out_position: int) -> CoreLayout:
    n_sites = len(site_dims)
    has_out = position == out_position
    has_left = position > 0
    has_right = position < n_sites - 1
    if n_sites == 1:
        labels = ("i", "m")
    elif not has_left:
        labels = ("i", "m", "r") if has_out else ("i", "r")
    elif not has_right:
        labels = ("l", "i", "m") if has_out else ("i", "l")
    else:
        labels = ("l", "i", "m", "r") if has_out else ("l", "i", "r")
    return CoreLayout(
        labels=labels,
        site_dim=site_dims[position],
        left=bond_dim if has_left else 1,
        out=out_dim if has_out else 1,
        right=bond_dim if has_right else 1,
    )


def identity_core(layout: CoreLayout, input_scale: float = 1.0) -> np.ndarray:
    """Bond identity broadcast over the input and output legs, in stored layout.

    Every input component carries weight `input_scale`, so a noise-free chain
    returns the product over sites of input_scale * sum(x_j).
    """
    canonical = np.broadcast_to(
        input_scale * np.eye(layout.left, layout.right)[None, :, None, :],
        (layout.site_dim, layout.left, layout.out, layout.right),
    )
    present = layout.present
    squeezed = canonical.reshape([layout.extents[label] for label in present])
    return np.ascontiguousarray(np.transpose(squeezed, [present.index(label) for label in layout.labels]))


def validate_geometry(site_dims: Sequence[int], bond_dim: int, out_dim: int, out_position: int) -> None:
    if not site_dims or any(dim < 1 for dim in site_dims):
        raise ConfigError(f"site dims must be positive and non-empty, got {list(site_dims)}")
    if bond_dim < 1 or out_dim < 1:
        raise ConfigError(f"bond_dim and out_dim must be >= 1, got {bond_dim}, {out_dim}")
    if not 0 <= out_position < len(site_dims):
        raise ConfigError(f"out_position {out_position} outside 0..{len(site_dims) - 1}")


@dataclass
class _ChainPiece:
    value: Variable  # (blocks, batch, left * out * right)
    left: int
    out: int
    right: int


def _combine(tape: Tape, a: _ChainPiece, b: _ChainPiece) -> _ChainPiece:
    blocks, batch = a.value.shape[:2]
    left = tape.reshape(a.value, (blocks, batch, a.left * a.out, a.right))
    right = tape.reshape(b.value, (blocks, batch, b.left, b.out * b.right))
    product = tape.matmul(left, right)
    merged = tape.reshape(product, (blocks, batch, a.left * a.out * b.out * b.right))
    return _ChainPiece(merged, a.left, a.out * b.out, b.right)


def contract_chain(
    tape: Tape,
    sites: Sequence[Variable],
    cores: Sequence[Variable],
    layouts: Sequence[CoreLayout],
    scheme: ContractionScheme = ContractionScheme.PARALLEL,
    stacked: bool = True,
    context: str = "block",
) -> Variable:
    """Contract per-site inputs (blocks, batch, d_j) through a chain of cores.

    Each site vector is first absorbed into its core, leaving one matrix per
    site; the matrices are then multiplied pairwise (parallel) or left to
    right (sequential). Returns (blocks, batch, out).
    """
    lead = 1 if stacked else 0
    pieces = []
    for j, (site, core, layout) in enumerate(zip(sites, cores, layouts)):
        try:
            perm = layout.to_canonical
            if perm != tuple(range(len(perm))):
                core = tape.permute(core, tuple(range(lead)) + tuple(axis + lead for axis in perm))
            core = tape.reshape(core, core.shape[:lead] + (layout.site_dim, layout.flat_width))
            absorbed = tape.matmul(site, core)
        except NonFiniteError as error:
            raise NonFiniteError(f"{context} site {j}: {error}") from error
        pieces.append(_ChainPiece(absorbed, layout.left, layout.out, layout.right))

    scheme = ContractionScheme(scheme)
    try:
        if scheme is ContractionScheme.PARALLEL:
            while len(pieces) > 1:
                reduced = [_combine(tape, pieces[k], pieces[k + 1]) for k in range(0, len(pieces) - 1, 2)]
                if len(pieces) % 2:
                    reduced.append(pieces[-1])
                pieces = reduced
        else:
            while len(pieces) > 1:
                pieces = [_combine(tape, pieces[0], pieces[1])] + pieces[2:]
    except NonFiniteError as error:
        raise NonFiniteError(f"{context} chain reduction: {error}") from error
    return pieces[0].value


@dataclass
class MpsBlock:
    """A single MPS: n cores contracting n site vectors into an out_dim vector."""

    site_dims: list[int]
    bond_dim: int
    out_dim: int
    out_position: int
    cores: list[Tensor]

    def __post_init__(self) -> None:
        validate_geometry(self.site_dims, self.bond_dim, self.out_dim, self.out_position)
        if len(self.cores) != self.n_sites:
            raise ShapeMismatchError(f"{len(self.cores)} cores for {self.n_sites} sites")
        for j, (core, layout) in enumerate(zip(self.cores, self.layouts)):
            if core.shape != layout.shape:
                raise ShapeMismatchError(f"core {j} has shape {core.shape}, expected {layout.shape}")

    @classmethod
    def init(
        cls,
        n_sites: int,
        site_dims: Union[int, Sequence[int]],
        bond_dim: int,
        out_dim: int,
        out_position: Optional[int] = None,
        seed: int = 0,
        init_std: float = 1e-2,
        input_scale: float = 1.0,
    ) -> "MpsBlock":
        if n_sites < 1:
            raise ConfigError(f"n_sites must be >= 1, got {n_sites}")
        dims = [site_dims] * n_sites if isinstance(site_dims, int) else list(site_dims)
        if len(dims) != n_sites:
            raise ConfigError(f"{len(dims)} site dims given for {n_sites} sites")
        position = n_sites // 2 if out_position is None else out_position
        validate_geometry(dims, bond_dim, out_dim, position)
        rng = np.random.default_rng(seed)
        cores = []
        for j in range(n_sites):
            layout = core_layout(j, dims, bond_dim, out_dim, position)
            cores.append(Tensor(identity_core(layout, input_scale) + rng.normal(0.0, init_std, layout.shape)))
        return cls(dims, bond_dim, out_dim, position, cores)

    @property
    def n_sites(self) -> int:
        return len(self.site_dims)

    @cached_property
    def layouts(self) -> list[CoreLayout]:
        return [
            core_layout(j, self.site_dims, self.bond_dim, self.out_dim, self.out_position)
            for j in range(self.n_sites)
        ]

    def param_count(self) -> int:
        return sum(core.size for core in self.cores)

    def _site_inputs(self, sites) -> list[np.ndarray]:
        if isinstance(sites, (Tensor, np.ndarray)):
            array = sites.numpy() if isinstance(sites, Tensor) else np.asarray(sites)
            if array.ndim != 3 or array.shape[1] != self.n_sites:
                raise ShapeMismatchError(f"sites must be (batch, {self.n_sites}, d), got {array.shape}")
            per_site = [array[:, j, :] for j in range(self.n_sites)]
        else:
            per_site = [site.numpy() if isinstance(site, Tensor) else np.asarray(site) for site in sites]
        if len(per_site) != self.n_sites:
            raise ShapeMismatchError(f"{len(per_site)} site inputs for {self.n_sites} sites")
        for j, (site, dim) in enumerate(zip(per_site, self.site_dims)):
            if site.ndim != 2 or site.shape[1] != dim:
                raise ShapeMismatchError(f"site {j}: expected (batch, {dim}), got {site.shape}")
        return per_site

    def trace(
        self,
        tape: Tape,
        sites,
        scheme: ContractionScheme = ContractionScheme.PARALLEL,
        prefix: str = "block",
    ) -> Variable:
        """Forward on a tape, registering every core as a parameter; (batch, out)."""
        site_vars = [tape.constant(Tensor(site[None])) for site in self._site_inputs(sites)]
        core_vars = [tape.parameter(f"{prefix}.cores.{j}", core) for j, core in enumerate(self.cores)]
        out = contract_chain(tape, site_vars, core_vars, self.layouts, scheme, stacked=False, context=prefix)
        return tape.reshape(out, out.shape[1:])

    def forward(self, sites, scheme: ContractionScheme = ContractionScheme.PARALLEL) -> Tensor:
        return self.trace(Tape(record=False), sites, scheme).value

    def canonical_cores(self) -> list[np.ndarray]:
        """Cores as (d, left, out, right) arrays."""
        return [
            np.transpose(core.numpy(), layout.to_canonical).reshape(
                layout.site_dim, layout.left, layout.out, layout.right
            )
            for core, layout in zip(self.cores, self.layouts)
        ]

    def reconstruct_weight_tensor(self, cap: Optional[int] = None) -> Tensor:
        """Materialize W with shape site_dims ++ (out_dim) by summing every bond index."""
        cap = settings.reconstruct_cap if cap is None else cap
        size = int(np.prod(self.site_dims)) * self.out_dim
        if size > cap:
            raise ReconstructionCapError(f"weight tensor of {size} elements exceeds the cap of {cap}")
        canonical = self.canonical_cores()
        weight = canonical[0][:, 0]  # (d_0, out_0, right_0)
        for j, core in enumerate(canonical[1:], start=1):
            joined = np.tensordot(weight, core, axes=([-1], [1]))  # (d_0..d_{j-1}, m, d_j, m_j, r_j)
            order = list(range(j)) + [j + 1, j, j + 2, j + 3]
            joined = np.transpose(joined, order)
            weight = joined.reshape(*joined.shape[: j + 1], -1, joined.shape[-1])
        return Tensor(weight[..., 0])


@dataclass
class MpsLayer:
    """All MPS blocks of one layer, stacked along a leading block axis."""

    n_blocks: int
    n_sites: int
    site_dim: int
    bond_dim: int
    out_dim: int
    out_position: int
    shared: bool
    cores: list[Tensor] = field(default_factory=list)

    @classmethod
    def init(
        cls,
        n_blocks: int,
        n_sites: int,
        site_dim: int,
        bond_dim: int,
        out_dim: int,
        rng: np.random.Generator,
        init_std: float = 1e-2,
        shared: bool = False,
        out_position: Optional[int] = None,
        input_scale: float = 1.0,
    ) -> "MpsLayer":
        position = n_sites // 2 if out_position is None else out_position
        layer = cls(n_blocks, n_sites, site_dim, bond_dim, out_dim, position, shared)
        lead = () if shared else (n_blocks,)
        for layout in layer.layouts:
            noise = rng.normal(0.0, init_std, lead + layout.shape)
            layer.cores.append(Tensor(identity_core(layout, input_scale) + noise))
        return layer

    @cached_property
    def layouts(self) -> list[CoreLayout]:
        validate_geometry([self.site_dim] * self.n_sites, self.bond_dim, self.out_dim, self.out_position)
        dims = [self.site_dim] * self.n_sites
        return [core_layout(j, dims, self.bond_dim, self.out_dim, self.out_position) for j in range(self.n_sites)]

    def block(self, position: int) -> MpsBlock:
        """The block applied to patch `position` (the shared block when shared)."""
        cores = [core if self.shared else Tensor(core.numpy()[position]) for core in self.cores]
        return MpsBlock([self.site_dim] * self.n_sites, self.bond_dim, self.out_dim, self.out_position, cores)

    def param_count(self) -> int:
        return sum(core.size for core in self.cores)

    def block_param_count(self) -> int:
        return sum(layout.size for layout in self.layouts)

    def trace(
        self,
        tape: Tape,
        sites: Variable,
        prefix: str,
        scheme: ContractionScheme = ContractionScheme.PARALLEL,
        context: str = "layer",
    ) -> Variable:
        """(batch, blocks, n_sites, d) -> (batch, blocks, out)."""
        batch, blocks, n_sites, site_dim = sites.shape
        if (blocks, n_sites, site_dim) != (self.n_blocks, self.n_sites, self.site_dim):
            raise ShapeMismatchError(
                f"{context}: sites {sites.shape[1:]} do not match blocks x sites x d "
                f"{(self.n_blocks, self.n_sites, self.site_dim)}"
            )
        by_site = tape.permute(sites, (2, 1, 0, 3))  # (n_sites, blocks, batch, d)
        site_vars = [tape.index(by_site, 0, j) for j in range(n_sites)]
        core_vars = [tape.parameter(f"{prefix}.cores.{j}", core) for j, core in enumerate(self.cores)]
        out = contract_chain(tape, site_vars, core_vars, self.layouts, scheme, stacked=not self.shared, context=context)
        return tape.permute(out, (1, 0, 2))
