"""Seeded generation of simulated device populations with decomposed
mismatch (global / regional / local), spatial placement, and optional
systematic position bias.

Mismatch decomposition. Each cell's static mismatch is

    sigma * (w_g * G_d  +  w_r * R_{d,region}  +  w_l * L_{d,cell})

with independent standard-normal draws: G_d per device, R per (device,
region), L per (device, cell), and w_g^2 + w_r^2 + w_l^2 = 1 so total
variance is sigma^2 for any weight split. Regions joined by an adjacency
edge share half the regional variance: their regional draw becomes
sqrt(0.5) * own + sqrt(0.5) * cluster, where the cluster draw is common to
the adjacency component. The built-in placements use disjoint region pairs,
so "adjacent" and "same component" coincide and two adjacent regions
correlate at exactly w_r^2 / 2 while unrelated regions stay uncorrelated.

Randomness derivation. Every stream is derived from the master seed via
numpy SeedSequence spawn keys (component tag, device index) feeding a
counter-based Philox generator, and each device's vectors are drawn from
the start of its own streams. Results are therefore reproducible
bit-for-bit regardless of generation order or thread count.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Optional

import numpy as np

from .errors import InvalidArgumentError, InvalidSpecError

_TAG_GLOBAL = 1
_TAG_REGIONAL = 2
_TAG_CLUSTER = 3
_TAG_LOCAL = 4

BUILTIN_PLACEMENTS = ("d1", "d2", "d3", "d4")


def _stream(master_seed: int, tag: int, device: int) -> np.random.Generator:
    ss = np.random.SeedSequence(master_seed, spawn_key=(tag, device))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class PlacementConfig:
    """Grid geometry, cell-to-region assignment, and region adjacency."""

    kind: str
    grid_width: int
    grid_height: int
    region_of: tuple  # region id per cell index, row-major
    adjacency: tuple  # undirected edges as sorted (region, region) pairs

    def __post_init__(self):
        n = self.grid_width * self.grid_height
        if self.grid_width <= 0 or self.grid_height <= 0:
            raise InvalidSpecError("grid dimensions must be positive")
        region_of = tuple(int(r) for r in self.region_of)
        if len(region_of) != n:
            raise InvalidSpecError(
                f"region assignment covers {len(region_of)} cells, grid has {n}"
            )
        edges = set()
        for a, b in self.adjacency:
            a, b = int(a), int(b)
            if a == b:
                raise InvalidSpecError("adjacency must be irreflexive")
            edges.add((min(a, b), max(a, b)))
        regions = set(region_of)
        for a, b in edges:
            if a not in regions or b not in regions:
                raise InvalidSpecError(f"adjacency edge ({a}, {b}) names unknown region")
        object.__setattr__(self, "region_of", region_of)
        object.__setattr__(self, "adjacency", tuple(sorted(edges)))

    @property
    def num_cells(self) -> int:
        return self.grid_width * self.grid_height

    def region_sizes(self) -> dict:
        sizes: dict = {}
        for r in self.region_of:
            sizes[r] = sizes.get(r, 0) + 1
        return sizes

    def adjacency_components(self) -> dict:
        """Map each region touched by an edge to a component index.

        Components are connected components of the adjacency graph,
        numbered in order of their smallest region id. Regions with no
        edges are absent (they keep an unshared regional draw).
        """
        neighbors: dict = {}
        for a, b in self.adjacency:
            neighbors.setdefault(a, set()).add(b)
            neighbors.setdefault(b, set()).add(a)
        comp: dict = {}
        idx = 0
        for start in sorted(neighbors):
            if start in comp:
                continue
            stack = [start]
            while stack:
                r = stack.pop()
                if r in comp:
                    continue
                comp[r] = idx
                stack.extend(neighbors[r] - comp.keys())
            idx += 1
        return comp


def builtin_placement(kind: str) -> PlacementConfig:
    """The four built-in 1024-cell placements.

    d1: one 32x32 block, a single region (everything overlaps).
    d2: 32x32 block split into 16 row-pair regions of 64 cells, with
        consecutive regions paired as adjacent.
    d3: 64x16 block, one region per 16-cell row, consecutive rows paired
        as adjacent.
    d4: d3's regions with no adjacency at all (least overlap).
    """
    kind = kind.lower()
    if kind == "d1":
        return PlacementConfig("d1", 32, 32, (0,) * 1024, ())
    if kind == "d2":
        region_of = tuple((i // 32) // 2 for i in range(1024))
        edges = tuple((r, r + 1) for r in range(0, 16, 2))
        return PlacementConfig("d2", 32, 32, region_of, edges)
    if kind in ("d3", "d4"):
        region_of = tuple(i // 16 for i in range(1024))
        edges = tuple((r, r + 1) for r in range(0, 64, 2)) if kind == "d3" else ()
        return PlacementConfig(kind, 16, 64, region_of, edges)
    raise InvalidArgumentError(f"unknown builtin placement {kind!r}")


def regional_overlap_score(placement: PlacementConfig) -> float:
    """Fraction of within-device cell pairs that share a region or sit in
    adjacent regions."""
    n = placement.num_cells
    total_pairs = n * (n - 1) // 2
    sizes = placement.region_sizes()
    same = sum(s * (s - 1) // 2 for s in sizes.values())
    adjacent = sum(sizes[a] * sizes[b] for a, b in placement.adjacency)
    return (same + adjacent) / total_pairs


@dataclass(frozen=True)
class CellParams:
    """Decomposed mismatch draws and placement data of one cell."""

    global_component: float
    regional_component: float
    local_component: float
    position: tuple
    region: int


@dataclass(frozen=True)
class PopulationSpec:
    num_devices: int
    cells_per_device: int
    sigma_mismatch: float
    weights: tuple  # (w_g, w_r, w_l)
    placement: PlacementConfig
    master_seed: int
    bias_map: Optional[dict] = None  # (row, col) -> offset

    def __post_init__(self):
        if self.num_devices <= 0 or self.cells_per_device <= 0:
            raise InvalidSpecError("population sizes must be positive")
        if not (self.sigma_mismatch > 0):
            raise InvalidSpecError("sigma_mismatch must be positive")
        w = tuple(float(x) for x in self.weights)
        if len(w) != 3 or any(x < 0 for x in w):
            raise InvalidSpecError("weights must be three non-negative values")
        if abs(w[0] ** 2 + w[1] ** 2 + w[2] ** 2 - 1.0) > 1e-9:
            raise InvalidSpecError(
                "squared weights must sum to 1 (total variance budget)"
            )
        if self.placement.num_cells != self.cells_per_device:
            raise InvalidSpecError(
                f"placement has {self.placement.num_cells} cells, "
                f"spec declares {self.cells_per_device}"
            )
        if not (0 <= int(self.master_seed) < 2**64):
            raise InvalidSpecError("master_seed must fit in 64 unsigned bits")
        object.__setattr__(self, "weights", w)
        if self.bias_map is not None:
            object.__setattr__(self, "bias_map", dict(self.bias_map))


def _bias_offsets(spec: PopulationSpec) -> np.ndarray:
    offsets = np.zeros(spec.cells_per_device)
    if spec.bias_map:
        _apply_bias_map(offsets, spec.bias_map, spec.placement)
    return offsets


def _apply_bias_map(offsets: np.ndarray, bias_map: dict, placement: PlacementConfig):
    for pos, value in bias_map.items():
        row, col = pos
        if not (0 <= row < placement.grid_height and 0 <= col < placement.grid_width):
            raise InvalidArgumentError(f"bias position {pos} outside grid")
        offsets[row * placement.grid_width + col] = float(value)


class DevicePopulation:
    """Immutable set of simulated devices.

    Component draws are stored per device so regional-correlation
    properties stay checkable; `mismatch` is the weighted combination and
    `bias_offsets` holds the per-position systematic offsets applied at
    readout.
    """

    def __init__(
        self,
        spec: PopulationSpec,
        global_draw: np.ndarray,
        regional: np.ndarray,
        local: np.ndarray,
        bias_offsets: np.ndarray,
    ):
        self.spec = spec
        self.global_draw = global_draw
        self.regional = regional
        self.local = local
        self.bias_offsets = bias_offsets
        w_g, w_r, w_l = spec.weights
        self.mismatch = spec.sigma_mismatch * (
            w_g * global_draw[:, None] + w_r * regional + w_l * local
        )
        for arr in (self.global_draw, self.regional, self.local,
                    self.bias_offsets, self.mismatch):
            arr.setflags(write=False)

    @property
    def num_devices(self) -> int:
        return self.spec.num_devices

    @property
    def cells_per_device(self) -> int:
        return self.spec.cells_per_device

    def cell(self, device: int, index: int) -> CellParams:
        placement = self.spec.placement
        return CellParams(
            global_component=float(self.global_draw[device]),
            regional_component=float(self.regional[device, index]),
            local_component=float(self.local[device, index]),
            position=(index // placement.grid_width, index % placement.grid_width),
            region=placement.region_of[index],
        )


class _RegionTables:
    """Precomputed index arrays mapping cells to regional draw slots."""

    def __init__(self, placement: PlacementConfig):
        region_ids = sorted(set(placement.region_of))
        id_to_slot = {r: k for k, r in enumerate(region_ids)}
        comp_map = placement.adjacency_components()
        self.num_regions = len(region_ids)
        self.num_components = (max(comp_map.values()) + 1) if comp_map else 0
        # per region slot: component index, or -1 for an unshared region
        self.comp_of_slot = np.array(
            [comp_map.get(r, -1) for r in region_ids], dtype=np.int64
        )
        self.slot_of_cell = np.array(
            [id_to_slot[r] for r in placement.region_of], dtype=np.int64
        )

    def regional_per_cell(self, own: np.ndarray, cluster: np.ndarray) -> np.ndarray:
        eff = own.copy()
        shared = self.comp_of_slot >= 0
        if shared.any():
            eff[shared] = np.sqrt(0.5) * own[shared] + np.sqrt(0.5) * cluster[
                self.comp_of_slot[shared]
            ]
        return eff[self.slot_of_cell]


def _device_components(spec: PopulationSpec, device: int, tables: _RegionTables):
    """Draw one device's (global, regional-per-cell, local) vectors."""
    n = spec.cells_per_device
    g = float(_stream(spec.master_seed, _TAG_GLOBAL, device).standard_normal())
    own = _stream(spec.master_seed, _TAG_REGIONAL, device).standard_normal(
        tables.num_regions
    )
    cluster = (
        _stream(spec.master_seed, _TAG_CLUSTER, device).standard_normal(
            tables.num_components
        )
        if tables.num_components
        else np.empty(0)
    )
    regional = tables.regional_per_cell(own, cluster)
    local = _stream(spec.master_seed, _TAG_LOCAL, device).standard_normal(n)
    return g, regional, local


def generate_population(spec: PopulationSpec) -> DevicePopulation:
    """Generate the full population described by spec.

    Identical specs (including seed) produce bit-identical populations;
    distinct master seeds produce statistically independent ones.
    """
    tables = _RegionTables(spec.placement)
    d, n = spec.num_devices, spec.cells_per_device
    global_draw = np.empty(d)
    regional = np.empty((d, n))
    local = np.empty((d, n))
    for dev in range(d):
        g, reg, loc = _device_components(spec, dev, tables)
        global_draw[dev] = g
        regional[dev] = reg
        local[dev] = loc
    return DevicePopulation(spec, global_draw, regional, local, _bias_offsets(spec))


def iter_device_mismatch(spec: PopulationSpec) -> Iterator[np.ndarray]:
    """Yield each device's combined mismatch vector without materializing
    the population; identical values to generate_population(spec).mismatch.

    Zero-weight components are skipped (each component has its own derived
    stream, so skipping one never shifts the draws of another).
    """
    tables = _RegionTables(spec.placement)
    w_g, w_r, w_l = spec.weights
    n = spec.cells_per_device
    for dev in range(spec.num_devices):
        total = np.zeros(n)
        if w_g:
            total += w_g * float(
                _stream(spec.master_seed, _TAG_GLOBAL, dev).standard_normal()
            )
        if w_r:
            own = _stream(spec.master_seed, _TAG_REGIONAL, dev).standard_normal(
                tables.num_regions
            )
            cluster = (
                _stream(spec.master_seed, _TAG_CLUSTER, dev).standard_normal(
                    tables.num_components
                )
                if tables.num_components
                else np.empty(0)
            )
            total += w_r * tables.regional_per_cell(own, cluster)
        if w_l:
            total += w_l * _stream(spec.master_seed, _TAG_LOCAL, dev).standard_normal(n)
        yield spec.sigma_mismatch * total


def inject_position_bias(
    population: DevicePopulation, bias_map: dict
) -> DevicePopulation:
    """Return a population whose listed positions carry the given
    systematic offsets (applied at readout); unlisted positions keep
    their current offsets. The input population is not modified."""
    offsets = population.bias_offsets.copy()
    offsets.setflags(write=True)
    _apply_bias_map(offsets, bias_map, population.spec.placement)
    clone = object.__new__(DevicePopulation)
    clone.spec = replace(population.spec)
    clone.global_draw = population.global_draw
    clone.regional = population.regional
    clone.local = population.local
    clone.mismatch = population.mismatch
    clone.bias_offsets = offsets
    offsets.setflags(write=False)
    return clone
