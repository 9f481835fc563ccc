"""Walsh phase-plane tiles, bi-tiles, trees, and the size/mass machinery.

A tile pairs a spatial dyadic interval of length 2**-k with a frequency
dyadic interval of length 2**k inside [0, 2**L); its packet is the
L2-normalized Walsh function of the frequency index, supported exactly on the
spatial interval.  Packets of disjoint tiles are exactly orthogonal, which is
what lets every estimate here be tested to machine precision.

Frequencies are integers: a choice function picks an integer frequency per
cell, and tree top frequencies are left endpoints of frequency cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import (
    DyadicInterval,
    GridSet,
    GridSignal,
    cell_width,
    check_resolution,
    lp_norm,
    measure,
)
from .maximal import dyadic_maximal, dyadic_class
from .reports import RatioReport
from .walsh import walsh_analysis, walsh_synthesis, walsh_values, walsh_values_at


@dataclass(frozen=True, order=True)
class FreqInterval:
    """Dyadic frequency interval [index * 2**bits, (index + 1) * 2**bits)."""

    bits: int
    index: int

    def __post_init__(self):
        if self.bits < 0 or self.index < 0:
            raise ValueError("frequency interval needs nonnegative bits and index")

    @property
    def lo(self) -> int:
        return self.index << self.bits

    @property
    def hi(self) -> int:
        return (self.index + 1) << self.bits

    @property
    def length(self) -> int:
        return 1 << self.bits

    def contains(self, other: "FreqInterval") -> bool:
        if other.bits > self.bits:
            return False
        return (other.index >> (self.bits - other.bits)) == self.index

    def contains_point(self, xi: int) -> bool:
        return self.lo <= xi < self.hi


@dataclass(frozen=True, order=True)
class Tile:
    """Spatial scale k, spatial offset n, frequency interval of length 2**k."""

    scale: int
    offset: int
    freq_index: int

    def __post_init__(self):
        if self.scale < 0 or not 0 <= self.offset < (1 << self.scale):
            raise ValueError("bad tile spatial data")
        if self.freq_index < 0:
            raise ValueError("bad tile frequency index")

    @property
    def spatial(self) -> DyadicInterval:
        return DyadicInterval(self.scale, self.offset)

    @property
    def freq(self) -> FreqInterval:
        return FreqInterval(self.scale, self.freq_index)

    def fits(self, resolution: int) -> bool:
        return self.scale <= resolution and self.freq.hi <= (1 << resolution)


@dataclass(frozen=True)
class BiTile:
    """Two frequency-sibling tiles over one spatial interval.

    The frequency interval has length 2**(scale+1); its dyadic children are
    the lower and upper tiles.  The partial order `P <= Q` means the spatial
    interval of P sits inside that of Q while the frequency interval of Q
    sits inside that of P.
    """

    scale: int
    offset: int
    freq_index: int

    def __post_init__(self):
        if self.scale < 0 or not 0 <= self.offset < (1 << self.scale):
            raise ValueError("bad bi-tile spatial data")
        if self.freq_index < 0:
            raise ValueError("bad bi-tile frequency index")

    @property
    def spatial(self) -> DyadicInterval:
        return DyadicInterval(self.scale, self.offset)

    @property
    def freq(self) -> FreqInterval:
        return FreqInterval(self.scale + 1, self.freq_index)

    @property
    def lower(self) -> Tile:
        return Tile(self.scale, self.offset, 2 * self.freq_index)

    @property
    def upper(self) -> Tile:
        return Tile(self.scale, self.offset, 2 * self.freq_index + 1)

    def fits(self, resolution: int) -> bool:
        return self.scale < resolution and self.freq.hi <= (1 << resolution)

    def __le__(self, other: "BiTile") -> bool:
        return other.spatial.contains(self.spatial) and self.freq.contains(other.freq)

    def __lt__(self, other: "BiTile") -> bool:
        return self != other and self <= other

    def __ge__(self, other: "BiTile") -> bool:
        return other <= self

    def __gt__(self, other: "BiTile") -> bool:
        return other < self


def order_interval(lo: BiTile, hi: BiTile) -> list[BiTile]:
    """All bi-tiles P with lo <= P <= hi (one per intermediate scale)."""
    if not lo <= hi:
        return []
    out = []
    for scale in range(hi.scale, lo.scale + 1):
        offset = lo.offset >> (lo.scale - scale)
        freq_index = hi.freq.lo >> (scale + 1)
        out.append(BiTile(scale, offset, freq_index))
    return out


def all_bitiles(resolution: int) -> list[BiTile]:
    out = []
    for scale in range(resolution):
        for offset in range(1 << scale):
            for freq_index in range(1 << (resolution - scale - 1)):
                out.append(BiTile(scale, offset, freq_index))
    return out


@dataclass(frozen=True)
class TileCollection:
    """Finite set of bi-tiles at one resolution, with a convexity flag."""

    resolution: int
    bitiles: frozenset[BiTile]
    convex: bool = False

    def __post_init__(self):
        check_resolution(self.resolution)
        for p in self.bitiles:
            if not p.fits(self.resolution):
                raise ValueError(f"bi-tile {p} does not fit resolution {self.resolution}")

    @classmethod
    def from_bitiles(cls, resolution: int, bitiles, check_convex: bool = True) -> "TileCollection":
        tiles = frozenset(bitiles)
        convex = collection_is_convex(tiles) if check_convex else False
        return cls(resolution, tiles, convex)

    @classmethod
    def all(cls, resolution: int) -> "TileCollection":
        return cls(resolution, frozenset(all_bitiles(resolution)), convex=True)

    @classmethod
    def convex_closure(cls, resolution: int, seed) -> "TileCollection":
        tiles = set(seed)
        grown = True
        while grown:
            grown = False
            pairs = [(p, q) for p in tiles for q in tiles if p <= q]
            for p, q in pairs:
                for mid in order_interval(p, q):
                    if mid not in tiles:
                        tiles.add(mid)
                        grown = True
        return cls(resolution, frozenset(tiles), convex=True)

    def __len__(self) -> int:
        return len(self.bitiles)

    def without(self, removed) -> "TileCollection":
        return TileCollection(self.resolution, self.bitiles - frozenset(removed), self.convex)


def collection_is_convex(bitiles) -> bool:
    tiles = set(bitiles)
    for p in tiles:
        for q in tiles:
            if p <= q:
                for mid in order_interval(p, q):
                    if mid not in tiles:
                        return False
    return True


@dataclass(frozen=True)
class ChoiceFunction:
    """Cellwise constant integer frequency assignment N : cells -> [0, 2**L)."""

    resolution: int
    freqs: np.ndarray = field(repr=False)

    def __post_init__(self):
        check_resolution(self.resolution)
        freqs = np.asarray(self.freqs, dtype=np.int64)
        n = 1 << self.resolution
        if freqs.shape != (n,):
            raise ValueError(f"expected {n} frequency entries, got shape {freqs.shape}")
        if freqs.min(initial=0) < 0 or freqs.max(initial=0) >= n:
            raise ValueError("frequencies must lie in [0, 2**L)")
        object.__setattr__(self, "freqs", freqs)

    @classmethod
    def constant(cls, resolution: int, freq: int) -> "ChoiceFunction":
        return cls(resolution, np.full(1 << resolution, freq, dtype=np.int64))


# ---------------------------------------------------------------------------
# packets and transforms


def walsh_packet(tile: Tile, resolution: int) -> GridSignal:
    """L2-normalized Walsh wave packet of the tile: supported on the spatial
    interval, Walsh spectrum exactly the frequency interval, norm one."""
    if not tile.fits(resolution):
        raise ValueError(f"tile {tile} does not fit resolution {resolution}")
    L = resolution
    k = tile.scale
    values = np.zeros(1 << L, dtype=np.complex128)
    block = walsh_values(tile.freq_index, L - k) * 2.0 ** (k / 2.0)
    values[tile.spatial.cell_slice(L)] = block
    return GridSignal(L, values)


def packet_coefficients(values: np.ndarray, resolution: int, scale: int) -> np.ndarray:
    """coef[n, q] = <values, packet(scale, n, q)> for every offset and tile
    frequency index at the given spatial scale."""
    L, k = resolution, scale
    blocks = np.asarray(values).reshape(1 << k, 1 << (L - k))
    return walsh_analysis(blocks, axis=1) * (2.0 ** (k / 2.0) * cell_width(L))


def packet_synthesis(coeffs: np.ndarray, resolution: int, scale: int) -> np.ndarray:
    """sum over (n, q) of coeffs[n, q] * packet(scale, n, q), as cell values."""
    L, k = resolution, scale
    blocks = walsh_synthesis(np.asarray(coeffs), axis=1) * (2.0 ** (k / 2.0))
    return blocks.reshape(1 << L)


def bitile_key(p: BiTile) -> tuple[int, int, int]:
    """Deterministic total order used wherever bi-tiles are enumerated."""
    return (p.scale, p.offset, p.freq_index)


def _members_by_scale(collection: TileCollection) -> dict[int, list[BiTile]]:
    by_scale: dict[int, list[BiTile]] = {}
    for p in collection.bitiles:
        by_scale.setdefault(p.scale, []).append(p)
    return {k: sorted(v, key=bitile_key) for k, v in sorted(by_scale.items())}


def member_coefficients(collection: TileCollection, f: GridSignal) -> dict[BiTile, complex]:
    """<f, lower-packet of P> for every member, via per-scale fast transforms."""
    if f.resolution != collection.resolution:
        raise ValueError("resolution mismatch")
    out: dict[BiTile, complex] = {}
    for k, members in _members_by_scale(collection).items():
        coef = packet_coefficients(f.values, f.resolution, k)
        for p in members:
            out[p] = complex(coef[p.offset, 2 * p.freq_index])
    return out


def model_sum(f: GridSignal, choice: ChoiceFunction, collection: TileCollection) -> GridSignal:
    """sum over members P of <f, packet(P1)> packet(P2)(x) 1{N(x) in freq(P2)}.

    Each cell can receive at most one term per spatial scale, because the
    choice function pins down a single upper-half frequency interval there.
    """
    L = f.resolution
    if choice.resolution != L or collection.resolution != L:
        raise ValueError("resolution mismatch")
    n_cells = 1 << L
    cells = np.arange(n_cells)
    out = np.zeros(n_cells, dtype=np.complex128)
    for k, members in _members_by_scale(collection).items():
        coef = packet_coefficients(f.values, L, k)
        present = np.zeros((1 << k, 1 << (L - k - 1)), dtype=bool)
        for p in members:
            present[p.offset, p.freq_index] = True
        tile_idx = choice.freqs >> k
        m = tile_idx >> 1
        n = cells >> (L - k)
        valid = ((tile_idx & 1) == 1) & present[n, m]
        if not np.any(valid):
            continue
        u = cells & ((1 << (L - k)) - 1)
        w = walsh_values_at(2 * m[valid] + 1, u[valid], L - k)
        out[valid] += coef[n[valid], 2 * m[valid]] * (2.0 ** (k / 2.0)) * w
    return GridSignal(L, out)


def adjoint_model_sum(g: GridSignal, choice: ChoiceFunction, collection: TileCollection) -> GridSignal:
    """Adjoint of the model sum: sum over P of <g, psi_P> packet(P1), where
    psi_P = packet(P2) restricted to the choice-function preimage."""
    L = g.resolution
    if choice.resolution != L or collection.resolution != L:
        raise ValueError("resolution mismatch")
    n_cells = 1 << L
    cells = np.arange(n_cells)
    out = np.zeros(n_cells, dtype=np.complex128)
    for k, members in _members_by_scale(collection).items():
        present = np.zeros((1 << k, 1 << (L - k - 1)), dtype=bool)
        for p in members:
            present[p.offset, p.freq_index] = True
        tile_idx = choice.freqs >> k
        m = tile_idx >> 1
        n = cells >> (L - k)
        valid = ((tile_idx & 1) == 1) & present[n, m]
        if not np.any(valid):
            continue
        u = cells & ((1 << (L - k)) - 1)
        w = walsh_values_at(2 * m[valid] + 1, u[valid], L - k)
        pair = np.zeros((1 << k, 1 << (L - k - 1)), dtype=np.complex128)
        np.add.at(
            pair,
            (n[valid], m[valid]),
            g.values[valid] * (2.0 ** (k / 2.0)) * w * cell_width(L),
        )
        coef = np.zeros((1 << k, 1 << (L - k)), dtype=np.complex128)
        coef[:, 0::2] = pair
        out += packet_synthesis(coef, L, k)
    return GridSignal(L, out)


# ---------------------------------------------------------------------------
# trees, size and mass


@dataclass(frozen=True)
class Tree:
    """Bi-tiles dominated by one top: spatial intervals inside the top
    interval, top frequency inside every member's frequency interval."""

    top_interval: DyadicInterval
    top_freq: int
    members: frozenset[BiTile]

    def __post_init__(self):
        for p in self.members:
            if not self.top_interval.contains(p.spatial):
                raise ValueError(f"member {p} escapes the top interval")
            if not p.freq.contains_point(self.top_freq):
                raise ValueError(f"top frequency misses member {p}")

    @property
    def top_length(self) -> float:
        return self.top_interval.length

    def two_overlap_members(self) -> frozenset[BiTile]:
        return frozenset(
            p for p in self.members if p.upper.freq.contains_point(self.top_freq)
        )


def _top_tables(members_with_weight) -> dict[DyadicInterval, list[tuple[int, int, float]]]:
    """Group (upper-frequency interval, weight) by every admissible top interval."""
    tables: dict[DyadicInterval, list[tuple[int, int, float]]] = {}
    for p, w in members_with_weight:
        upper = p.upper.freq
        for s in range(p.scale + 1):
            top = p.spatial.ancestor(s)
            tables.setdefault(top, []).append((upper.lo, upper.hi, w))
    return tables


def _sweep_max(entries) -> tuple[float, int]:
    """Max over integer xi of the weight of entries whose interval covers xi,
    and the lowest xi attaining it."""
    events: dict[int, float] = {}
    for lo, hi, w in entries:
        events[lo] = events.get(lo, 0.0) + w
        events[hi] = events.get(hi, 0.0) - w
    best, best_xi, running = 0.0, 0, 0.0
    for xi in sorted(events):
        running += events[xi]
        if running > best:
            best, best_xi = running, xi
    return best, best_xi


def _sweep_first_exceeding(entries, cap: float) -> int | None:
    """Lowest integer xi whose covering weight strictly exceeds the cap."""
    events: dict[int, float] = {}
    for lo, hi, w in entries:
        events[lo] = events.get(lo, 0.0) + w
        events[hi] = events.get(hi, 0.0) - w
    running = 0.0
    for xi in sorted(events):
        running += events[xi]
        if running > cap:
            return xi
    return None


def size(collection: TileCollection, f: GridSignal) -> float:
    """Largest normalized l2 coefficient mass over 2-overlapping trees:
    max over tops (I_T, xi) of ((1/|I_T|) sum over members with spatial
    interval in I_T and xi in the upper frequency half of |<f, P1>|^2)**0.5.
    """
    coeffs = member_coefficients(collection, f)
    weighted = [(p, abs(c) ** 2) for p, c in coeffs.items()]
    best = 0.0
    for top, entries in _top_tables(weighted).items():
        value, _ = _sweep_max(entries)
        best = max(best, value / top.length)
    return math.sqrt(best)


def member_mass_table(collection: TileCollection, e: GridSet, choice: ChoiceFunction) -> dict[BiTile, float]:
    """Per member P: |E ∩ {N in freq(P)} ∩ I_P| / |I_P|."""
    L = collection.resolution
    cells = np.arange(1 << L)
    out: dict[BiTile, float] = {}
    for k, members in _members_by_scale(collection).items():
        counts = np.zeros((1 << k, 1 << (L - k - 1)), dtype=np.int64)
        n = cells >> (L - k)
        t = choice.freqs >> (k + 1)
        np.add.at(counts, (n[e.mask], t[e.mask]), 1)
        for p in members:
            out[p] = counts[p.offset, p.freq_index] * 2.0 ** (k - L)
    return out


def mass(collection: TileCollection, e: GridSet, choice: ChoiceFunction) -> float:
    """max over members of the stopping density |E_P ∩ I_P| / |I_P|."""
    table = member_mass_table(collection, e, choice)
    return max(table.values(), default=0.0)


def size_bound(collection: TileCollection, f: GridSignal) -> float:
    """sup over members of inf over the spatial interval of M f; the computed
    size never exceeds sqrt(L + 1) times this quantity."""
    mf = dyadic_maximal(f).values.real
    best = 0.0
    for p in collection.bitiles:
        best = max(best, float(mf[p.spatial.cell_slice(collection.resolution)].min()))
    return best


def mass_bound(collection: TileCollection, e: GridSet) -> float:
    """sup over members of inf over the spatial interval of M 1_E; the
    computed mass never exceeds this quantity."""
    me = dyadic_maximal(e.indicator()).values.real
    best = 0.0
    for p in collection.bitiles:
        best = max(best, float(me[p.spatial.cell_slice(collection.resolution)].min()))
    return best


# ---------------------------------------------------------------------------
# greedy decompositions


@dataclass
class DecompositionStats:
    initial: float
    threshold: float
    tops_length: float
    trees: int
    counting_constant: float


def _one_overlap_tree(current: set[BiTile], top: DyadicInterval, xi: int) -> set[BiTile]:
    picked = set()
    for p in current:
        if top.contains(p.spatial) and p.freq.contains_point(xi):
            picked.add(p)
    return picked


def size_decompose(
    collection: TileCollection,
    f: GridSignal,
    threshold: float | None = None,
) -> tuple[TileCollection, list[Tree], DecompositionStats]:
    """Split off a forest of trees so the remainder has size at most the
    threshold (default: half the input size).

    Tops exceeding the threshold are selected largest interval first, ties
    leftmost then lowest frequency; each selection removes the full
    1-overlapping tree under its top, which keeps the remainder convex.
    """
    sigma = size(collection, f)
    thr = sigma / 2.0 if threshold is None else threshold
    current = set(collection.bitiles)
    coeffs = member_coefficients(collection, f)
    forest: list[Tree] = []
    tops_length = 0.0

    while True:
        weighted = [(p, abs(coeffs[p]) ** 2) for p in current]
        tables = _top_tables(weighted)
        selection = None
        for top in sorted(tables, key=lambda t: (t.scale, t.offset)):
            xi = _sweep_first_exceeding(tables[top], thr * thr * top.length)
            if xi is not None:
                selection = (top, xi)
                break
        if selection is None:
            break
        top, xi = selection
        removed = _one_overlap_tree(current, top, xi)
        current -= removed
        forest.append(Tree(top, xi, frozenset(removed)))
        tops_length += top.length

    norm_sq = lp_norm(f, 2.0) ** 2
    constant = tops_length * sigma**2 / norm_sq if norm_sq > 0 else 0.0
    stats = DecompositionStats(sigma, thr, tops_length, len(forest), constant)
    return collection.without(collection.bitiles - current), forest, stats


def mass_decompose(
    collection: TileCollection,
    e: GridSet,
    choice: ChoiceFunction,
    threshold: float | None = None,
) -> tuple[TileCollection, list[Tree], DecompositionStats]:
    """Split off trees topped by heavy bi-tiles so the remainder has mass at
    most the threshold (default: half the input mass).

    Heavy bi-tiles are taken largest interval first; removing the full order
    down-set under each selected top keeps the remainder convex and makes the
    selected tops pairwise incomparable, which gives the counting bound
    sum |I_T| <= |E| / threshold exactly.
    """
    table = member_mass_table(collection, e, choice)
    mu = max(table.values(), default=0.0)
    thr = mu / 2.0 if threshold is None else threshold
    current = set(collection.bitiles)
    forest: list[Tree] = []
    tops_length = 0.0

    heavy = sorted(
        (p for p in current if table[p] > thr),
        key=lambda p: (p.scale, p.offset, p.freq_index),
    )
    for top in heavy:
        if top not in current:
            continue
        removed = {p for p in current if p <= top}
        current -= removed
        forest.append(Tree(top.spatial, top.freq.lo, frozenset(removed)))
        tops_length += top.spatial.length

    e_measure = measure(e)
    constant = tops_length * mu / e_measure if e_measure > 0 else 0.0
    stats = DecompositionStats(mu, thr, tops_length, len(forest), constant)
    return collection.without(collection.bitiles - current), forest, stats


@dataclass
class ForestBucket:
    n: int
    m: int
    trees: list[Tree]
    size_cap: float
    mass_cap: float
    tops_length: float
    count_ratio: float


@dataclass
class Decomposition:
    buckets: dict[tuple[int, int], ForestBucket]
    remainder: TileCollection

    def covered(self) -> set[BiTile]:
        out: set[BiTile] = set()
        for bucket in self.buckets.values():
            for tree in bucket.trees:
                out |= tree.members
        return out


def full_decompose(
    collection: TileCollection,
    f: GridSignal,
    e: GridSet,
    choice: ChoiceFunction,
) -> Decomposition:
    """Iterate the size and mass splittings into (n, m) buckets of trees with
    certified caps size <= 2**-n and mass <= 2**-m.

    Bi-tiles with exactly zero size and mass can never be selected (they
    contribute nothing to any pairing) and are returned as the remainder.
    Per bucket the counting ratio sum |I_T| / min(2**(2n) ||f||_2^2, 2**m |E|)
    is recorded.
    """
    current = collection
    buckets: dict[tuple[int, int], ForestBucket] = {}
    norm_sq = lp_norm(f, 2.0) ** 2
    e_measure = measure(e)
    n_prev: int | None = None
    m_prev: int | None = None

    while len(current):
        sigma = size(current, f)
        mu = mass(current, e, choice)
        if sigma == 0.0 and mu == 0.0:
            break
        # classes strictly advance per round (halving guarantees it when the
        # quantity is positive; zero quantities just inherit the next slot)
        n = dyadic_class(sigma) if sigma > 0 else (0 if n_prev is None else n_prev + 1)
        m = dyadic_class(mu) if mu > 0 else (0 if m_prev is None else m_prev + 1)
        if n_prev is not None:
            n = max(n, n_prev + 1)
        if m_prev is not None:
            m = max(m, m_prev + 1)
        trees: list[Tree] = []
        if sigma > 0:
            current, forest, _ = size_decompose(current, f, threshold=2.0 ** -(n + 1))
            trees.extend(forest)
        if mu > 0:
            current, forest, _ = mass_decompose(current, e, choice, threshold=2.0 ** -(m + 1))
            trees.extend(forest)
        tops_length = sum(t.top_length for t in trees)
        cap = min(2.0 ** (2 * n) * norm_sq, 2.0**m * e_measure)
        buckets[(n, m)] = ForestBucket(
            n=n,
            m=m,
            trees=trees,
            size_cap=2.0**-n,
            mass_cap=2.0**-m,
            tops_length=tops_length,
            count_ratio=tops_length / cap if cap > 0 else math.inf,
        )
        n_prev, m_prev = n, m

    return Decomposition(buckets=buckets, remainder=current)


def tree_estimate(
    tree: Tree,
    f: GridSignal,
    e: GridSet,
    choice: ChoiceFunction,
) -> RatioReport:
    """Single tree estimate: the absolute coefficient pairing against
    |I_T| * size(tree) * mass(tree)."""
    L = f.resolution
    as_collection = TileCollection(L, tree.members, convex=False)
    coeffs = member_coefficients(as_collection, f)
    lhs = 0.0
    for p in tree.members:
        psi = walsh_packet(p.upper, L).values.real
        sel = e.mask & (p.upper.freq.lo <= choice.freqs) & (choice.freqs < p.upper.freq.hi)
        pairing = float(np.sum(psi[sel]) * cell_width(L))
        lhs += abs(coeffs[p]) * abs(pairing)
    tree_size = size(as_collection, f)
    tree_mass = mass(as_collection, e, choice)
    rhs = tree.top_length * tree_size * tree_mass
    return RatioReport.from_sides(lhs, rhs, size=tree_size, mass=tree_mass, top_length=tree.top_length)
