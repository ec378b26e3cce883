"""
Geometry of the L×L periodic lattice and its symmetry group C_L² ⋊ D₄.

RULES:
- Sites and displacements are (x1, x2) pairs, all arithmetic mod L
- D₄ acts about the fixed point x0 = (0, 0)
- Fields are stored row-major: values[..., x1, x2]
- Tables are immutable once built
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import torch

from utils.errors import ValidationError


# =====================================================
# GEOMETRY
# =====================================================
@dataclass(frozen=True)
class LatticeGeometry:
    L: int

    def __post_init__(self):
        if not isinstance(self.L, (int, np.integer)) or self.L < 1:
            raise ValidationError(f"Lattice side must be a positive integer, got {self.L!r}")

    @property
    def D(self) -> int:
        return self.L * self.L

    def check_site(self, site) -> tuple[int, int]:
        x1, x2 = site
        if not (0 <= x1 < self.L and 0 <= x2 < self.L):
            raise ValidationError(f"Site {tuple(site)} outside the {self.L}x{self.L} lattice")
        return int(x1), int(x2)

    def site_index(self, site) -> int:
        """Row-major flat index; coordinates wrap periodically."""
        x1, x2 = site
        return (x1 % self.L) * self.L + (x2 % self.L)


# =====================================================
# D₄ POINT OPERATIONS
# =====================================================
def _matmul(a, b):
    return (
        (a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]),
        (a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]),
    )


_IDENTITY = ((1, 0), (0, 1))
_ROTATION = ((0, -1), (1, 0))  # (x1, x2) -> (-x2, x1)
_MIRROR = ((1, 0), (0, -1))    # (x1, x2) -> (x1, -x2)


def _build_point_ops():
    ops = []
    for mirror in (False, True):
        m = _MIRROR if mirror else _IDENTITY
        r = _IDENTITY
        for _ in range(4):
            ops.append(_matmul(r, m))
            r = _matmul(_ROTATION, r)
    return tuple(ops)


# index = rotation_quarter_turns + 4 * mirrored
POINT_OPS = _build_point_ops()
_POINT_INDEX = {op: i for i, op in enumerate(POINT_OPS)}


def _apply_point(point: int, d, L: int) -> tuple[int, int]:
    m = POINT_OPS[point]
    return (
        (m[0][0] * d[0] + m[0][1] * d[1]) % L,
        (m[1][0] * d[0] + m[1][1] * d[1]) % L,
    )


# =====================================================
# GROUP ELEMENTS
# =====================================================
@dataclass(frozen=True)
class GroupElement:
    """x -> P·x + t (mod L): point op about the origin, then translation."""

    translation: tuple = (0, 0)
    point: int = 0

    def __post_init__(self):
        if not 0 <= self.point < len(POINT_OPS):
            raise ValidationError(f"Point op index must lie in 0..7, got {self.point}")
        object.__setattr__(self, "translation", tuple(int(t) for t in self.translation))


IDENTITY = GroupElement()


def compose(g1: GroupElement, g2: GroupElement, geo: LatticeGeometry) -> GroupElement:
    """(g1 g2)(x) = g1(g2(x))."""
    point = _POINT_INDEX[_matmul(POINT_OPS[g1.point], POINT_OPS[g2.point])]
    shifted = _apply_point(g1.point, g2.translation, geo.L)
    translation = (
        (shifted[0] + g1.translation[0]) % geo.L,
        (shifted[1] + g1.translation[1]) % geo.L,
    )
    return GroupElement(translation, point)


def inverse(g: GroupElement, geo: LatticeGeometry) -> GroupElement:
    m = POINT_OPS[g.point]
    transpose = ((m[0][0], m[1][0]), (m[0][1], m[1][1]))
    point = _POINT_INDEX[transpose]
    back = _apply_point(point, g.translation, geo.L)
    return GroupElement(((-back[0]) % geo.L, (-back[1]) % geo.L), point)


def normalize(g: GroupElement, geo: LatticeGeometry) -> GroupElement:
    return GroupElement((g.translation[0] % geo.L, g.translation[1] % geo.L), g.point)


def apply_symmetry(g: GroupElement, site, geo: LatticeGeometry) -> tuple[int, int]:
    site = geo.check_site(site)
    x = _apply_point(g.point, site, geo.L)
    return ((x[0] + g.translation[0]) % geo.L, (x[1] + g.translation[1]) % geo.L)


def enumerate_group(geo: LatticeGeometry) -> list[GroupElement]:
    """All 8·L² elements; blocks of L² translations per point op."""
    return [
        GroupElement((t1, t2), point)
        for point in range(len(POINT_OPS))
        for t1 in range(geo.L)
        for t2 in range(geo.L)
    ]


@lru_cache(maxsize=4096)
def site_permutation(g: GroupElement, geo: LatticeGeometry) -> np.ndarray:
    """src such that (g·φ)[x] = φ[src[x]], i.e. src[x] = g⁻¹(x) as flat indices."""
    g_inv = inverse(g, geo)
    src = np.empty(geo.D, dtype=np.int64)
    for x1 in range(geo.L):
        for x2 in range(geo.L):
            y = apply_symmetry(g_inv, (x1, x2), geo)
            src[geo.site_index((x1, x2))] = geo.site_index(y)
    src.setflags(write=False)
    return src


def apply_symmetry_to_field(g: GroupElement, phi, geo: LatticeGeometry):
    """(g·φ)(x) = φ(g⁻¹x) for a field or a batch of fields (..., L, L)."""
    if tuple(phi.shape[-2:]) != (geo.L, geo.L):
        raise ValidationError(
            f"Field shape {tuple(phi.shape)} does not end in ({geo.L}, {geo.L})"
        )
    src = site_permutation(normalize(g, geo), geo)
    flat = phi.reshape(*phi.shape[:-2], geo.D)
    if isinstance(phi, torch.Tensor):
        moved = flat[..., torch.tensor(src, device=phi.device)]
    else:
        moved = flat[..., src]
    return moved.reshape(phi.shape)


# =====================================================
# ORBITS OF D₄ ON DISPLACEMENTS
# =====================================================
@dataclass(frozen=True)
class OrbitTable:
    L: int
    orbit_id: np.ndarray          # (L, L) int, displacement -> orbit index
    orbit_count: int
    representatives: tuple        # lexicographically smallest member per orbit
    sizes: tuple

    def __hash__(self):
        return hash((self.L, self.orbit_count, self.representatives))

    def __eq__(self, other):
        return (
            isinstance(other, OrbitTable)
            and self.L == other.L
            and np.array_equal(self.orbit_id, other.orbit_id)
        )


@lru_cache(maxsize=64)
def compute_orbits(geo: LatticeGeometry) -> OrbitTable:
    L = geo.L
    canonical = {}
    for d1 in range(L):
        for d2 in range(L):
            images = {_apply_point(p, (d1, d2), L) for p in range(len(POINT_OPS))}
            canonical[(d1, d2)] = min(images)

    representatives = tuple(sorted(set(canonical.values())))
    index = {rep: i for i, rep in enumerate(representatives)}

    orbit_id = np.empty((L, L), dtype=np.int64)
    for d, rep in canonical.items():
        orbit_id[d] = index[rep]
    orbit_id.setflags(write=False)

    sizes = tuple(np.bincount(orbit_id.ravel(), minlength=len(representatives)).tolist())
    return OrbitTable(L, orbit_id, len(representatives), representatives, sizes)


@lru_cache(maxsize=64)
def translation_table(geo: LatticeGeometry) -> OrbitTable:
    """Trivial partition: every displacement is its own class (translation sharing only)."""
    L = geo.L
    orbit_id = np.arange(geo.D, dtype=np.int64).reshape(L, L)
    orbit_id.setflags(write=False)
    reps = tuple((d1, d2) for d1 in range(L) for d2 in range(L))
    return OrbitTable(L, orbit_id, geo.D, reps, (1,) * geo.D)


def orbit_of_pair(x, y, table: OrbitTable) -> int:
    L = table.L
    for site in (x, y):
        if not (0 <= site[0] < L and 0 <= site[1] < L):
            raise ValidationError(f"Site {tuple(site)} outside the {L}x{L} lattice")
    return int(table.orbit_id[(y[0] - x[0]) % L, (y[1] - x[1]) % L])


def origin_orbit(table: OrbitTable) -> int:
    return int(table.orbit_id[0, 0])


def expand_kernel(free, table: OrbitTable):
    """K[d, ...] = free[orbit_id[d], ...]; numpy arrays or (differentiable) tensors."""
    if free.shape[0] != table.orbit_count:
        raise ValidationError(
            f"Expected {table.orbit_count} per-orbit values, got {free.shape[0]}"
        )
    if isinstance(free, torch.Tensor):
        return free[torch.from_numpy(np.array(table.orbit_id)).to(free.device)]
    return np.asarray(free)[table.orbit_id]
