"""
Lattice vectors, neighbourhoods and random-walk kernels.

A neighbourhood is a finite step set N on Z^d that excludes the origin, is
symmetric, generates Z^d and has isotropic second moments:
sum_z z_i z_j / |N| = delta_ij * sigma2. A walk kernel is a probability on
such a set with covariance sigma2 * I. All axiom checks are exact.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Mapping, Optional

import numpy as np

from app.errors import (
    AnisotropicCovariance,
    ContainsOrigin,
    KernelAxiomError,
    NotAProbability,
    NotIrreducible,
    NotSymmetric,
)

LatticeVector = tuple[int, ...]

# |N| + 1 sites are simulated jointly by the coalescing module
MAX_CLOSED_SITES = 25

# Largest denominator accepted when converting float weights to exact rationals
WEIGHT_DENOMINATOR_LIMIT = 10**9


def origin(dim: int) -> LatticeVector:
    return (0,) * dim


def add(x: LatticeVector, y: LatticeVector) -> LatticeVector:
    return tuple(a + b for a, b in zip(x, y))


def sub(x: LatticeVector, y: LatticeVector) -> LatticeVector:
    return tuple(a - b for a, b in zip(x, y))


def neg(x: LatticeVector) -> LatticeVector:
    return tuple(-a for a in x)


def sup_norm(x: LatticeVector) -> int:
    return max((abs(a) for a in x), default=0)


def _generated_index(vectors: list[LatticeVector], dim: int) -> int:
    """
    Index of the subgroup generated by vectors in Z^dim (0 if rank < dim).

    Integer row reduction to echelon form; the index is the absolute product
    of the pivots.
    """
    rows = [list(v) for v in vectors]
    pivot_row = 0
    index = 1
    for col in range(dim):
        while True:
            candidates = [r for r in range(pivot_row, len(rows)) if rows[r][col] != 0]
            if not candidates:
                return 0
            best = min(candidates, key=lambda r: abs(rows[r][col]))
            rows[pivot_row], rows[best] = rows[best], rows[pivot_row]
            pivot = rows[pivot_row][col]
            done = True
            for r in range(pivot_row + 1, len(rows)):
                if rows[r][col] != 0:
                    q = rows[r][col] // pivot
                    rows[r] = [a - q * b for a, b in zip(rows[r], rows[pivot_row])]
                    if rows[r][col] != 0:
                        done = False
            if done:
                break
        index *= abs(rows[pivot_row][col])
        pivot_row += 1
    return index


def _second_moments(weighted: Iterable[tuple[LatticeVector, Fraction]], dim: int) -> list[list[Fraction]]:
    moments = [[Fraction(0)] * dim for _ in range(dim)]
    for z, w in weighted:
        for i in range(dim):
            for j in range(dim):
                moments[i][j] += w * z[i] * z[j]
    return moments


def _check_isotropic(moments: list[list[Fraction]]) -> Fraction:
    dim = len(moments)
    diagonal = moments[0][0]
    for i in range(dim):
        for j in range(dim):
            expected = diagonal if i == j else Fraction(0)
            if moments[i][j] != expected:
                raise AnisotropicCovariance(witness={"entry": (i + 1, j + 1), "value": str(moments[i][j])})
    return diagonal


@dataclass(frozen=True)
class Neighbourhood:
    """Validated symmetric, irreducible, isotropic step set."""

    dim: int
    sites: tuple[LatticeVector, ...]
    sigma2: Fraction

    def __len__(self) -> int:
        return len(self.sites)

    @cached_property
    def index(self) -> dict[LatticeVector, int]:
        """Bit position of each site in subset-indexed tables."""
        return {z: i for i, z in enumerate(self.sites)}

    @property
    def closed(self) -> tuple[LatticeVector, ...]:
        """N-bar = {0} followed by the sites of N."""
        return (origin(self.dim),) + self.sites

    @property
    def full_mask(self) -> int:
        return (1 << len(self.sites)) - 1

    def subset(self, mask: int) -> tuple[LatticeVector, ...]:
        """Sites of N selected by a bitmask."""
        return tuple(z for i, z in enumerate(self.sites) if mask >> i & 1)

    def mask_of(self, subset: Iterable[LatticeVector]) -> int:
        mask = 0
        for z in subset:
            mask |= 1 << self.index[z]
        return mask


@dataclass(frozen=True)
class WalkKernel:
    """Symmetric irreducible random-walk kernel with covariance sigma2 * I."""

    neighbourhood: Neighbourhood
    weights: Mapping[LatticeVector, Fraction] = field(hash=False)
    sigma2: Fraction

    @property
    def dim(self) -> int:
        return self.neighbourhood.dim

    def weight(self, z: LatticeVector) -> Fraction:
        return self.weights.get(z, Fraction(0))

    @cached_property
    def support(self) -> tuple[LatticeVector, ...]:
        return tuple(z for z in self.neighbourhood.sites if self.weight(z) > 0)

    @cached_property
    def min_weight(self) -> float:
        """p-underbar: the smallest positive kernel weight."""
        return float(min(self.weights[z] for z in self.support))

    @cached_property
    def steps(self) -> np.ndarray:
        """Support vectors as an int64 array of shape (|support|, dim)."""
        return np.array(self.support, dtype=np.int64)

    @cached_property
    def probabilities(self) -> np.ndarray:
        return np.array([float(self.weights[z]) for z in self.support])

    @cached_property
    def max_step(self) -> int:
        """Largest sup-norm of a support vector."""
        return max(sup_norm(z) for z in self.support)

    @cached_property
    def weight_vector(self) -> np.ndarray:
        """Weights over the full neighbourhood ordering (zeros off-support)."""
        return np.array([float(self.weight(z)) for z in self.neighbourhood.sites])

    def support_mass(self, subset: Iterable[LatticeVector]) -> Fraction:
        """p(A) = sum of kernel weights over A."""
        return sum((self.weight(z) for z in subset), Fraction(0))


def validate_neighbourhood(dim: int, sites: Iterable[Iterable[int]]) -> Neighbourhood:
    """
    Validate a step set against the neighbourhood axioms.

    Args:
        dim: Lattice dimension d >= 2
        sites: Finite collection of integer vectors of length d

    Returns:
        Neighbourhood with exact sigma2 = sum z_1^2 / |N|

    Raises:
        ContainsOrigin, NotSymmetric, NotIrreducible, AnisotropicCovariance,
        KernelAxiomError (dimension, size or shape problems)
    """
    if dim < 2:
        raise KernelAxiomError(f"Dimension must be at least 2, got {dim}")
    vectors = sorted({tuple(int(c) for c in z) for z in sites})
    if not vectors:
        raise KernelAxiomError("Neighbourhood must be nonempty")
    if any(len(z) != dim for z in vectors):
        raise KernelAxiomError(f"All sites must have {dim} coordinates")
    if origin(dim) in vectors:
        raise ContainsOrigin()
    site_set = set(vectors)
    for z in vectors:
        if neg(z) not in site_set:
            raise NotSymmetric(witness=z)
    if _generated_index(vectors, dim) != 1:
        raise NotIrreducible()
    uniform = Fraction(1, len(vectors))
    sigma2 = _check_isotropic(_second_moments(((z, uniform) for z in vectors), dim))
    if len(vectors) + 1 > MAX_CLOSED_SITES:
        raise KernelAxiomError(f"|N-bar| = {len(vectors) + 1} exceeds the supported {MAX_CLOSED_SITES}")
    # symmetric and origin-free already force an even count
    assert len(vectors) % 2 == 0 and len(vectors) >= 2 * dim
    return Neighbourhood(dim=dim, sites=tuple(vectors), sigma2=sigma2)


def kernel_uniform(nbhd: Neighbourhood) -> WalkKernel:
    """Uniform kernel on the neighbourhood."""
    weight = Fraction(1, len(nbhd))
    return WalkKernel(
        neighbourhood=nbhd,
        weights={z: weight for z in nbhd.sites},
        sigma2=nbhd.sigma2,
    )


def _exact(w: float | Fraction | int) -> Fraction:
    if isinstance(w, Fraction):
        return w
    return Fraction(w).limit_denominator(WEIGHT_DENOMINATOR_LIMIT)


def validate_kernel(
    dim: int,
    weights: Mapping[Iterable[int], float | Fraction],
    neighbourhood: Optional[Neighbourhood] = None,
) -> WalkKernel:
    """
    Validate a finite-support weight map as a walk kernel.

    Args:
        dim: Lattice dimension
        weights: Step -> probability (zero weights allowed)
        neighbourhood: Enclosing neighbourhood; defaults to the support itself

    Returns:
        WalkKernel with exact sigma2

    Raises:
        NotAProbability plus every error of validate_neighbourhood
    """
    exact = {tuple(int(c) for c in z): _exact(w) for z, w in weights.items()}
    negative = [z for z, w in exact.items() if w < 0]
    if negative:
        raise NotAProbability("Negative kernel weight", witness=negative[0])
    total = sum(exact.values(), Fraction(0))
    if total != 1:
        raise NotAProbability(f"Weights sum to {float(total)!r}, not 1")
    support = [z for z, w in exact.items() if w > 0]
    if origin(dim) in support:
        raise ContainsOrigin("Kernel puts mass on the origin")
    for z in support:
        if exact.get(neg(z), Fraction(0)) != exact[z]:
            raise NotSymmetric("Kernel weights are not symmetric", witness=z)
    if any(len(z) != dim for z in support):
        raise KernelAxiomError(f"All steps must have {dim} coordinates")
    if _generated_index(support, dim) != 1:
        raise NotIrreducible("Kernel support does not generate the lattice")
    sigma2 = _check_isotropic(_second_moments(((z, exact[z]) for z in support), dim))

    if neighbourhood is None:
        neighbourhood = validate_neighbourhood(dim, support)
    outside = [z for z in support if z not in neighbourhood.index]
    if outside:
        raise KernelAxiomError(f"Kernel support leaves the neighbourhood at {outside[0]}")
    return WalkKernel(
        neighbourhood=neighbourhood,
        weights={z: exact[z] for z in support},
        sigma2=sigma2,
    )


# Presets


def nearest_neighbour(dim: int = 2) -> Neighbourhood:
    """{+-e_i : i <= d}."""
    sites = []
    for i in range(dim):
        for sign in (1, -1):
            z = [0] * dim
            z[i] = sign
            sites.append(tuple(z))
    return validate_neighbourhood(dim, sites)


def moore(dim: int = 2, radius: int = 1) -> Neighbourhood:
    """Sup-norm ball of the given radius minus the origin."""
    axes = np.arange(-radius, radius + 1)
    grid = np.array(np.meshgrid(*([axes] * dim), indexing="ij")).reshape(dim, -1).T
    sites = [tuple(int(c) for c in row) for row in grid if np.any(row)]
    return validate_neighbourhood(dim, sites)


PRESETS = {
    "nn": nearest_neighbour,
    "moore": moore,
}


def neighbourhood_from_preset(name: str, dim: int = 2) -> Neighbourhood:
    try:
        return PRESETS[name.lower()](dim)
    except KeyError:
        raise KernelAxiomError(f"Unknown neighbourhood preset {name!r}; choose from {sorted(PRESETS)}")
