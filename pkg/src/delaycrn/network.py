"""Reaction network data model and stoichiometric algebra."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .kinetics import RateTransform, TransformArray, TransformError

RANK_RTOL = 1e-10


class NetworkError(ValueError):
    """Raised when a network description fails validation."""


@dataclass(frozen=True)
class SpeciesDef:
    name: str
    transform: RateTransform = field(default_factory=RateTransform)


@dataclass(frozen=True)
class Reaction:
    source: int
    product: int
    rate: float
    delay: float = 0.0


@dataclass(frozen=True)
class StoichBasis:
    """Orthonormal bases (as rows) of S and of its orthogonal complement."""

    s_basis: np.ndarray
    s_perp_basis: np.ndarray

    @property
    def rank(self) -> int:
        return self.s_basis.shape[0]

    def project_s(self, v):
        return (np.asarray(v, dtype=float) @ self.s_basis.T) @ self.s_basis

    def project_perp(self, v):
        return (np.asarray(v, dtype=float) @ self.s_perp_basis.T) @ self.s_perp_basis


@dataclass(frozen=True, eq=False)
class Network:
    """A (possibly delayed) reaction network with product-form kinetics.

    Complexes are integer stoichiometry tuples in order of first appearance;
    reaction ``k`` maps ``complexes[source]`` to ``complexes[product]``.
    """

    species: tuple[SpeciesDef, ...]
    complexes: tuple[tuple[int, ...], ...]
    reactions: tuple[Reaction, ...]

    def __post_init__(self):
        names = [s.name for s in self.species]
        if not names:
            raise NetworkError("network needs at least one species")
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise NetworkError(f"duplicate species name: {', '.join(dup)}")
        if not self.reactions:
            raise NetworkError("network needs at least one reaction")
        n = len(names)
        if len(set(self.complexes)) != len(self.complexes):
            raise NetworkError("duplicate complexes")
        for y in self.complexes:
            if len(y) != n or any(int(v) != v or v < 0 for v in y):
                raise NetworkError(f"complex {y} must have {n} nonnegative integer entries")
        if not any(any(y) for y in self.complexes):
            raise NetworkError("at least one complex must be nonzero")
        for k, r in enumerate(self.reactions):
            if not (0 <= r.source < len(self.complexes) and 0 <= r.product < len(self.complexes)):
                raise NetworkError(f"reaction {k} references an unknown complex")
            if r.source == r.product:
                raise NetworkError(f"reaction {k}: source equals product")
            if not math.isfinite(r.rate) or r.rate <= 0:
                raise NetworkError(f"reaction {k}: nonpositive rate {r.rate}")
            if not math.isfinite(r.delay) or r.delay < 0:
                raise NetworkError(f"reaction {k}: negative delay {r.delay}")

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return (self.species, self.complexes, self.reactions) == (other.species, other.complexes, other.reactions)

    def __hash__(self):
        return hash((self.species, self.complexes, self.reactions))

    @property
    def n_species(self) -> int:
        return len(self.species)

    @property
    def n_complexes(self) -> int:
        return len(self.complexes)

    @property
    def n_reactions(self) -> int:
        return len(self.reactions)

    @property
    def species_names(self) -> list[str]:
        return [s.name for s in self.species]

    @cached_property
    def transforms(self) -> TransformArray:
        return TransformArray(s.transform for s in self.species)

    @cached_property
    def complex_matrix(self) -> np.ndarray:
        """Y, shape (N, L): complexes as columns."""
        return np.array(self.complexes, dtype=int).T

    @cached_property
    def source_index(self) -> np.ndarray:
        return np.array([r.source for r in self.reactions], dtype=int)

    @cached_property
    def product_index(self) -> np.ndarray:
        return np.array([r.product for r in self.reactions], dtype=int)

    @cached_property
    def rates(self) -> np.ndarray:
        return np.array([r.rate for r in self.reactions], dtype=float)

    @cached_property
    def delays(self) -> np.ndarray:
        return np.array([r.delay for r in self.reactions], dtype=float)

    @property
    def max_delay(self) -> float:
        return float(self.delays.max())

    @cached_property
    def source_stoich(self) -> np.ndarray:
        """Rows y_k, shape (M, N)."""
        return self.complex_matrix.T[self.source_index]

    @cached_property
    def product_stoich(self) -> np.ndarray:
        return self.complex_matrix.T[self.product_index]

    @cached_property
    def reaction_vectors(self) -> np.ndarray:
        """Rows y_k' - y_k, shape (M, N), integer."""
        return self.product_stoich - self.source_stoich

    def without_delays(self) -> "Network":
        reactions = tuple(Reaction(r.source, r.product, r.rate, 0.0) for r in self.reactions)
        return Network(self.species, self.complexes, reactions)

    # Kinetic evaluations.  All accept x with shape (..., N).

    def gamma(self, x):
        return self.transforms.gamma(x)

    def rho(self, x):
        return self.transforms.rho(_check_positive(x))

    def complex_monomials(self, x):
        """Gamma(x): gamma^{y} for every complex, shape (..., L)."""
        g = self.transforms.gamma(x)
        return np.prod(g[..., None, :] ** self.complex_matrix.T, axis=-1)

    def source_monomials(self, x):
        """gamma^{y_k}(x) for every reaction source, shape (..., M)."""
        g = self.transforms.gamma(x)
        return np.prod(g[..., None, :] ** self.source_stoich, axis=-1)

    def formation_rate(self, x):
        x = _check_positive(x)
        return (self.rates * self.source_monomials(x)) @ self.reaction_vectors


def _check_positive(x):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise NetworkError("state must be strictly positive")
    return x


def _transform_from_spec(spec) -> RateTransform:
    if spec is None:
        return RateTransform()
    if isinstance(spec, RateTransform):
        return spec
    try:
        return RateTransform(**{k: spec[k] for k in ("alpha", "p", "c", "q") if k in spec})
    except TypeError as exc:
        raise TransformError(f"invalid transform parameters: {exc}") from None


def build_network(spec: Mapping) -> Network:
    """Build a validated Network from a raw description.

    ``spec`` has ``species`` (a list of ``{"name", "gamma"}`` entries, the
    ``gamma`` mapping holding alpha/p/c/q) and ``reactions`` (a list of
    ``{"reactants", "products", "rate", "delay"}`` with name->count maps).
    """
    species = []
    for entry in spec["species"]:
        try:
            tr = _transform_from_spec(entry.get("gamma"))
        except TransformError as exc:
            raise NetworkError(f"species {entry.get('name')!r}: {exc}") from None
        species.append(SpeciesDef(str(entry["name"]), tr))
    names = [s.name for s in species]
    if len(set(names)) != len(names):
        dup = sorted({n for n in names if names.count(n) > 1})
        raise NetworkError(f"duplicate species name: {', '.join(dup)}")
    index = {n: i for i, n in enumerate(names)}

    complexes: list[tuple[int, ...]] = []
    lookup: dict[tuple[int, ...], int] = {}

    def intern(side: Mapping[str, int], k: int) -> int:
        y = [0] * len(names)
        for name, count in side.items():
            if name not in index:
                raise NetworkError(f"reaction {k}: unknown species {name!r}")
            if int(count) != count or count < 0:
                raise NetworkError(f"reaction {k}: stoichiometry of {name!r} must be a nonnegative integer")
            y[index[name]] += int(count)
        key = tuple(y)
        if key not in lookup:
            lookup[key] = len(complexes)
            complexes.append(key)
        return lookup[key]

    reactions = []
    for k, entry in enumerate(spec["reactions"]):
        src = intern(entry.get("reactants", {}), k)
        prod = intern(entry.get("products", {}), k)
        reactions.append(Reaction(src, prod, float(entry["rate"]), float(entry.get("delay", 0.0))))
    return Network(tuple(species), tuple(complexes), tuple(reactions))


def stoich_bases(net: Network, rtol: float = RANK_RTOL) -> StoichBasis:
    """Orthonormal bases of the stoichiometric subspace and its complement.

    Uses an SVD of the reaction-vector matrix; singular values below
    ``rtol`` times the largest one count as zero.  Each basis vector is
    sign-normalized so its largest-magnitude entry is positive.
    """
    R = net.reaction_vectors.astype(float)
    _, sv, vt = np.linalg.svd(R, full_matrices=True)
    rank = int(np.sum(sv > rtol * sv.max())) if sv.size else 0
    vt = np.array([_sign_normalize(v) for v in vt])
    return StoichBasis(vt[:rank].copy(), vt[rank:].copy())


def _sign_normalize(v):
    v = np.where(np.abs(v) < 1e-15, 0.0, v)
    lead = v[np.argmax(np.abs(v) > np.abs(v).max() * (1 - 1e-12))]
    return -v if lead < 0 else v


def formation_rate(net: Network, x):
    return net.formation_rate(x)


def laplacian(net: Network) -> np.ndarray:
    """Weighted negative Laplacian K - diag(1^T K) with K[i, j] = rate(i -> j).

    Column ``j`` of the result collects flux out of complex ``j``, so that
    ``Y @ laplacian(net) @ Gamma(x)`` is the formation rate.
    """
    L = net.n_complexes
    K = np.zeros((L, L))
    for r in net.reactions:
        K[r.product, r.source] += r.rate
    return K - np.diag(K.sum(axis=0))


def gamma_monomial(net: Network, k: int, x) -> float:
    x = _check_positive(x)
    return float(net.complex_monomials(x)[k])


def complex_label(net: Network, k: int) -> str:
    parts = []
    for name, count in zip(net.species_names, net.complexes[k]):
        if count:
            parts.append(name if count == 1 else f"{count}{name}")
    return "+".join(parts) or "0"


def as_vector(values: Sequence[float], n: int, what: str = "vector") -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.shape != (n,):
        raise NetworkError(f"{what} must have {n} entries, got {v.size}")
    return v
