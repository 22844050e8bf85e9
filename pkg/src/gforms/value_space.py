"""Finite-dimensional value spaces, their dual families and linear maps.

A value space is ``K^d`` with ``K`` real or complex and an ordered family of
``d`` linear functionals that separates points (the dual basis unless a
different invertible family is supplied).  Complex vectors are handled as
``complex128`` arrays; every linear map also carries its action on the
underlying real space (real and imaginary parts interleaved), which is what
the coefficient machinery uses to push symbolic components through maps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

REAL = "real"
COMPLEX = "complex"
SCALAR_FIELDS = (REAL, COMPLEX)


class SpaceMismatchError(ValueError):
    """Raised when a vector, map or form lives over the wrong value space."""


@dataclass(frozen=True)
class ValueSpace:
    name: str
    scalar: str
    dim: int
    dual_labels: tuple[str, ...] = ()
    dual_matrix: tuple[tuple[complex, ...], ...] | None = None

    def __post_init__(self):
        if self.scalar not in SCALAR_FIELDS:
            raise ValueError(f"scalar field must be one of {SCALAR_FIELDS}, got {self.scalar!r}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim!r}")
        if not self.dual_labels:
            object.__setattr__(self, "dual_labels", tuple(f"e{j + 1}*" for j in range(self.dim)))
        if len(self.dual_labels) != self.dim:
            raise ValueError(
                f"{self.name}: {len(self.dual_labels)} dual labels for dimension {self.dim}"
            )
        if self.dual_matrix is not None:
            m = np.asarray(self.dual_matrix)
            if m.shape != (self.dim, self.dim):
                raise ValueError(f"{self.name}: dual family must be a {self.dim}x{self.dim} matrix")
            if abs(np.linalg.det(m)) < 1e-12:
                raise ValueError(f"{self.name}: dual family does not separate points")

    @property
    def is_complex(self) -> bool:
        return self.scalar == COMPLEX

    @property
    def real_dim(self) -> int:
        """Dimension of the underlying real space."""
        return 2 * self.dim if self.is_complex else self.dim

    @property
    def dtype(self):
        return np.complex128 if self.is_complex else np.float64

    def dual_family(self) -> np.ndarray:
        """Rows are the separating functionals in the standard coordinates."""
        if self.dual_matrix is None:
            return np.eye(self.dim, dtype=self.dtype)
        return np.asarray(self.dual_matrix, dtype=self.dtype)

    def zero(self) -> "Vector":
        return Vector(self, np.zeros(self.dim, dtype=self.dtype))

    def basis(self) -> list["Vector"]:
        eye = np.eye(self.dim, dtype=self.dtype)
        return [Vector(self, eye[j]) for j in range(self.dim)]


def scalar_space(scalar: str = REAL) -> ValueSpace:
    """The one-dimensional space ``K`` itself."""
    name = "R" if scalar == REAL else "C"
    return ValueSpace(name, scalar, 1, ("id",))


@dataclass(frozen=True)
class Vector:
    space: ValueSpace
    components: np.ndarray = field(compare=False)

    def __post_init__(self):
        comps = np.array(self.components, dtype=self.space.dtype).reshape(-1)
        if comps.shape[0] != self.space.dim:
            raise SpaceMismatchError(
                f"{comps.shape[0]} components for space {self.space.name} of dim {self.space.dim}"
            )
        comps.setflags(write=False)
        object.__setattr__(self, "components", comps)

    def __add__(self, other: "Vector") -> "Vector":
        _same_space(self.space, other.space)
        return Vector(self.space, self.components + other.components)

    def __mul__(self, c) -> "Vector":
        return Vector(self.space, c * self.components)

    __rmul__ = __mul__

    def __eq__(self, other):
        return (
            isinstance(other, Vector)
            and self.space == other.space
            and np.array_equal(self.components, other.components)
        )

    def __hash__(self):
        return hash((self.space, self.components.tobytes()))

    def allclose(self, other: "Vector", atol: float = 1e-12) -> bool:
        return self.space == other.space and np.allclose(
            self.components, other.components, rtol=0.0, atol=atol
        )


def _same_space(a: ValueSpace, b: ValueSpace) -> None:
    if a != b:
        raise SpaceMismatchError(f"space mismatch: {a.name} vs {b.name}")


def to_real_parts(values: np.ndarray, is_complex: bool) -> np.ndarray:
    """Interleave real and imaginary parts along the first axis."""
    values = np.asarray(values)
    if not is_complex:
        return values.real.astype(np.float64) if np.iscomplexobj(values) else values
    out = np.empty((2 * values.shape[0],) + values.shape[1:], dtype=np.float64)
    out[0::2] = values.real
    out[1::2] = values.imag
    return out


def from_real_parts(parts: np.ndarray, is_complex: bool) -> np.ndarray:
    parts = np.asarray(parts, dtype=np.float64)
    if not is_complex:
        return parts
    return parts[0::2] + 1j * parts[1::2]


def realified_matrix(matrix: np.ndarray) -> np.ndarray:
    """Real matrix of a complex-linear map acting on interleaved (re, im) parts."""
    m = np.asarray(matrix, dtype=np.complex128)
    rows, cols = m.shape
    out = np.zeros((2 * rows, 2 * cols))
    out[0::2, 0::2] = m.real
    out[0::2, 1::2] = -m.imag
    out[1::2, 0::2] = m.imag
    out[1::2, 1::2] = m.real
    return out


class LinearMap:
    """A linear map between value spaces.

    ``matrix`` is the ``target.dim x source.dim`` matrix over ``K``.  Maps
    that are only real-linear (the real/imaginary part projections of a
    complex space) are built with :meth:`real_linear` and have no ``K``
    matrix; their action is given by ``real_matrix`` alone.
    """

    def __init__(self, source: ValueSpace, target: ValueSpace, matrix):
        if source.scalar != target.scalar:
            raise SpaceMismatchError(
                f"{source.name} and {target.name} have different scalar fields; "
                "use LinearMap.real_linear for realification projections"
            )
        m = np.array(matrix, dtype=source.dtype)
        if m.ndim != 2 or m.shape != (target.dim, source.dim):
            raise SpaceMismatchError(
                f"matrix shape {m.shape} does not match {target.dim}x{source.dim}"
            )
        m.setflags(write=False)
        self.source = source
        self.target = target
        self.matrix = m
        rm = realified_matrix(m) if source.is_complex else m.astype(np.float64)
        rm.setflags(write=False)
        self.real_matrix = rm

    @classmethod
    def real_linear(cls, source: ValueSpace, target: ValueSpace, real_matrix) -> "LinearMap":
        rm = np.array(real_matrix, dtype=np.float64)
        if rm.shape != (target.real_dim, source.real_dim):
            raise SpaceMismatchError(
                f"real matrix shape {rm.shape} does not match {target.real_dim}x{source.real_dim}"
            )
        rm.setflags(write=False)
        self = cls.__new__(cls)
        self.source = source
        self.target = target
        self.matrix = None
        self.real_matrix = rm
        return self

    @property
    def is_k_linear(self) -> bool:
        return self.matrix is not None

    def __call__(self, v: Vector) -> Vector:
        return apply_linear_map(self, v)

    def __matmul__(self, other: "LinearMap") -> "LinearMap":
        """Composition ``self o other``."""
        _same_space(other.target, self.source)
        if self.is_k_linear and other.is_k_linear:
            return LinearMap(other.source, self.target, self.matrix @ other.matrix)
        return LinearMap.real_linear(other.source, self.target, self.real_matrix @ other.real_matrix)

    def __repr__(self):
        return f"LinearMap({self.source.name} -> {self.target.name})"


def identity_map(G: ValueSpace) -> LinearMap:
    return LinearMap(G, G, np.eye(G.dim))


def apply_linear_map(psi: LinearMap, v: Vector) -> Vector:
    _same_space(v.space, psi.source)
    if psi.is_k_linear:
        return Vector(psi.target, psi.matrix @ v.components)
    parts = psi.real_matrix @ to_real_parts(v.components, psi.source.is_complex)
    return Vector(psi.target, from_real_parts(parts, psi.target.is_complex))


def tensor_product_space(G: ValueSpace, H: ValueSpace) -> ValueSpace:
    """``G (x) H`` with lexicographic basis, left factor major."""
    if G.scalar != H.scalar:
        raise SpaceMismatchError(f"cannot tensor {G.scalar} space {G.name} with {H.scalar} space {H.name}")
    labels = tuple(f"{a}·{b}" for a in G.dual_labels for b in H.dual_labels)
    dual = None
    if G.dual_matrix is not None or H.dual_matrix is not None:
        dual = _as_tuple_matrix(np.kron(G.dual_family(), H.dual_family()))
    return ValueSpace(f"{G.name}⊗{H.name}", G.scalar, G.dim * H.dim, labels, dual)


def kron(u: Vector, v: Vector) -> Vector:
    return Vector(tensor_product_space(u.space, v.space), np.kron(u.components, v.components))


def kronecker_map(psi: LinearMap, phi: LinearMap) -> LinearMap:
    """``psi (x) phi`` between the tensor products of sources and targets."""
    if psi.source.scalar != phi.source.scalar or psi.target.scalar != phi.target.scalar:
        raise SpaceMismatchError("kronecker_map needs maps over the same scalar field")
    if not (psi.is_k_linear and phi.is_k_linear):
        raise SpaceMismatchError("kronecker_map is defined for K-linear maps only")
    return LinearMap(
        tensor_product_space(psi.source, phi.source),
        tensor_product_space(psi.target, phi.target),
        np.kron(psi.matrix, phi.matrix),
    )


def swap_map(H: ValueSpace, G: ValueSpace) -> LinearMap:
    """Basis transposition ``H (x) G -> G (x) H``."""
    HG = tensor_product_space(H, G)
    GH = tensor_product_space(G, H)
    m = np.zeros((GH.dim, HG.dim))
    for j in range(H.dim):
        for i in range(G.dim):
            m[i * H.dim + j, j * G.dim + i] = 1.0
    return LinearMap(HG, GH, m)


def realify(G: ValueSpace) -> tuple[ValueSpace, LinearMap, LinearMap]:
    """Underlying real space of a complex space plus the real/imaginary projections.

    The projections go from ``G`` (viewed as a real space) to ``R^dim`` and
    are only real-linear.
    """
    if not G.is_complex:
        raise SpaceMismatchError(f"{G.name} is already real")
    labels = tuple(lab for g in G.dual_labels for lab in (f"re({g})", f"im({g})"))
    GR = ValueSpace(f"{G.name}_R", REAL, 2 * G.dim, labels)
    target = ValueSpace(f"R{G.dim}", REAL, G.dim)
    re = np.zeros((G.dim, 2 * G.dim))
    im = np.zeros((G.dim, 2 * G.dim))
    re[np.arange(G.dim), 2 * np.arange(G.dim)] = 1.0
    im[np.arange(G.dim), 2 * np.arange(G.dim) + 1] = 1.0
    return GR, LinearMap.real_linear(G, target, re), LinearMap.real_linear(G, target, im)


def forget_complex(G: ValueSpace) -> LinearMap:
    """The set-theoretic identity ``G -> G_R`` as a real-linear map."""
    GR, _, _ = realify(G)
    return LinearMap.real_linear(G, GR, np.eye(GR.dim))


def dual_functionals(G: ValueSpace) -> list[LinearMap]:
    K = scalar_space(G.scalar)
    family = G.dual_family()
    return [LinearMap(G, K, family[j : j + 1]) for j in range(G.dim)]


def vector_from_functional_values(G: ValueSpace, values: Sequence) -> Vector:
    """The unique vector whose dual-family values are ``values``."""
    vals = np.asarray(values, dtype=G.dtype)
    if vals.shape != (G.dim,):
        raise SpaceMismatchError(f"expected {G.dim} functional values, got shape {vals.shape}")
    return Vector(G, np.linalg.solve(G.dual_family(), vals))


def _as_tuple_matrix(m: np.ndarray) -> tuple[tuple[complex, ...], ...]:
    return tuple(tuple(row.tolist()) for row in m)
