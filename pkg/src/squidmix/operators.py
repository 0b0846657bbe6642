"""Dense operators on a truncated two-mode Fock space.

The composite basis index is k = i_a * n_b + i_b (logical-mode-major).
Dimensions stay small (< ~200) at desk scale, so everything is dense
complex; matrix exponentials go through scipy's scaling-and-squaring Pade
implementation.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm


@dataclass(frozen=True)
class HilbertSpace:
    """Truncation (n_a, n_b) of the logical and blockade modes."""

    n_a: int
    n_b: int

    def __post_init__(self):
        if self.n_a < 2 or self.n_b < 2:
            if not (self.n_b == 1 and self.n_a >= 2):
                # n_b = 1 freezes the blockade mode; useful for single-mode
                # decay runs where it is a passive spectator
                raise ValueError("truncations must satisfy n_a >= 2, n_b >= 2"
                                 " (or n_b == 1 for a frozen blockade mode)")

    @property
    def dim(self):
        return self.n_a * self.n_b

    def index(self, i_a, i_b):
        if not (0 <= i_a < self.n_a and 0 <= i_b < self.n_b):
            raise IndexError(f"Fock label ({i_a},{i_b}) outside truncation")
        return i_a * self.n_b + i_b

    def grown(self, extra_a=4, extra_b=2):
        n_b = self.n_b + extra_b if self.n_b > 1 else 1
        return HilbertSpace(self.n_a + extra_a, n_b)


def _check_same_space(x, y):
    if x.space != y.space:
        raise ValueError(f"operands live on different spaces: "
                         f"{x.space} vs {y.space}")


@dataclass(frozen=True)
class Operator:
    space: HilbertSpace
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (self.space.dim, self.space.dim):
            raise ValueError(f"matrix shape {m.shape} does not match space "
                             f"dimension {self.space.dim}")
        object.__setattr__(self, "matrix", m)

    def dag(self):
        return Operator(self.space, self.matrix.conj().T)

    def is_hermitian(self, tol=1e-12):
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T))) <= tol

    def __add__(self, other):
        _check_same_space(self, other)
        return Operator(self.space, self.matrix + other.matrix)

    def __sub__(self, other):
        _check_same_space(self, other)
        return Operator(self.space, self.matrix - other.matrix)

    def __mul__(self, scalar):
        return Operator(self.space, self.matrix * scalar)

    __rmul__ = __mul__

    def __matmul__(self, other):
        _check_same_space(self, other)
        return Operator(self.space, self.matrix @ other.matrix)


@dataclass(frozen=True)
class DensityMatrix:
    space: HilbertSpace
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (self.space.dim, self.space.dim):
            raise ValueError(f"matrix shape {m.shape} does not match space "
                             f"dimension {self.space.dim}")
        object.__setattr__(self, "matrix", m)

    def validate(self, trace_tol=1e-9, herm_tol=1e-10, eig_floor=-1e-8):
        """Raise if trace, hermiticity, or positivity bounds are violated."""
        tr = np.trace(self.matrix)
        if abs(tr - 1.0) > trace_tol:
            raise ValueError(f"trace deviates from 1 by {abs(tr - 1.0):.3e}")
        herm = float(np.max(np.abs(self.matrix - self.matrix.conj().T)))
        if herm > herm_tol:
            raise ValueError(f"hermiticity violated by {herm:.3e}")
        w = np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))
        if w.min() < eig_floor:
            raise ValueError(f"negative eigenvalue {w.min():.3e}")
        return self


def destroy(n):
    """Single-mode annihilation operator, n x n."""
    a = np.zeros((n, n), dtype=complex)
    for k in range(1, n):
        a[k - 1, k] = np.sqrt(k)
    return a


def _embed_logical(space, m):
    return np.kron(m, np.eye(space.n_b, dtype=complex))


def _embed_blockade(space, m):
    return np.kron(np.eye(space.n_a, dtype=complex), m)


def ladder(space: HilbertSpace, mode: str) -> Operator:
    """Annihilation operator of one mode embedded on the composite space."""
    if mode == "logical":
        return Operator(space, _embed_logical(space, destroy(space.n_a)))
    if mode == "blockade":
        return Operator(space, _embed_blockade(space, destroy(space.n_b)))
    raise ValueError(f"unknown mode {mode!r}; expected 'logical' or 'blockade'")


def number(space: HilbertSpace, mode: str) -> Operator:
    a = ladder(space, mode)
    return a.dag() @ a


def displacement(space: HilbertSpace, alpha: complex) -> Operator:
    """exp(alpha a^dag - alpha* a) acting on the logical factor.

    Amplitudes with |alpha|^2 > n_a/4 are allowed but trigger a truncation
    warning; the displaced state then leaks into the discarded levels.
    """
    if abs(alpha)**2 > space.n_a / 4.0:
        warnings.warn(
            f"displacement |alpha|^2 = {abs(alpha)**2:.2f} exceeds n_a/4 = "
            f"{space.n_a / 4.0:.2f}; truncation artifacts likely",
            RuntimeWarning, stacklevel=2)
    a = destroy(space.n_a)
    gen = alpha * a.conj().T - np.conj(alpha) * a
    return Operator(space, _embed_logical(space, expm(gen)))


def parity(space: HilbertSpace) -> Operator:
    """Photon-number parity of the logical mode, diag((-1)^n_a)."""
    signs = (-1.0) ** np.arange(space.n_a)
    return Operator(space, _embed_logical(space, np.diag(signs.astype(complex))))


def fock(space: HilbertSpace, i_a, i_b=0):
    """Basis ket |i_a, i_b> as a length-dim complex vector."""
    v = np.zeros(space.dim, dtype=complex)
    v[space.index(i_a, i_b)] = 1.0
    return v


def fock_dm(space: HilbertSpace, i_a, i_b=0) -> DensityMatrix:
    v = fock(space, i_a, i_b)
    return DensityMatrix(space, np.outer(v, v.conj()))


def pure_dm(space: HilbertSpace, ket) -> DensityMatrix:
    ket = np.asarray(ket, dtype=complex)
    ket = ket / np.linalg.norm(ket)
    return DensityMatrix(space, np.outer(ket, ket.conj()))


def coherent_dm(space: HilbertSpace, alpha: complex) -> DensityMatrix:
    ket = displacement(space, alpha).matrix @ fock(space, 0, 0)
    return pure_dm(space, ket)


def thermal_dm(space: HilbertSpace, n_thermal: float) -> DensityMatrix:
    """Thermal state of the logical mode, blockade in vacuum."""
    if n_thermal <= 0.0:
        return fock_dm(space, 0, 0)
    p = (n_thermal / (1.0 + n_thermal)) ** np.arange(space.n_a)
    p = p / p.sum()
    m = np.zeros((space.dim, space.dim), dtype=complex)
    for i, pi in enumerate(p):
        m[space.index(i, 0), space.index(i, 0)] = pi
    return DensityMatrix(space, m)


def expectation(rho: DensityMatrix, op: Operator) -> complex:
    """Tr(rho op); real part enforced to 1e-10 for hermitian op."""
    _check_same_space(rho, op)
    val = complex(np.trace(rho.matrix @ op.matrix))
    return val


def reduced_logical(rho: DensityMatrix) -> np.ndarray:
    """Partial trace over the blockade mode; returns an n_a x n_a matrix."""
    s = rho.space
    m = rho.matrix.reshape(s.n_a, s.n_b, s.n_a, s.n_b)
    return np.einsum("ibjb->ij", m)


def truncation_converged(observable, space: HilbertSpace, rel_tol=1e-4,
                         grow=(4, 2)):
    """Check that `observable(space)` changes by < rel_tol when the
    truncation grows by `grow`.  Returns (converged, value, value_grown)."""
    v0 = observable(space)
    v1 = observable(space.grown(*grow))
    scale = max(abs(v1), 1e-30)
    return abs(v1 - v0) / scale < rel_tol, v0, v1
