"""Dense linear algebra on a truncated ``qubit^M (x) cavity`` Hilbert space.

Subsystem ordering is always qubit 1, ..., qubit M, cavity.  A single qubit
uses the basis ``(|e>, |g>)`` so that ``sigma_z = diag(+1, -1)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
import scipy.linalg

from qbatt.errors import LayoutError

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
POSITIVITY_TOL = 1e-10

EXCITED, GROUND = 0, 1


@dataclass(frozen=True)
class HilbertLayout:
    num_qubits: int
    cavity_dim: int

    def __post_init__(self):
        if self.num_qubits < 0:
            raise LayoutError(f"num_qubits must be >= 0, got {self.num_qubits}")
        if self.cavity_dim < 2:
            raise LayoutError(f"cavity_dim must be >= 2, got {self.cavity_dim}")

    @property
    def dims(self) -> tuple[int, ...]:
        return (2,) * self.num_qubits + (self.cavity_dim,)

    @property
    def dim(self) -> int:
        return 2**self.num_qubits * self.cavity_dim

    @property
    def n_max(self) -> int:
        return self.cavity_dim - 1

    def interior_indices(self) -> np.ndarray:
        """Basis indices whose cavity level is ``<= n_max - M``.

        Under RWA dynamics these states only couple to states that are inside
        the truncated space, so exactness checks are made on them.
        """
        n = np.tile(np.arange(self.cavity_dim), 2**self.num_qubits)
        return np.flatnonzero(n <= self.n_max - self.num_qubits)

    def cavity_levels(self) -> np.ndarray:
        """Cavity photon number of each composite basis state."""
        return np.tile(np.arange(self.cavity_dim), 2**self.num_qubits)

    def qubit_excitations(self) -> np.ndarray:
        """Number of excited qubits in each composite basis state."""
        if self.num_qubits == 0:
            return np.zeros(self.cavity_dim, dtype=int)
        configs = np.array(np.meshgrid(*[[1, 0]] * self.num_qubits, indexing="ij"))
        count = configs.reshape(self.num_qubits, -1).sum(axis=0)
        return np.repeat(count, self.cavity_dim)


def _as_matrix(entries) -> np.ndarray:
    return np.asarray(entries, dtype=complex)


@dataclass(frozen=True, eq=False)
class FockOperator:
    layout: HilbertLayout
    entries: np.ndarray
    label: str = ""

    def __post_init__(self):
        m = _as_matrix(self.entries)
        if m.shape != (self.layout.dim, self.layout.dim):
            raise LayoutError(
                f"operator shape {m.shape} does not match layout dimension {self.layout.dim}"
            )
        if not np.all(np.isfinite(m)):
            raise LayoutError(f"operator {self.label!r} has non-finite entries")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @property
    def dag(self) -> FockOperator:
        return FockOperator(self.layout, self.entries.conj().T, f"{self.label}^dag")

    def __matmul__(self, other: FockOperator) -> FockOperator:
        _check_same_layout(self.layout, other.layout)
        return FockOperator(self.layout, self.entries @ other.entries, f"{self.label}*{other.label}")

    def __add__(self, other: FockOperator) -> FockOperator:
        _check_same_layout(self.layout, other.layout)
        return FockOperator(self.layout, self.entries + other.entries, f"{self.label}+{other.label}")

    def __sub__(self, other: FockOperator) -> FockOperator:
        _check_same_layout(self.layout, other.layout)
        return FockOperator(self.layout, self.entries - other.entries, f"{self.label}-{other.label}")

    def __mul__(self, scalar: complex) -> FockOperator:
        return FockOperator(self.layout, self.entries * scalar, self.label)

    __rmul__ = __mul__

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return bool(np.max(np.abs(self.entries - self.entries.conj().T), initial=0.0) <= tol)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite matrix on a layout."""

    layout: HilbertLayout
    entries: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        m = _as_matrix(self.entries)
        if m.shape != (self.layout.dim, self.layout.dim):
            raise LayoutError(
                f"density matrix shape {m.shape} does not match layout dimension {self.layout.dim}"
            )
        check_density(m)
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    def diagonal(self) -> np.ndarray:
        return self.entries.diagonal().real.copy()


def check_density(m: np.ndarray, herm_tol=HERMITIAN_TOL, trace_tol=TRACE_TOL, pos_tol=POSITIVITY_TOL):
    if not np.all(np.isfinite(m)):
        raise LayoutError("density matrix has non-finite entries")
    herm = np.max(np.abs(m - m.conj().T), initial=0.0)
    if herm > herm_tol:
        raise LayoutError(f"density matrix is not Hermitian (max deviation {herm:.3g})")
    tr = np.trace(m)
    if abs(tr - 1.0) > trace_tol:
        raise LayoutError(f"density matrix trace is {tr:.12g}, expected 1")
    lam = np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0]
    if lam < -pos_tol:
        raise LayoutError(f"density matrix has negative eigenvalue {lam:.3g}")


def _check_same_layout(a: HilbertLayout, b: HilbertLayout):
    if a != b:
        raise LayoutError(f"layout mismatch: {a} vs {b}")


# --- single-subsystem matrices -------------------------------------------------

def annihilation(cavity_dim: int) -> np.ndarray:
    """Truncated ladder operator with ``a[n-1, n] = sqrt(n)``."""
    if cavity_dim < 2:
        raise LayoutError(f"cavity_dim must be >= 2, got {cavity_dim}")
    return np.diag(np.sqrt(np.arange(1, cavity_dim, dtype=float)), k=1).astype(complex)


def number_op(cavity_dim: int) -> np.ndarray:
    return np.diag(np.arange(cavity_dim, dtype=float)).astype(complex)


_PAULI = {
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
    "plus": np.array([[0, 1], [0, 0]], dtype=complex),   # |e><g|
    "minus": np.array([[0, 0], [1, 0]], dtype=complex),  # |g><e|
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "excited": np.array([[1, 0], [0, 0]], dtype=complex),
    "ground": np.array([[0, 0], [0, 1]], dtype=complex),
}


def embed(layout: HilbertLayout, factors: dict[int, np.ndarray], label: str = "") -> FockOperator:
    """Tensor a set of local matrices into the composite space.

    ``factors`` maps slot index (1..M for qubits, 0 for the cavity) to a
    local matrix; missing slots are padded with identities.
    """
    mats = []
    for slot in range(1, layout.num_qubits + 1):
        mats.append(factors.get(slot, np.eye(2, dtype=complex)))
    mats.append(factors.get(0, np.eye(layout.cavity_dim, dtype=complex)))
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return FockOperator(layout, out, label)


def qubit_sigma(kind: str, layout: HilbertLayout, qubit_index: int) -> FockOperator:
    if kind not in _PAULI:
        raise ValueError(f"unknown qubit operator kind {kind!r}")
    if not 1 <= qubit_index <= layout.num_qubits:
        raise LayoutError(f"qubit_index {qubit_index} outside 1..{layout.num_qubits}")
    return embed(layout, {qubit_index: _PAULI[kind]}, f"sigma_{kind}^({qubit_index})")


def cavity_op(layout: HilbertLayout, matrix: np.ndarray, label: str = "") -> FockOperator:
    return embed(layout, {0: matrix}, label)


def identity(layout: HilbertLayout) -> FockOperator:
    return FockOperator(layout, np.eye(layout.dim, dtype=complex), "I")


# --- composite constructions ---------------------------------------------------

def tensor(a, b, label: str = ""):
    """Kronecker product ``a (x) b`` in the fixed subsystem ordering.

    Two raw square matrices give their plain Kronecker product.  A raw
    ``2**k`` qubit-register matrix followed by a cavity-only operand
    (``FockOperator`` or ``DensityMatrix`` with no qubits) gives the composite
    operand on ``HilbertLayout(k, cavity_dim)``.
    """
    if isinstance(a, (FockOperator, DensityMatrix)):
        raise LayoutError("the left operand must be a raw qubit-register matrix")
    q = _as_matrix(a)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise LayoutError(f"tensor operands must be square, got {q.shape}")
    if not isinstance(b, (FockOperator, DensityMatrix)):
        c = _as_matrix(b)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise LayoutError(f"tensor operands must be square, got {c.shape}")
        return np.kron(q, c)
    if b.layout.num_qubits != 0:
        raise LayoutError("the right operand must be a cavity-only operand")
    k = int(round(np.log2(q.shape[0]))) if q.shape[0] > 0 else -1
    if k < 0 or q.shape[0] != 2**k:
        raise LayoutError(f"qubit register size {q.shape[0]} is not a power of two")
    layout = HilbertLayout(k, b.layout.cavity_dim)
    m = np.kron(q, b.entries)
    if isinstance(b, DensityMatrix):
        return DensityMatrix(layout, m)
    return FockOperator(layout, m, label)


def partial_trace(rho: DensityMatrix | np.ndarray, keep: Iterable[int], dims: tuple[int, ...] | None = None):
    """Reduce ``rho`` to the subsystems listed in ``keep``.

    Subsystems are numbered 1..M for qubits and 0 for the cavity.  When a
    raw array is passed, ``dims`` gives the subsystem dimensions in layout
    order.  Returns a :class:`DensityMatrix` for density inputs and a raw
    array otherwise.
    """
    keep = sorted(set(keep), key=lambda s: (s == 0, s))
    if not keep:
        raise LayoutError("partial_trace needs at least one subsystem to keep")
    if isinstance(rho, DensityMatrix):
        dims = rho.layout.dims
        m = rho.entries
        num_qubits = rho.layout.num_qubits
    else:
        if dims is None:
            raise LayoutError("dims are required for raw-array partial traces")
        m = _as_matrix(rho)
        num_qubits = len(dims) - 1
    positions = []
    for s in keep:
        if s == 0:
            positions.append(len(dims) - 1)
        elif 1 <= s <= num_qubits:
            positions.append(s - 1)
        else:
            raise LayoutError(f"subsystem {s} does not exist")
    n = len(dims)
    t = m.reshape(dims + dims)
    traced = [i for i in range(n) if i not in positions]
    # einsum with explicit index letters keeps the kept order
    letters = "abcdefghijklmnopqrstuvwxyz"
    row = list(letters[:n])
    col = list(letters[n : 2 * n])
    for i in traced:
        col[i] = row[i]
    out = "".join(row[i] for i in positions) + "".join(col[i] for i in positions)
    red = np.einsum("".join(row) + "".join(col) + "->" + out, t)
    kd = int(np.prod([dims[i] for i in positions]))
    red = red.reshape(kd, kd)
    if not isinstance(rho, DensityMatrix):
        return red
    red = 0.5 * (red + red.conj().T)
    if keep == [0]:
        return DensityMatrix(HilbertLayout(0, dims[-1]), red)
    kept_qubits = [s for s in keep if s != 0]
    if 0 in keep:
        return DensityMatrix(HilbertLayout(len(kept_qubits), dims[-1]), red)
    # qubit-only reductions have no cavity slot; return the raw matrix
    check_density(red)
    return red


def matrix_exp(a: FockOperator | np.ndarray, scale: complex = 1.0, hermitian: bool | None = None):
    """``exp(scale * a)``.

    Hermitian generators go through an eigendecomposition, which is exact to
    rounding; everything else uses scaling and squaring with a Pade
    approximant.
    """
    m = a.entries if isinstance(a, FockOperator) else _as_matrix(a)
    if not np.all(np.isfinite(m)) or not np.isfinite(scale):
        raise LayoutError("matrix_exp input has non-finite entries")
    if hermitian is None:
        hermitian = bool(np.max(np.abs(m - m.conj().T), initial=0.0) <= HERMITIAN_TOL * max(1.0, np.max(np.abs(m), initial=0.0)))
    if hermitian:
        w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
        out = (v * np.exp(scale * w)) @ v.conj().T
    else:
        out = scipy.linalg.expm(scale * m)
    if isinstance(a, FockOperator):
        return FockOperator(a.layout, out, f"exp({a.label})")
    return out


def expectation(rho: DensityMatrix, obs: FockOperator) -> complex:
    _check_same_layout(rho.layout, obs.layout)
    # Tr(rho @ obs) without forming the product
    return complex(np.sum(rho.entries * obs.entries.T))


def trace_product(a: np.ndarray, b: np.ndarray) -> complex:
    return complex(np.sum(a * b.T))
