"""
Sparse operators on a weighted grid space.

An ``OperatorMatrix`` carries its matrix, the positive measure diagonal m
defining ⟨u, v⟩ = ∑ m_i conj(u_i) v_i, and a label. Adjoints, real and
imaginary parts and commutators are all taken with respect to that measure.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, eigsh, splu
from scipy.sparse.linalg import norm as sparse_norm

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    matrix: sp.csr_matrix
    measure: np.ndarray
    label: str = ""
    selfadjoint: bool = False

    def __post_init__(self):
        object.__setattr__(self, "matrix", sp.csr_matrix(self.matrix))
        measure = np.asarray(self.measure, dtype=float)
        object.__setattr__(self, "measure", measure)
        n, m = self.matrix.shape
        if n != m or measure.shape != (n,):
            raise ValueError(f"Operator '{self.label}' is {n}x{m} but the measure has shape {measure.shape}")
        if not np.all(measure > 0.0):
            raise ValueError(f"Operator '{self.label}' has a non-positive measure weight")

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def _like(self, matrix, label: str, selfadjoint: bool = False) -> "OperatorMatrix":
        return OperatorMatrix(matrix, self.measure, label, selfadjoint)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def apply(self, u: np.ndarray) -> np.ndarray:
        return self.matrix @ u

    # measure geometry ------------------------------------------------

    def inner(self, u: np.ndarray, v: np.ndarray) -> complex:
        return np.sum(self.measure * np.conj(u) * v)

    def norm(self, u: np.ndarray) -> float:
        return float(np.sqrt(np.real(self.inner(u, u))))

    def adjoint(self) -> "OperatorMatrix":
        """M† = m^{-1} M^H m, the adjoint for the measure inner product."""
        m = sp.diags(self.measure)
        m_inv = sp.diags(1.0 / self.measure)
        return self._like(m_inv @ self.matrix.conj().T @ m, f"{self.label}†")

    def frobenius(self) -> float:
        return float(sparse_norm(self.matrix))

    def selfadjoint_defect(self) -> float:
        """‖M − M†‖ / ‖M‖ in the Frobenius norm (0 for the zero matrix)."""
        scale = self.frobenius()
        if scale == 0.0:
            return 0.0
        return float(sparse_norm(self.matrix - self.adjoint().matrix)) / scale

    def real_part(self) -> "OperatorMatrix":
        return self._like(0.5 * (self.matrix + self.adjoint().matrix), f"Re {self.label}", True)

    def imag_part(self) -> "OperatorMatrix":
        return self._like((self.matrix - self.adjoint().matrix) / 2j, f"Im {self.label}", True)

    # algebra ----------------------------------------------------------

    def __add__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        return self._like(self.matrix + other.matrix, f"({self.label} + {other.label})",
                          self.selfadjoint and other.selfadjoint)

    def __sub__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        return self._like(self.matrix - other.matrix, f"({self.label} - {other.label})",
                          self.selfadjoint and other.selfadjoint)

    def __matmul__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        return self._like(self.matrix @ other.matrix, f"{self.label}·{other.label}")

    def scaled(self, c: Union[float, complex]) -> "OperatorMatrix":
        return self._like(c * self.matrix, f"{c}·{self.label}", self.selfadjoint and np.isreal(c))

    def commutator(self, other: "OperatorMatrix") -> "OperatorMatrix":
        """i[self, other]; self-adjoint when both factors are."""
        comm = 1j * (self.matrix @ other.matrix - other.matrix @ self.matrix)
        return self._like(comm, f"i[{self.label}, {other.label}]", self.selfadjoint and other.selfadjoint)

    def shifted(self, lam: float) -> "OperatorMatrix":
        return self._like(self.matrix - lam * sp.identity(self.n, format="csr"), f"({self.label} - {lam})",
                          self.selfadjoint)

    # export -----------------------------------------------------------

    def to_triplets(self, path: Union[str, Path]) -> Path:
        """Write ``# rows cols nnz label`` then one ``row col re im`` line per stored entry."""
        coo = self.matrix.tocoo()
        path = Path(path)
        with path.open("w", encoding="utf-8") as fh:
            fh.write(f"# {coo.shape[0]} {coo.shape[1]} {coo.nnz} {self.label or 'operator'}\n")
            for i, j, v in zip(coo.row, coo.col, coo.data):
                v = complex(v)
                fh.write(f"{i} {j} {v.real:.17g} {v.imag:.17g}\n")
        logger.debug("wrote %d triplets of '%s' to %s", coo.nnz, self.label, path)
        return path


def diagonal(values: np.ndarray, measure: np.ndarray, label: str = "") -> OperatorMatrix:
    return OperatorMatrix(sp.diags(np.asarray(values)), measure, label, np.all(np.isreal(values)))


def read_triplets(path: Union[str, Path]):
    """Inverse of ``to_triplets``: returns (csr matrix, label)."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = lines[0].lstrip("#").split(maxsplit=3)
    rows, cols = int(header[0]), int(header[1])
    label = header[3] if len(header) > 3 else ""
    data = np.loadtxt(lines[1:], ndmin=2) if len(lines) > 1 else np.zeros((0, 4))
    values = data[:, 2] + 1j * data[:, 3]
    matrix = sp.csr_matrix((values, (data[:, 0].astype(int), data[:, 1].astype(int))), shape=(rows, cols))
    return matrix, label


def smallest_singular_value(op: OperatorMatrix, method: str = "sparse") -> float:
    """
    σ_min of ``op`` as a map on L²(measure), i.e. of m^{1/2} M m^{-1/2}.

    ``sparse`` factors the matrix once (splu) and runs eigsh on (B^H B)^{-1};
    ``dense`` is a full SVD for small oracle sizes.
    """
    root = np.sqrt(op.measure)
    B = sp.diags(root) @ op.matrix @ sp.diags(1.0 / root)
    if method == "dense":
        return float(np.linalg.svd(B.toarray(), compute_uv=False)[-1])
    if method != "sparse":
        raise ValueError(f"Unknown singular value method '{method}'")

    lu = splu(sp.csc_matrix(B))
    dtype = np.result_type(B.dtype, np.float64)

    def inverse_gram(v):
        return lu.solve(lu.solve(np.asarray(v, dtype=dtype), trans="H"))

    gram = LinearOperator(B.shape, matvec=inverse_gram, dtype=dtype)
    mu = eigsh(gram, k=1, which="LM", return_eigenvectors=False, tol=1e-12)
    return float(1.0 / np.sqrt(np.max(np.real(mu))))
