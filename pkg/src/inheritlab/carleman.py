"""
Radial matrix models of the conjugated-operator machinery at infinity.

With the boundary-defining coordinate x = 1/r, the radial vector field
x²D_x becomes i∂_r and the scattering measure dx/x² becomes dr. The model
therefore lives on a grid in r beyond r₁ = 1/x₁, with Dirichlet data at r₁.
Every operator is an ``OperatorMatrix`` for the dual-cell measure of the
grid, so adjoints and real/imaginary parts are the measure ones.

Remainder terms are measured on localized Gaussian packets u as
max ‖x^{-w} R u‖ / ‖(H + 1) u‖, where w is the decay order the identity
promises. Rows next to either end of the grid are reported separately.
"""

import logging
import time
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import Polynomial
from scipy.optimize import brentq
from scipy.special import comb

from .config import SMOOTHSTEP_ORDER
from .errors import ResolutionError
from .operators import OperatorMatrix, smallest_singular_value

logger = logging.getLogger(__name__)

SCHEMES = ("uniform_r", "uniform_x")
PACKET_WIDTH = 0.75
BOUNDARY_ROWS = 2


# -------------------------------------------------------------------
# Grid
# -------------------------------------------------------------------

@dataclass(frozen=True)
class RadialGrid:
    """
    Interior nodes between r₁ = 1/x₁ and the outer end.

    ``uniform_r`` spaces n interior nodes evenly over [r₁, r₁ + length];
    ``uniform_x`` spaces them evenly in x over (0, x₁] and ignores ``length``.
    """
    x1: float = 0.5
    n: int = 255
    length: float = 32.0
    scheme: str = "uniform_r"

    def __post_init__(self):
        if not (0.0 < self.x1 <= 0.5):
            raise ValueError(f"x1 must lie in (0, 1/2], got {self.x1}")
        if self.n < 3:
            raise ValueError(f"RadialGrid needs at least 3 interior nodes, got {self.n}")
        if self.length <= 0.0:
            raise ValueError(f"Grid length must be positive, got {self.length}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"Unknown spacing scheme '{self.scheme}'; choose from {SCHEMES}")

    @property
    def r1(self) -> float:
        return 1.0 / self.x1

    @cached_property
    def nodes(self) -> np.ndarray:
        """All n + 2 nodes, both ends included."""
        if self.scheme == "uniform_r":
            return self.r1 + (self.length / (self.n + 1)) * np.arange(self.n + 2)
        dx = self.x1 / (self.n + 2)
        return 1.0 / (self.x1 - dx * np.arange(self.n + 2))

    @property
    def r(self) -> np.ndarray:
        return self.nodes[1:-1]

    @property
    def x(self) -> np.ndarray:
        return 1.0 / self.r

    @property
    def r_end(self) -> float:
        return float(self.nodes[-1])

    @cached_property
    def steps(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def spacing(self) -> float:
        return float(np.max(self.steps))

    @cached_property
    def measure(self) -> np.ndarray:
        """Dual-cell lengths in r, i.e. the weights of dx/x²."""
        return 0.5 * (self.nodes[2:] - self.nodes[:-2])

    def refined(self) -> "RadialGrid":
        n = 2 * self.n + 1 if self.scheme == "uniform_r" else 2 * self.n + 2
        return RadialGrid(self.x1, n, self.length, self.scheme)

    def doubled(self) -> "RadialGrid":
        """Same spacing, twice the length beyond r₁."""
        if self.scheme != "uniform_r":
            raise ValueError("Domain doubling is defined for uniform_r grids only")
        return RadialGrid(self.x1, 2 * self.n + 1, 2.0 * self.length, self.scheme)


def _diag(values) -> sp.csr_matrix:
    return sp.diags(np.asarray(values), format="csr")


def stiffness_matrix(grid: RadialGrid) -> sp.csr_matrix:
    """Symmetric form of −∂_r² with Dirichlet ends: (Ku, u) = ∑ |Δu|²/Δr."""
    inv = 1.0 / grid.steps
    main = inv[:-1] + inv[1:]
    off = -inv[1:-1]
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def radial_derivative_matrix(grid: RadialGrid) -> sp.csr_matrix:
    """x²D_x = i∂_r by centered differences; measure-symmetric."""
    half = 0.5j / grid.measure
    return sp.diags([-half[1:], half[:-1]], [-1, 1], format="csr")


def outgoing_ratio(mu: float, step: float) -> complex:
    """
    Ghost ratio z = u_{N+1}/u_N of the free discrete equation at energy μ:
    the root of z² − (2 − μΔ²)z + 1 = 0 that is outgoing (μ > 0) or decaying (μ < 0).
    """
    b = 2.0 - mu * step ** 2
    if b < -2.0:
        raise ResolutionError(f"Spacing {step:.4g} does not resolve energy {mu}: μΔ² = {mu * step ** 2:.3g} > 4")
    root = np.emath.sqrt(b * b - 4.0)
    candidates = np.array([(b + root) / 2.0, (b - root) / 2.0], dtype=complex)
    if abs(b) < 2.0:
        return complex(candidates[np.argmax(candidates.imag)])
    return complex(candidates[np.argmin(np.abs(candidates))])


def model_potential(grid: RadialGrid, model: str, delta: float, amplitude: float) -> np.ndarray:
    if model == "flat":
        return np.zeros(grid.n)
    if model == "perturbed":
        return amplitude * grid.x ** delta
    raise ValueError(f"Unknown radial model '{model}'; choose 'flat' or 'perturbed'")


def build_H(grid: RadialGrid, model: str = "flat", delta: float = 0.5, amplitude: float = 0.0,
            closure: str = "dirichlet", lam: Optional[float] = None) -> OperatorMatrix:
    """
    H = (x²D_x)² + amplitude·x^δ on the grid.

    :param closure: ``dirichlet`` (self-adjoint) or ``outgoing``, which needs
        ``lam`` and a uniform_r grid and closes the last row with the exact
        free discrete wave at energy lam − V(r_end)
    :raises ResolutionError: x^δ changes by more than 50% across one cell
    """
    potential = model_potential(grid, model, delta, amplitude)
    if model == "perturbed" and delta > 0.0:
        growth = (grid.nodes[1:] / grid.nodes[:-1]) ** delta - 1.0
        if np.max(growth) > 0.5:
            raise ResolutionError(
                f"Grid '{grid.scheme}' with max step {grid.spacing:.4g} is too coarse for δ = {delta}: "
                f"x^δ varies by {100 * np.max(growth):.0f}% across a cell"
            )
    matrix = (_diag(1.0 / grid.measure) @ stiffness_matrix(grid) + _diag(potential)).tocsr()
    if closure == "outgoing":
        if lam is None or grid.scheme != "uniform_r":
            raise ValueError("The outgoing closure needs lam and a uniform_r grid")
        step = grid.steps[-1]
        z = outgoing_ratio(lam - potential[-1], step)
        matrix = matrix.astype(complex).tolil()
        matrix[grid.n - 1, grid.n - 1] -= z / step ** 2
        matrix = matrix.tocsr()
    elif closure != "dirichlet":
        raise ValueError(f"Unknown closure '{closure}'")
    label = "H" if model == "flat" else f"H[{amplitude}x^{delta}]"
    return OperatorMatrix(matrix, grid.measure, label, closure == "dirichlet")


# -------------------------------------------------------------------
# Weights
# -------------------------------------------------------------------

@lru_cache(maxsize=None)
def smoothstep(order: int = SMOOTHSTEP_ORDER) -> Polynomial:
    """The polynomial step of odd ``order`` with (order − 1)/2 vanishing derivatives at both ends."""
    if order < 1 or order % 2 == 0:
        raise ValueError(f"Smoothstep order must be odd and positive, got {order}")
    N = (order - 1) // 2
    coeffs = [comb(N + k, k, exact=True) * comb(2 * N + 1, N - k, exact=True) * (-1) ** k for k in range(N + 1)]
    return Polynomial([0] * (N + 1) + coeffs)


def cutoff(r: np.ndarray, band: Tuple[float, float], order: int = SMOOTHSTEP_ORDER):
    """(χ, χ′) rising from 0 at band[0] to 1 at band[1], as functions of r."""
    lo, hi = band
    step = smoothstep(order)
    t = np.clip((np.asarray(r) - lo) / (hi - lo), 0.0, 1.0)
    return step(t), step.deriv()(t) / (hi - lo)


@dataclass(frozen=True)
class WeightFamily:
    """
    F(x) = φ(x)·α/x + β·log(1 + γ/(βx)), i.e. F = φαr + β log(1 + γr/β) in r.

    φ is the smoothstep cutoff over ``band`` (in r). When α > 0 the
    semiclassical parameter is h = 1/α.
    """
    alpha: float = 0.0
    beta: float = 1.0
    gamma: float = 0.0
    band: Tuple[float, float] = (4.0, 8.0)
    order: int = SMOOTHSTEP_ORDER

    def __post_init__(self):
        if self.alpha < 0.0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.beta < 1.0:
            raise ValueError(f"beta must be >= 1, got {self.beta}")
        if not (0.0 <= self.gamma <= 1.0):
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if not (0.0 < self.band[0] < self.band[1]):
            raise ValueError(f"Cutoff band must satisfy 0 < lo < hi, got {self.band}")

    @classmethod
    def for_grid(cls, grid: RadialGrid, alpha: float = 0.0, beta: float = 1.0, gamma: float = 0.0) -> "WeightFamily":
        return cls(alpha, beta, gamma, (2.0 * grid.r1, 4.0 * grid.r1))

    @property
    def h(self) -> Optional[float]:
        return 1.0 / self.alpha if self.alpha > 0.0 else None

    def values(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        phi, _ = cutoff(r, self.band, self.order)
        return phi * self.alpha * r + self.beta * np.log1p(self.gamma * r / self.beta)

    def radial_derivative(self, r) -> np.ndarray:
        """−x²∂_xF = ∂_rF."""
        r = np.asarray(r, dtype=float)
        phi, dphi = cutoff(r, self.band, self.order)
        return self.alpha * (dphi * r + phi) + self.gamma / (1.0 + self.gamma * r / self.beta)

    def derivative_bound_defect(self, r) -> float:
        """
        Violation of 0 ≤ −x²∂_xF ≤ α + γ at nodes outside the cutoff band
        (inside it the derivative also carries αrφ′).
        """
        r = np.asarray(r, dtype=float)
        outside = (r <= self.band[0]) | (r >= self.band[1])
        d = self.radial_derivative(r[outside])
        if d.size == 0:
            return 0.0
        return float(max(np.max(-d, initial=0.0), np.max(d - (self.alpha + self.gamma), initial=0.0)))

    def closed_form_defect(self, r) -> float:
        """max |−x²∂_xF − (α + γ(1 + γ/(βx))^{-1})| where φ ≡ 1."""
        r = np.asarray(r, dtype=float)
        r = r[r >= self.band[1]]
        if r.size == 0:
            return 0.0
        exact = self.alpha + self.gamma / (1.0 + self.gamma * r / self.beta)
        return float(np.max(np.abs(self.radial_derivative(r) - exact)))

    def with_beta(self, beta: float) -> "WeightFamily":
        return WeightFamily(self.alpha, beta, self.gamma, self.band, self.order)


def beta_monotone_defect(weight: WeightFamily, r, betas: Sequence[float]) -> float:
    """Largest decrease of F_β(r) as β increases; 0 when the family is monotone."""
    values = [weight.with_beta(b).values(r) for b in sorted(betas)]
    drops = [np.max(lo - hi, initial=0.0) for lo, hi in zip(values, values[1:])]
    return float(max(drops, default=0.0))


# -------------------------------------------------------------------
# Remainder measurement
# -------------------------------------------------------------------

def wave_packets(grid: RadialGrid, centers: Optional[Sequence[float]] = None, width: float = PACKET_WIDTH,
                 count: int = 6) -> List[np.ndarray]:
    """Gaussian packets centred at r₁ + [4, 14] by default."""
    if centers is None:
        centers = grid.r1 + np.linspace(4.0, 14.0, count)
    packets = []
    for c in centers:
        if c - 4.0 * width < grid.r1 or c + 4.0 * width > grid.r_end:
            raise ValueError(f"Packet at r = {c} does not fit in [{grid.r1}, {grid.r_end:.4g}]")
        packets.append(np.exp(-0.5 * ((grid.r - c) / width) ** 2))
    return packets


@dataclass
class RemainderNorm:
    interior: float
    boundary: float

    def to_record(self) -> Dict[str, float]:
        return {"interior": self.interior, "boundary": self.boundary}


def weighted_remainder(remainder: sp.spmatrix, grid: RadialGrid, H: OperatorMatrix, power: float,
                       packets: Sequence[np.ndarray]) -> RemainderNorm:
    """max over packets of ‖r^{power} R u‖ / ‖(H + 1)u‖, interior and end rows apart."""
    weight = grid.r ** power
    edge = np.zeros(grid.n, dtype=bool)
    edge[:BOUNDARY_ROWS] = True
    edge[-BOUNDARY_ROWS:] = True
    interior, boundary = 0.0, 0.0
    for u in packets:
        scale = H.norm(H.apply(u) + u)
        v = weight * (remainder @ u)
        mass = grid.measure * np.abs(v) ** 2
        interior = max(interior, float(np.sqrt(np.sum(mass[~edge]))) / scale)
        boundary = max(boundary, float(np.sqrt(np.sum(mass[edge]))) / scale)
    return RemainderNorm(interior, boundary)


@dataclass
class RefinementStudy:
    label: str
    sizes: List[int] = field(default_factory=list)
    values: List[float] = field(default_factory=list)
    band: float = 0.2

    @property
    def changes(self) -> List[float]:
        out = []
        for a, b in zip(self.values, self.values[1:]):
            scale = max(abs(a), abs(b))
            out.append(abs(b - a) / scale if scale > 0.0 else 0.0)
        return out

    @property
    def stable(self) -> bool:
        return all(c < self.band for c in self.changes)

    def to_record(self) -> Dict[str, object]:
        return {"label": self.label, "sizes": self.sizes, "values": self.values, "changes": self.changes,
                "band": self.band, "stable": self.stable}


def refinement_study(label: str, grid: RadialGrid, measure: Callable[[RadialGrid], float], refinements: int = 3,
                     band: float = 0.2) -> RefinementStudy:
    """Evaluate ``measure`` on ``grid`` and on ``refinements`` successive halvings of its spacing."""
    if refinements < 1:
        raise ValueError(f"A refinement study needs at least 1 refinement, got {refinements}")
    study = RefinementStudy(label, band=band)
    timings = []
    for _ in range(refinements + 1):
        t0 = time.perf_counter()
        study.sizes.append(grid.n)
        study.values.append(float(measure(grid)))
        timings.append((f"n={grid.n}", time.perf_counter() - t0))
        grid = grid.refined()
    logger.info("[%s] timing breakdown:", label)
    for name, seconds in timings:
        logger.info("  %-12s %.3fs", name + ":", seconds)
    if not study.stable:
        logger.warning("%s: changes %s exceed the %.0f%% refinement band", label, study.changes, 100 * band)
    return study


# -------------------------------------------------------------------
# Conjugation and commutators
# -------------------------------------------------------------------

@dataclass
class Conjugation:
    P: OperatorMatrix
    re: OperatorMatrix
    im: OperatorMatrix
    weight: WeightFamily
    lam: float
    dF: np.ndarray


def conjugate(H: OperatorMatrix, grid: RadialGrid, weight: WeightFamily, lam: float) -> Conjugation:
    """
    P = e^F (H − λ) e^{-F} as an entrywise similarity: P_ij = e^{F_i − F_j}(H − λ)_ij.

    Only differences of F enter, so large α/x does not overflow.
    """
    F = weight.values(grid.r)
    coo = H.matrix.tocoo()
    data = coo.data * np.exp(F[coo.row] - F[coo.col])
    conj = sp.csr_matrix((data, (coo.row, coo.col)), shape=H.shape)
    P = OperatorMatrix(conj - lam * sp.identity(H.n, format="csr"), H.measure, "P(F)")
    return Conjugation(P, P.real_part(), P.imag_part(), weight, lam, weight.radial_derivative(grid.r))


def _model_parts(conj: Conjugation, H: OperatorMatrix, grid: RadialGrid):
    """(H + (x²D_xF)², 2(x²∂_xF)(x²D_x)) with x²D_xF = i∂_rF and x²∂_xF = −∂_rF."""
    q1 = H.matrix - _diag(conj.dF ** 2)
    q1_prime = 2.0 * _diag(-conj.dF) @ radial_derivative_matrix(grid)
    return q1.tocsr(), q1_prime.tocsr()


@dataclass
class StructureReport:
    re_defect: RemainderNorm
    im_defect: RemainderNorm
    derivative_bound: float

    def to_record(self) -> Dict[str, object]:
        return {"re_defect": self.re_defect.to_record(), "im_defect": self.im_defect.to_record(),
                "derivative_bound": self.derivative_bound}


def structure_check(conj: Conjugation, H: OperatorMatrix, grid: RadialGrid, delta: float = 0.5,
                    packets: Optional[Sequence[np.ndarray]] = None) -> StructureReport:
    """x^{-δ}-weighted sizes of Re P − (H + (x²D_xF)² − λ) and Im P − 2(x²∂_xF)(x²D_x)."""
    packets = packets if packets is not None else wave_packets(grid)
    q1, q1_prime = _model_parts(conj, H, grid)
    shift = conj.lam * sp.identity(H.n, format="csr")
    re_defect = weighted_remainder(conj.re.matrix - (q1 - shift), grid, H, delta, packets)
    im_defect = weighted_remainder(conj.im.matrix - q1_prime, grid, H, delta, packets)
    return StructureReport(re_defect, im_defect, conj.weight.derivative_bound_defect(grid.r))


@dataclass
class CommutatorAudit:
    matrix: OperatorMatrix
    remainder: RemainderNorm

    def to_record(self) -> Dict[str, object]:
        return {"label": self.matrix.label, "remainder": self.remainder.to_record()}


def commutator_audit(conj: Conjugation, H: OperatorMatrix, grid: RadialGrid, delta: float = 0.5,
                     packets: Optional[Sequence[np.ndarray]] = None) -> CommutatorAudit:
    """
    i[Re P, Im P] against i[H + (x²D_xF)², 2(x²∂_xF)(x²D_x)]; the difference
    is reported with x^{1+δ} divided out.
    """
    packets = packets if packets is not None else wave_packets(grid)
    lhs = conj.re.commutator(conj.im)
    q1, q1_prime = _model_parts(conj, H, grid)
    model = 1j * (q1 @ q1_prime - q1_prime @ q1)
    return CommutatorAudit(lhs, weighted_remainder(lhs.matrix - model, grid, H, 1.0 + delta, packets))


# -------------------------------------------------------------------
# Positive commutator identities
# -------------------------------------------------------------------

def _symmetrized(weight: np.ndarray, D: sp.csr_matrix) -> sp.csr_matrix:
    """½(w D + D w)."""
    W = _diag(weight)
    return (0.5 * (W @ D + D @ W)).tocsr()


@dataclass
class MourreReport:
    lam: float
    K: RemainderNorm
    K_tilde: RemainderNorm

    def to_record(self) -> Dict[str, object]:
        return {"lambda": self.lam, "K": self.K.to_record(), "K_tilde": self.K_tilde.to_record()}


def mourre_decomposition_check(grid: RadialGrid, lam: float, delta: float = 0.5,
                               packets: Optional[Sequence[np.ndarray]] = None) -> MourreReport:
    """
    Flat model, B = ½(χx²D_x + (χx²D_x)*) and A = ½(χxD_x + (χxD_x)*):

        K = i[B, H] − (2λx − 2BxB + (H − λ)R + R*(H − λ)),  R = χx,
        K̃ = i[A, H] − (2λ + (H − λ)R̃ + R̃*(H − λ)),        R̃ = χ,

    reported with x^{1+δ} and x^δ divided out respectively.
    """
    if lam < 0.0:
        raise ValueError(f"The Mourre decomposition is checked for λ >= 0, got {lam}")
    packets = packets if packets is not None else wave_packets(grid)
    H = build_H(grid)
    chi, _ = cutoff(grid.r, (2.0 * grid.r1, 4.0 * grid.r1))
    D = radial_derivative_matrix(grid)
    X = _diag(grid.x)
    I = sp.identity(grid.n, format="csr")
    shifted = H.matrix - lam * I

    B = _symmetrized(chi, D)
    R = _diag(chi * grid.x)
    lhs_B = 1j * (B @ H.matrix - H.matrix @ B)
    rhs_B = 2.0 * lam * X - 2.0 * B @ X @ B + shifted @ R + R @ shifted
    K = weighted_remainder(lhs_B - rhs_B, grid, H, 1.0 + delta, packets)

    A = _symmetrized(chi * grid.r, D)
    R_tilde = _diag(chi)
    lhs_A = 1j * (A @ H.matrix - H.matrix @ A)
    rhs_A = 2.0 * lam * I + shifted @ R_tilde + R_tilde @ shifted
    K_tilde = weighted_remainder(lhs_A - rhs_A, grid, H, delta, packets)
    return MourreReport(lam, K, K_tilde)


@dataclass
class PolyWeightEntry:
    t: float
    factor_min: float
    factor_max: float
    positive: bool
    remainder: RemainderNorm

    def to_record(self) -> Dict[str, object]:
        return {"t": self.t, "factor_min": self.factor_min, "factor_max": self.factor_max,
                "positive": self.positive, "remainder": self.remainder.to_record()}


def _exact_factor(s: Fraction, k: Fraction, t: Fraction, r: float) -> Fraction:
    tx = t * Fraction(r)
    return s - k * tx / (1 + tx)


def poly_weight_check(grid: RadialGrid, s: float, k: float, t_values: Sequence[float], delta: float = 0.5,
                      require_positive: bool = True,
                      packets: Optional[Sequence[np.ndarray]] = None) -> List[PolyWeightEntry]:
    """
    B_{s,k,t} = ½(w x²D_x + (w x²D_x)*), w = χ x^{-s}(1 + t/x)^{-k}.

    The scalar factor s − k(t/x)/(1 + t/x) is evaluated in exact rational
    arithmetic at every node. The remainder i[B, H] − (w′H + Hw′), where
    w′ = ∂_r w carries 2x^{1-s}(1+t/x)^{-k}(s − k(t/x)/(1+t/x)) beyond the
    cutoff, is reported relative to its allowed growth r^{s-1-δ}.
    """
    if require_positive and s - k < 1:
        raise ValueError(f"Positivity needs s - k >= 1, got s = {s}, k = {k}")
    if any(t < 0.0 or t > 1.0 for t in t_values):
        raise ValueError(f"t values must lie in [0, 1], got {list(t_values)}")
    packets = packets if packets is not None else wave_packets(grid)
    H = build_H(grid)
    D = radial_derivative_matrix(grid)
    r = grid.r
    chi, dchi = cutoff(r, (2.0 * grid.r1, 4.0 * grid.r1))
    s_q, k_q = Fraction(s), Fraction(k)
    lower = s_q - k_q
    entries = []
    for t in t_values:
        decay = (1.0 + t * r) ** (-k)
        w = chi * r ** s * decay
        dw = dchi * r ** s * decay + chi * r ** (s - 1.0) * decay * (s - k * t * r / (1.0 + t * r))
        B = _symmetrized(w, D)
        lhs = 1j * (B @ H.matrix - H.matrix @ B)
        principal = _diag(dw) @ H.matrix + H.matrix @ _diag(dw)
        remainder = weighted_remainder(lhs - principal, grid, H, -(s - 1.0 - delta), packets)

        t_q = Fraction(t)
        factors = [_exact_factor(s_q, k_q, t_q, float(node)) for node in r]
        f_min, f_max = min(factors), max(factors)
        positive = f_min >= lower and f_max <= s_q
        entries.append(PolyWeightEntry(float(t), float(f_min), float(f_max), bool(positive), remainder))
    return entries


# -------------------------------------------------------------------
# Squared-norm identity
# -------------------------------------------------------------------

@dataclass
class SquaredNormIdentity:
    re_sq: float
    im_sq: float
    commutator: float
    total: float
    p_sq: float

    @property
    def defect(self) -> float:
        scale = self.re_sq + self.im_sq + abs(self.commutator)
        return abs(self.total - self.p_sq) / scale if scale > 0.0 else abs(self.total - self.p_sq)

    def to_record(self) -> Dict[str, float]:
        return {"re_sq": self.re_sq, "im_sq": self.im_sq, "commutator": self.commutator, "total": self.total,
                "p_sq": self.p_sq, "defect": self.defect}


def squared_norm_identity(P: OperatorMatrix, psi: np.ndarray) -> SquaredNormIdentity:
    """‖Re P ψ‖² + ‖Im P ψ‖² + ⟨ψ, i[Re P, Im P]ψ⟩, which equals ‖Pψ‖²."""
    re, im = P.real_part(), P.imag_part()
    comm = re.commutator(im)
    re_sq = re.norm(re.apply(psi)) ** 2
    im_sq = im.norm(im.apply(psi)) ** 2
    middle = float(np.real(P.inner(psi, comm.apply(psi))))
    return SquaredNormIdentity(re_sq, im_sq, middle, re_sq + im_sq + middle, P.norm(P.apply(psi)) ** 2)


# -------------------------------------------------------------------
# Main API: spectral probe
# -------------------------------------------------------------------

def _shoot_inward(grid: RadialGrid, lam: float, potential: np.ndarray) -> float:
    """
    Value at r₁ of the discrete solution that matches the decaying closure at
    the outer end; an eigenvalue at λ makes it vanish. Normalized to keep sign.
    """
    step = grid.steps[-1]
    z = outgoing_ratio(lam - potential[-1], step)
    if abs(z.imag) > 0.0:
        raise ValueError(f"λ = {lam} is not below the potential at r_end; no decaying closure")
    u_next, u = z.real, 1.0
    for j in range(grid.n - 1, -1, -1):
        u_prev = (2.0 + step ** 2 * (potential[j] - lam)) * u - u_next
        u_next, u = u, u_prev
        scale = max(abs(u), abs(u_next))
        if scale > 1e100:
            u, u_next = u / scale, u_next / scale
    return u / max(abs(u), abs(u_next))


def tune_bound_state(grid: RadialGrid, lam: float = -1.0, delta: float = 0.5,
                     bracket: Tuple[float, float] = (0.1, 30.0), samples: int = 60) -> float:
    """
    Depth A for which V = −A·x^δ has a discrete eigenvalue exactly at λ < 0:
    a coarse scan for the first sign change of the shooting value, then brentq.
    """
    if lam >= 0.0:
        raise ValueError(f"The bound-state control needs λ < 0, got {lam}")
    if grid.scheme != "uniform_r":
        raise ValueError("Bound-state tuning needs a uniform_r grid")

    def mismatch(depth: float) -> float:
        return _shoot_inward(grid, lam, -depth * grid.x ** delta)

    depths = np.geomspace(bracket[0], bracket[1], samples)
    previous = mismatch(depths[0])
    for lo, hi in zip(depths, depths[1:]):
        current = mismatch(hi)
        if np.sign(current) != np.sign(previous):
            depth = brentq(mismatch, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=200)
            logger.info("bound state at λ = %g for depth A = %.12g", lam, depth)
            return float(depth)
        previous = current
    raise ValueError(f"No bound state at λ = {lam} for depths in {bracket}")


@dataclass
class ProbeReport:
    lam: float
    amplitude: float
    sizes: List[int] = field(default_factory=list)
    r_end: List[float] = field(default_factory=list)
    sigma_min: List[float] = field(default_factory=list)
    oracle_gap: List[float] = field(default_factory=list)
    band: float = 0.1
    seconds: float = 0.0

    @property
    def ratios(self) -> List[float]:
        return [b / a for a, b in zip(self.sigma_min, self.sigma_min[1:])]

    @property
    def verdict(self) -> str:
        if self.lam == 0.0:
            return "threshold_inconclusive"
        if self.lam < 0.0:
            return "below_threshold"
        return "no_embedded_eigenvalue" if all(q >= 1.0 - self.band for q in self.ratios) else "decaying"

    def to_record(self) -> Dict[str, object]:
        return {"lambda": self.lam, "amplitude": self.amplitude, "sizes": self.sizes, "r_end": self.r_end,
                "sigma_min": self.sigma_min, "ratios": self.ratios, "oracle_gap": self.oracle_gap,
                "band": self.band, "verdict": self.verdict}


def no_embedded_eigenvalue_probe(grid: RadialGrid, lam: float, refinements: int = 3, model: str = "flat",
                                 delta: float = 0.5, amplitude: float = 0.0, weight_power: float = 1.0,
                                 band: float = 0.1, oracle: bool = True) -> ProbeReport:
    """
    σ_min of r^{p}(H − λ)r^{p} with the outgoing closure, as the domain
    doubles at fixed spacing. Dense SVDs check the two smallest sizes.
    """
    if refinements < 3:
        raise ValueError(f"The probe needs at least 3 grids, got {refinements}")
    started = time.perf_counter()
    report = ProbeReport(lam, amplitude if model == "perturbed" else 0.0, band=band)
    timings = []
    for i in range(refinements):
        t0 = time.perf_counter()
        H = build_H(grid, model, delta, amplitude, closure="outgoing", lam=lam)
        W = _diag(grid.r ** weight_power)
        op = OperatorMatrix(W @ (H.matrix - lam * sp.identity(grid.n, format="csr")) @ W, grid.measure,
                            f"r^{weight_power}(H - {lam})r^{weight_power}")
        sigma = smallest_singular_value(op, "sparse")
        if oracle and i < 2:
            dense = smallest_singular_value(op, "dense")
            report.oracle_gap.append(abs(sigma - dense) / max(dense, np.finfo(float).tiny))
        report.sizes.append(grid.n)
        report.r_end.append(grid.r_end)
        report.sigma_min.append(sigma)
        timings.append((f"n={grid.n}", time.perf_counter() - t0))
        grid = grid.doubled()
    report.seconds = time.perf_counter() - started

    logger.info("[carleman probe] timing breakdown:")
    for name, seconds in timings:
        logger.info("  %-12s %.3fs", name + ":", seconds)
    if report.verdict == "decaying":
        logger.warning("probe at λ = %g: σ_min trend %s decays", lam, report.ratios)
    return report


@dataclass
class BoundStateControl:
    depth: float
    reference: ProbeReport
    control: ProbeReport

    @property
    def level(self) -> float:
        return max(self.control.sigma_min) / min(self.reference.sigma_min)

    @property
    def detected(self) -> bool:
        return self.level < 1e-3

    def to_record(self) -> Dict[str, object]:
        return {"depth": self.depth, "level": self.level, "detected": self.detected,
                "reference": self.reference.to_record(), "control": self.control.to_record()}


def bound_state_control(grid: RadialGrid, lam: float = -1.0, reference_lam: float = 1.0, delta: float = 0.5,
                        refinements: int = 3) -> BoundStateControl:
    """Probe at λ < 0 with a tuned attractive well, against the flat probe at reference_lam."""
    depth = tune_bound_state(grid, lam, delta)
    reference = no_embedded_eigenvalue_probe(grid, reference_lam, refinements, oracle=False)
    control = no_embedded_eigenvalue_probe(grid, lam, refinements, "perturbed", delta, -depth, oracle=False)
    return BoundStateControl(depth, reference, control)


# -------------------------------------------------------------------
# Semiclassical sweep
# -------------------------------------------------------------------

@dataclass
class SemiclassicalEntry:
    alpha: float
    h: float
    c: float

    def to_record(self) -> Dict[str, float]:
        return {"alpha": self.alpha, "h": self.h, "c": self.c}


def semiclassical_commutator_check(x1: float = 0.5, length: float = 32.0, alphas: Sequence[float] = (4, 8, 16, 32),
                                   lam: float = 1.0, nodes_per_unit_alpha: float = 4.0,
                                   count: int = 4) -> List[SemiclassicalEntry]:
    """
    With F = φα/x, h = 1/α and P_h = h²P(F), measure on packets beyond the cutoff

        c(h) = (⟨ψ, i[Re P_h, Im P_h]ψ⟩ − h⟨ψ, (2(x Re P_h + Re P_h x) − Im P_h x Im P_h)ψ⟩) / (h⟨ψ, xψ⟩),

    i.e. the commutator form with the absorbable Re P_h and Im P_h terms
    removed, as a multiple of h⟨ψ, xψ⟩. The radial model gives c ≈ 4.
    """
    n = int(np.ceil(length * nodes_per_unit_alpha * max(alphas)))
    grid = RadialGrid(x1, n, length)
    H = build_H(grid)
    X = _diag(grid.x)
    packets = wave_packets(grid, centers=4.0 * grid.r1 + np.linspace(4.0, 12.0, count))
    entries = []
    for alpha in alphas:
        weight = WeightFamily.for_grid(grid, alpha=float(alpha))
        h = weight.h
        conj = conjugate(H, grid, weight, lam)
        re, im = conj.re.scaled(h ** 2), conj.im.scaled(h ** 2)
        comm = re.commutator(im)
        absorbable = h * (2.0 * (X @ re.matrix + re.matrix @ X) - im.matrix @ X @ im.matrix)
        worst = np.inf
        for psi in packets:
            q = np.real(H.inner(psi, comm.apply(psi)) - H.inner(psi, absorbable @ psi))
            worst = min(worst, float(q / (h * np.real(H.inner(psi, grid.x * psi)))))
        entries.append(SemiclassicalEntry(float(alpha), h, worst))
    if min(e.c for e in entries) < 2.0:
        logger.warning("semiclassical sweep: c(h) = %s drops below 2", [e.c for e in entries])
    return entries
