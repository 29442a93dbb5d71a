"""Exact statevector simulation of small qubit registers.

Conventions used throughout the package:

- Angles are *octants*: integers modulo 8, each unit worth pi/4 radians.
  All protocol angle arithmetic happens on these integers, so there is no
  angle rounding anywhere; floats only appear inside gate matrices.
- Qubit 0 is the leftmost tensor factor.
- Measurements remove the measured qubit from the register and re-index
  the remaining qubits downward. This keeps registers small through long
  measurement sequences.
- Randomness always comes from an explicitly passed numpy Generator.
"""
from __future__ import annotations

from math import pi, sqrt

import numpy as np

OCTANT = pi / 4

NORM_ATOL = 1e-12
EQUALITY_ATOL = 1e-9


def octant(value: int) -> int:
    """Normalize an angle to its canonical octant representative in 0..7."""
    return int(value) % 8


def octant_to_radians(value: int) -> float:
    return octant(value) * OCTANT


def flip(value: int, bit: int) -> int:
    """Multiply an octant angle by (-1)^bit, staying mod 8."""
    return octant(-value if bit & 1 else value)


_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)
_H = np.array([[1, 1], [1, -1]], dtype=complex) / sqrt(2)


def z_rot_matrix(theta: int) -> np.ndarray:
    """diag(1, e^{i theta pi/4}) for an octant angle."""
    return np.diag([1.0, np.exp(1j * octant_to_radians(theta))]).astype(complex)


class PureState:
    """A pure state of a small qubit register.

    Gate methods return new states; nothing mutates in place, which makes
    branch enumeration (projecting on both outcomes of a measurement) safe
    without defensive copies.
    """

    __slots__ = ("amps",)

    def __init__(self, amps: np.ndarray, *, _checked: bool = False):
        amps = np.asarray(amps, dtype=complex).reshape(-1)
        if amps.size == 0 or amps.size & (amps.size - 1):
            raise ValueError(f"amplitude vector length {amps.size} is not a power of two")
        if not _checked:
            norm = np.linalg.norm(amps)
            if abs(norm - 1.0) > 1e-6:
                raise ValueError(f"state norm {norm} too far from 1")
            amps = amps / norm
        self.amps = amps

    @property
    def num_qubits(self) -> int:
        return int(self.amps.size).bit_length() - 1

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    # ------------------------------------------------------------ building

    @classmethod
    def computational(cls, bits: str | tuple[int, ...]) -> "PureState":
        """Basis state |b_0 b_1 ...> with qubit 0 leftmost."""
        bits = tuple(int(b) for b in bits)
        amps = np.zeros(2 ** len(bits), dtype=complex)
        index = 0
        for b in bits:
            index = (index << 1) | (b & 1)
        amps[index] = 1.0
        return cls(amps, _checked=True)

    def tensor(self, other: "PureState") -> "PureState":
        return PureState(np.kron(self.amps, other.amps), _checked=True)

    # --------------------------------------------------------------- gates

    def _apply_single(self, matrix: np.ndarray, q: int) -> "PureState":
        n = self.num_qubits
        if not 0 <= q < n:
            raise IndexError(f"qubit {q} out of range for {n}-qubit register")
        psi = self.amps.reshape([2] * n)
        psi = np.moveaxis(psi, q, 0)
        psi = np.tensordot(matrix, psi, axes=([1], [0]))
        return PureState(np.moveaxis(psi, 0, q).reshape(-1), _checked=True)

    def x(self, q: int) -> "PureState":
        return self._apply_single(_X, q)

    def z(self, q: int) -> "PureState":
        return self._apply_single(_Z, q)

    def h(self, q: int) -> "PureState":
        return self._apply_single(_H, q)

    def z_rot(self, q: int, theta: int) -> "PureState":
        """Z(theta) = diag(1, e^{i theta pi/4}), theta an octant."""
        return self._apply_single(z_rot_matrix(theta), q)

    def cnot(self, control: int, target: int) -> "PureState":
        n = self.num_qubits
        if control == target:
            raise ValueError("control and target coincide")
        for q in (control, target):
            if not 0 <= q < n:
                raise IndexError(f"qubit {q} out of range for {n}-qubit register")
        psi = self.amps.reshape([2] * n).copy()
        sel0 = [slice(None)] * n
        sel1 = [slice(None)] * n
        sel0[control], sel0[target] = 1, 0
        sel1[control], sel1[target] = 1, 1
        a, b = psi[tuple(sel0)].copy(), psi[tuple(sel1)].copy()
        psi[tuple(sel0)], psi[tuple(sel1)] = b, a
        return PureState(psi.reshape(-1), _checked=True)

    def cz(self, q1: int, q2: int) -> "PureState":
        n = self.num_qubits
        if q1 == q2:
            raise ValueError("CZ needs two distinct qubits")
        for q in (q1, q2):
            if not 0 <= q < n:
                raise IndexError(f"qubit {q} out of range for {n}-qubit register")
        psi = self.amps.reshape([2] * n).copy()
        sel = [slice(None)] * n
        sel[q1], sel[q2] = 1, 1
        psi[tuple(sel)] *= -1.0
        return PureState(psi.reshape(-1), _checked=True)

    def reorder(self, new_order: list[int] | tuple[int, ...]) -> "PureState":
        """Permute qubits so position i holds the qubit previously at new_order[i]."""
        n = self.num_qubits
        if sorted(new_order) != list(range(n)):
            raise ValueError("new_order must be a permutation of all qubit indices")
        psi = self.amps.reshape([2] * n)
        return PureState(np.transpose(psi, new_order).reshape(-1), _checked=True)

    # -------------------------------------------------------- measurements

    def project_rotated(self, q: int, delta: int, outcome: int) -> tuple[float, "PureState"]:
        """Project qubit q onto <outcome_delta| and drop the qubit.

        Outcome 0 is the |+_delta> branch, outcome 1 the |-_delta> branch.
        Returns (branch probability, normalized post-state). Probability 0
        branches return an unnormalized zero state.
        """
        n = self.num_qubits
        if not 0 <= q < n:
            raise IndexError(f"qubit {q} out of range for {n}-qubit register")
        psi = np.moveaxis(self.amps.reshape([2] * n), q, 0)
        phase = (-1) ** (outcome & 1) * np.exp(-1j * octant_to_radians(delta))
        sub = (psi[0] + phase * psi[1]).reshape(-1) / sqrt(2)
        prob = float(np.vdot(sub, sub).real)
        if prob > 1e-14:
            sub = sub / sqrt(prob)
        return prob, PureState(sub, _checked=True)

    def project_computational(self, q: int, outcome: int) -> tuple[float, "PureState"]:
        """Project qubit q onto |outcome> and drop the qubit."""
        n = self.num_qubits
        if not 0 <= q < n:
            raise IndexError(f"qubit {q} out of range for {n}-qubit register")
        psi = np.moveaxis(self.amps.reshape([2] * n), q, 0)
        sub = psi[outcome & 1].reshape(-1)
        prob = float(np.vdot(sub, sub).real)
        if prob > 1e-14:
            sub = sub / sqrt(prob)
        return prob, PureState(sub, _checked=True)

    def measure_rotated(self, q: int, delta: int, rng: np.random.Generator) -> tuple[int, "PureState"]:
        """Measure qubit q in {|+_delta>, |-_delta>}; the qubit leaves the register."""
        p0, branch0 = self.project_rotated(q, delta, 0)
        if rng.random() < p0:
            return 0, branch0
        return 1, self.project_rotated(q, delta, 1)[1]

    def measure_computational(self, q: int, rng: np.random.Generator) -> tuple[int, "PureState"]:
        p0, branch0 = self.project_computational(q, 0)
        if rng.random() < p0:
            return 0, branch0
        return 1, self.project_computational(q, 1)[1]

    # ------------------------------------------------------------- queries

    def fidelity(self, other: "PureState") -> float:
        """|<self|other>|^2; equality up to global phase means fidelity 1."""
        if self.amps.size != other.amps.size:
            raise ValueError("register sizes differ")
        return float(abs(np.vdot(self.amps, other.amps)) ** 2)

    def density(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amps, self.amps.conj()), num_qubits=self.num_qubits)

    def copy(self) -> "PureState":
        return PureState(self.amps.copy(), _checked=True)

    def __repr__(self) -> str:
        return f"PureState(num_qubits={self.num_qubits})"


def plus_state(theta: int = 0) -> PureState:
    """(|0> + e^{i theta pi/4} |1>)/sqrt(2)."""
    amps = np.array([1.0, np.exp(1j * octant_to_radians(theta))], dtype=complex) / sqrt(2)
    return PureState(amps, _checked=True)


def states_equal(a: PureState, b: PureState, atol: float = EQUALITY_ATOL) -> bool:
    """State equality up to global phase."""
    return a.fidelity(b) >= 1.0 - atol


class DensityMatrix:
    """A density operator on a small register, used for averaged views."""

    __slots__ = ("matrix",)

    HERMITIAN_ATOL = 1e-10
    TRACE_ATOL = 1e-10
    PSD_ATOL = 1e-9

    def __init__(self, matrix: np.ndarray, *, num_qubits: int | None = None, validate: bool = False):
        matrix = np.asarray(matrix, dtype=complex)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError("density matrix must be square")
        dim = matrix.shape[0]
        if dim == 0 or dim & (dim - 1):
            raise ValueError(f"dimension {dim} is not a power of two")
        if num_qubits is not None and 2 ** num_qubits != dim:
            raise ValueError("num_qubits inconsistent with matrix dimension")
        self.matrix = matrix
        if validate:
            self.validate()

    @property
    def num_qubits(self) -> int:
        return int(self.matrix.shape[0]).bit_length() - 1

    def validate(self) -> None:
        m = self.matrix
        if np.max(np.abs(m - m.conj().T)) > self.HERMITIAN_ATOL:
            raise ValueError("matrix is not Hermitian")
        if abs(np.trace(m).real - 1.0) > self.TRACE_ATOL or abs(np.trace(m).imag) > self.TRACE_ATOL:
            raise ValueError("trace is not 1")
        if np.min(np.linalg.eigvalsh(m)) < -self.PSD_ATOL:
            raise ValueError("matrix is not positive semidefinite")

    @classmethod
    def mixture(cls, terms: list[tuple[float, PureState]]) -> "DensityMatrix":
        """Convex mixture of pure states. Weights must sum to 1 (up to float slack)."""
        if not terms:
            raise ValueError("empty mixture")
        total = sum(w for w, _ in terms)
        dim = terms[0][1].amps.size
        out = np.zeros((dim, dim), dtype=complex)
        for w, state in terms:
            if state.amps.size != dim:
                raise ValueError("mixture terms live on different registers")
            out += (w / total) * np.outer(state.amps, state.amps.conj())
        return cls(out)

    def partial_trace(self, keep: list[int] | tuple[int, ...] | set[int]) -> "DensityMatrix":
        """Reduced state on the qubits in `keep` (original indices, order preserved)."""
        keep = sorted(set(keep))
        n = self.num_qubits
        if not keep:
            raise ValueError("must keep at least one qubit")
        if any(q < 0 or q >= n for q in keep):
            raise IndexError("keep set outside the register")
        drop = [q for q in range(n) if q not in keep]
        rho = self.matrix.reshape([2] * (2 * n))
        for q in sorted(drop, reverse=True):
            rho = np.trace(rho, axis1=q, axis2=q + rho.ndim // 2)
        return DensityMatrix(rho.reshape(2 ** len(keep), 2 ** len(keep)))

    def __repr__(self) -> str:
        return f"DensityMatrix(num_qubits={self.num_qubits})"


def trace_distance(a: DensityMatrix, b: DensityMatrix) -> float:
    """(1/2) * trace norm of (a - b); the Helstrom distinguishing bound."""
    if a.matrix.shape != b.matrix.shape:
        raise ValueError("dimension mismatch")
    sing = np.linalg.svd(a.matrix - b.matrix, compute_uv=False)
    return float(0.5 * np.sum(sing))


def weighted_trace_norm(a: np.ndarray, b: np.ndarray) -> float:
    """(1/2) * trace norm of (a - b) for raw (possibly subnormalized) operators."""
    sing = np.linalg.svd(a - b, compute_uv=False)
    return float(0.5 * np.sum(sing))
