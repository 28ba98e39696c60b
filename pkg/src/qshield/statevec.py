"""Dense statevector simulator.

Conventions, fixed once and used everywhere:

  * Basis index bit layout: qubit 0 is the most significant bit, so on n
    qubits the basis state |b_0 b_1 ... b_{n-1}> lives at integer index
    sum_q b_q * 2^(n-1-q). zero_state(n) puts amplitude 1 at index 0.
  * RZ(t) = diag(exp(-it/2), exp(+it/2))
  * RY(t) = [[cos(t/2), -sin(t/2)], [sin(t/2), cos(t/2)]]
  * Rot(a, b, c) = RZ(c) @ RY(b) @ RZ(a), i.e. RZ(a) hits the state first.
  * CZ flips the sign of amplitudes where both qubits are 1; symmetric in
    its arguments.

States are complex128 and gates are exactly unitary up to float rounding,
so norms survive long gate sequences to ~1e-14.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import QubitOutOfRange, ShapeMismatch, ZeroVector


@dataclass
class Statevector:
    amplitudes: np.ndarray  # complex128, length 2**n_qubits
    n_qubits: int

    def copy(self) -> "Statevector":
        return Statevector(self.amplitudes.copy(), self.n_qubits)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


def zero_state(n_qubits: int) -> Statevector:
    if n_qubits < 1:
        raise ShapeMismatch(f"need at least one qubit, got {n_qubits}")
    amps = np.zeros(1 << n_qubits, dtype=np.complex128)
    amps[0] = 1.0
    return Statevector(amps, n_qubits)


def qubits_for(n_values: int) -> int:
    """Smallest register that holds n_values amplitudes (784 -> 10)."""
    if n_values < 1:
        raise ShapeMismatch("cannot encode an empty vector")
    return max(1, int(np.ceil(np.log2(n_values))))


def encode_batch(pixels: np.ndarray, n_qubits: int | None = None) -> np.ndarray:
    """L2-normalize real vectors into zero-padded amplitude arrays.

    pixels has shape (B, P); the result is (B, 2**n) complex128 with row i
    equal to pad(pixels[i]) / ||pixels[i]||. Scale-invariant by construction.
    Raises ZeroVector naming the first offending row if any row is all zero.
    """
    pixels = np.asarray(pixels, dtype=np.float64)
    if pixels.ndim != 2:
        raise ShapeMismatch(f"encode_batch wants (B, P), got {pixels.shape}")
    n = qubits_for(pixels.shape[1]) if n_qubits is None else n_qubits
    size = 1 << n
    if pixels.shape[1] > size:
        raise ShapeMismatch(
            f"{pixels.shape[1]} values do not fit in {n} qubits ({size} amplitudes)"
        )
    norms = np.linalg.norm(pixels, axis=1)
    bad = np.nonzero(norms == 0.0)[0]
    if bad.size:
        raise ZeroVector(f"cannot amplitude-encode all-zero input (row {bad[0]})")
    states = np.zeros((pixels.shape[0], size), dtype=np.complex128)
    states[:, : pixels.shape[1]] = pixels / norms[:, None]
    return states


def amplitude_encode(pixels: np.ndarray) -> Statevector:
    """Encode one real vector; 784 pixels land on 10 qubits, indices 784..1023 zero."""
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1)
    states = encode_batch(pixels[None, :])
    return Statevector(states[0], qubits_for(pixels.shape[0]))


def _shift(state: Statevector, qubit: int) -> int:
    if not 0 <= qubit < state.n_qubits:
        raise QubitOutOfRange(f"qubit {qubit} on a {state.n_qubits}-qubit register")
    return state.n_qubits - 1 - qubit


def rz_matrix(theta: float) -> np.ndarray:
    h = theta / 2.0
    return np.array(
        [[np.exp(-1j * h), 0.0], [0.0, np.exp(1j * h)]], dtype=np.complex128
    )


def ry_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2.0), np.sin(theta / 2.0)
    return np.array([[c, -s], [s, c]], dtype=np.complex128)


def rot_matrix(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """Rot(a, b, c) = RZ(c) RY(b) RZ(a) as a single 2x2 matrix."""
    cb, sb = np.cos(beta / 2.0), np.sin(beta / 2.0)
    return np.array(
        [
            [np.exp(-0.5j * (alpha + gamma)) * cb, -np.exp(0.5j * (alpha - gamma)) * sb],
            [np.exp(-0.5j * (alpha - gamma)) * sb, np.exp(0.5j * (alpha + gamma)) * cb],
        ],
        dtype=np.complex128,
    )


def _apply_mat(state: Statevector, qubit: int, u: np.ndarray) -> Statevector:
    view = state.amplitudes.reshape(1, -1)
    _kernels.apply_1q(view, u[0, 0], u[0, 1], u[1, 0], u[1, 1], _shift(state, qubit))
    return state


def apply_rz(state: Statevector, qubit: int, theta: float) -> Statevector:
    return _apply_mat(state, qubit, rz_matrix(theta))


def apply_ry(state: Statevector, qubit: int, theta: float) -> Statevector:
    return _apply_mat(state, qubit, ry_matrix(theta))


def apply_rot(
    state: Statevector, qubit: int, alpha: float, beta: float, gamma: float
) -> Statevector:
    return _apply_mat(state, qubit, rot_matrix(alpha, beta, gamma))


def apply_cz(state: Statevector, qubit_a: int, qubit_b: int) -> Statevector:
    if qubit_a == qubit_b:
        raise QubitOutOfRange(f"CZ needs two distinct qubits, got {qubit_a} twice")
    sa, sb = _shift(state, qubit_a), _shift(state, qubit_b)
    _kernels.apply_cz(state.amplitudes.reshape(1, -1), sa, sb)
    return state


def expect_z(state: Statevector, qubit: int) -> float:
    """<Z_qubit>; invariant under global phase since it sees only |amp|^2."""
    _shift(state, qubit)  # validates the index
    exps = _kernels.expect_z_all(state.amplitudes.reshape(1, -1), state.n_qubits)
    return float(exps[0, qubit])


def expect_z_all(state: Statevector) -> np.ndarray:
    return _kernels.expect_z_all(state.amplitudes.reshape(1, -1), state.n_qubits)[0]
