"""Differentiable circuit execution.

A CircuitTape describes the layered ansatz abstractly: each layer applies
Rot(alpha, beta, gamma) to every qubit and then a fixed CZ entangler (ring
or chain pairing). Parameters are angles of shape (n_layers, n_qubits, 3),
flattened in (layer, qubit, angle) order when a flat vector is needed.

Readout is the vector of single-qubit Z expectations. Gradient entry points
are loss-agnostic: callers supply d_exps = dL/d<Z_q> per sample and get back
dL/d(angles) and dL/d(input amplitudes). Two independent routes exist:

  backward          reverse (adjoint) sweep, one extra pass over the tape
  parameter_shift   two shifted forward evaluations per angle of the
                    linearized loss sum_q d_exps[q] * <Z_q>, gradient
                    0.5 * (L[theta + pi/2] - L[theta - pi/2])

Both differentiate the same linear functional of the expectations, so they
agree to float precision; the shift rule is the slow oracle.

Input gradients come out in amplitude space. pixel_gradient chains them
through the amplitude-encoding normalization x -> pad(x)/||x||, whose
Jacobian is (I - psi psi^T) / ||x|| restricted to the first len(x) rows.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ShapeMismatch
from .statevec import encode_batch, rot_matrix

TOPOLOGIES = ("ring", "chain")


@dataclass(frozen=True)
class CircuitTape:
    n_qubits: int
    n_layers: int
    topology: str = "ring"

    @property
    def n_params(self) -> int:
        return self.n_layers * self.n_qubits * 3

    @property
    def param_shape(self) -> tuple[int, int, int]:
        return (self.n_layers, self.n_qubits, 3)


def entangler_pairs(n_qubits: int, topology: str) -> list[tuple[int, int]]:
    """CZ pairs for one layer. Ring wraps (q, (q+1) % n); chain stops at n-2.

    A single qubit has no pairs (a would-be ring pair (0, 0) is degenerate).
    """
    if topology not in TOPOLOGIES:
        raise ShapeMismatch(f"unknown topology {topology!r}, want one of {TOPOLOGIES}")
    if n_qubits == 1:
        return []
    if topology == "ring":
        return [(q, (q + 1) % n_qubits) for q in range(n_qubits)]
    return [(q, q + 1) for q in range(n_qubits - 1)]


def build_tape(n_qubits: int, n_layers: int, topology: str = "ring") -> CircuitTape:
    if n_qubits < 1:
        raise ShapeMismatch(f"need at least one qubit, got {n_qubits}")
    if n_layers < 0:
        raise ShapeMismatch(f"negative layer count {n_layers}")
    entangler_pairs(n_qubits, topology)  # validates topology
    return CircuitTape(n_qubits, n_layers, topology)


def _check_params(tape: CircuitTape, params: np.ndarray) -> np.ndarray:
    params = np.asarray(params, dtype=np.float64)
    if params.shape != tape.param_shape:
        raise ShapeMismatch(
            f"params shape {params.shape} does not match tape {tape.param_shape}"
        )
    return params


def _compile_fused(tape: CircuitTape, params: np.ndarray):
    """One 2x2 matrix per Rot plus CZ markers, in forward order."""
    n = tape.n_qubits
    pairs = entangler_pairs(n, tape.topology)
    count = tape.n_layers * (n + len(pairs))
    kinds = np.empty(count, dtype=np.int8)
    sa = np.zeros(count, dtype=np.int64)
    sb = np.zeros(count, dtype=np.int64)
    mats = np.zeros((count, 2, 2), dtype=np.complex128)
    g = 0
    for layer in range(tape.n_layers):
        for q in range(n):
            kinds[g] = _kernels.F_MAT
            sa[g] = n - 1 - q
            mats[g] = rot_matrix(*params[layer, q])
            g += 1
        for a, b in pairs:
            kinds[g] = _kernels.F_CZ
            sa[g] = n - 1 - a
            sb[g] = n - 1 - b
            g += 1
    return kinds, sa, sb, mats


def _compile_elementary(tape: CircuitTape, params: np.ndarray):
    """RZ/RY/RZ per Rot plus CZs, with flat parameter slots, forward order."""
    n = tape.n_qubits
    pairs = entangler_pairs(n, tape.topology)
    count = tape.n_layers * (3 * n + len(pairs))
    kinds = np.empty(count, dtype=np.int8)
    sa = np.zeros(count, dtype=np.int64)
    sb = np.zeros(count, dtype=np.int64)
    angles = np.zeros(count, dtype=np.float64)
    pidx = np.full(count, -1, dtype=np.int64)
    g = 0
    for layer in range(tape.n_layers):
        for q in range(n):
            base = (layer * n + q) * 3
            for k, kind in enumerate((_kernels.E_RZ, _kernels.E_RY, _kernels.E_RZ)):
                kinds[g] = kind
                sa[g] = n - 1 - q
                angles[g] = params[layer, q, k]
                pidx[g] = base + k
                g += 1
        for a, b in pairs:
            kinds[g] = _kernels.E_CZ
            sa[g] = n - 1 - a
            sb[g] = n - 1 - b
            g += 1
    return kinds, sa, sb, angles, pidx


@dataclass
class ForwardCache:
    """Everything backward() needs; final_states is shared, not copied."""

    tape: CircuitTape
    params: np.ndarray
    final_states: np.ndarray  # (B, 2**n) after the circuit
    pixels: np.ndarray | None = None  # raw inputs if the pass came from pixels
    elem: tuple = field(default=None, repr=False)

    def elementary(self):
        if self.elem is None:
            self.elem = _compile_elementary(self.tape, self.params)
        return self.elem


@dataclass
class GradientBundle:
    """d_params has the tape's (L, n, 3) shape, summed over the batch.

    d_input_amplitudes is dL/d(real amplitude) per sample. d_input_pixels is
    the same chained through the encoding normalization; present only when
    the forward pass encoded raw pixels.
    """

    d_params: np.ndarray
    d_input_amplitudes: np.ndarray
    d_input_pixels: np.ndarray | None = None


def _row_chunks(total: int, workers: int) -> list[slice]:
    workers = max(1, min(workers, total)) if total else 1
    bounds = np.linspace(0, total, workers + 1, dtype=int)
    return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


# Rows per accumulation chunk in backward(). Fixed (not derived from the
# worker count) so the angle-gradient reduction order, and therefore every
# downstream float, is identical no matter how many threads run.
ACC_CHUNK = 64


def _fixed_chunks(total: int) -> list[slice]:
    return [slice(a, min(a + ACC_CHUNK, total)) for a in range(0, max(total, 1), ACC_CHUNK)]


def _run_chunked(fn, chunks: list[slice], workers: int):
    """Run fn(slice) for each chunk, threaded when workers > 1.

    Results come back in chunk order regardless of scheduling, so reductions
    stay deterministic. The kernels are nogil, so threads actually overlap.
    """
    if workers <= 1 or len(chunks) == 1:
        return [fn(s) for s in chunks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, chunks))


def forward_batch(
    tape: CircuitTape,
    params: np.ndarray,
    states: np.ndarray,
    workers: int = 1,
) -> tuple[np.ndarray, ForwardCache]:
    """Run the circuit on (B, 2**n) states; returns (<Z_q> array (B, n), cache).

    The input array is not modified.
    """
    params = _check_params(tape, params)
    states = np.asarray(states, dtype=np.complex128)
    if states.ndim != 2 or states.shape[1] != 1 << tape.n_qubits:
        raise ShapeMismatch(
            f"states shape {states.shape} does not match {tape.n_qubits} qubits"
        )
    kinds, sa, sb, mats = _compile_fused(tape, params)
    out = states.copy()
    exps = np.empty((states.shape[0], tape.n_qubits))

    def work(rows: slice):
        _kernels.run_fused_tape(out[rows], kinds, sa, sb, mats)
        exps[rows] = _kernels.expect_z_all(out[rows], tape.n_qubits)

    _run_chunked(work, _row_chunks(states.shape[0], workers), workers)
    return exps, ForwardCache(tape, params.copy(), out)


def forward_pixels(
    tape: CircuitTape,
    params: np.ndarray,
    pixels: np.ndarray,
    workers: int = 1,
) -> tuple[np.ndarray, ForwardCache]:
    """Amplitude-encode raw pixel rows (B, P) and run the circuit."""
    pixels = np.asarray(pixels, dtype=np.float64)
    states = encode_batch(pixels, tape.n_qubits)
    exps, cache = forward_batch(tape, params, states, workers)
    cache.pixels = pixels
    return exps, cache


def forward(tape: CircuitTape, params: np.ndarray, state) -> tuple[np.ndarray, ForwardCache]:
    """Single-state convenience wrapper; accepts a Statevector or raw amplitudes."""
    amps = getattr(state, "amplitudes", state)
    exps, cache = forward_batch(tape, params, np.asarray(amps)[None, :])
    return exps[0], cache


def _check_dexps(cache: ForwardCache, d_exps: np.ndarray) -> np.ndarray:
    d_exps = np.asarray(d_exps, dtype=np.float64)
    want = (cache.final_states.shape[0], cache.tape.n_qubits)
    if d_exps.ndim == 1 and want[0] == 1:
        d_exps = d_exps[None, :]
    if d_exps.shape != want:
        raise ShapeMismatch(f"d_exps shape {d_exps.shape}, expected {want}")
    return d_exps


def backward(cache: ForwardCache, d_exps: np.ndarray, workers: int = 1) -> GradientBundle:
    """Adjoint reverse sweep. One backward pass costs about two forwards.

    d_params comes back summed over batch rows; scale d_exps by 1/B first if
    a batch-mean gradient is wanted. Gradients are exact derivatives of
    sum_{b,q} d_exps[b,q] * <Z_q>(b). The row reduction happens in fixed
    ACC_CHUNK blocks, so results are bit-identical for any workers value.
    """
    d_exps = _check_dexps(cache, d_exps)
    tape = cache.tape
    kinds, sa, sb, angles, pidx = cache.elementary()
    lam = _kernels.weighted_z(cache.final_states, d_exps, tape.n_qubits)
    phi = cache.final_states.copy()
    chunks = _fixed_chunks(lam.shape[0])
    partials = np.zeros((len(chunks), tape.n_params))

    def work_idx(i_rows):
        i, rows = i_rows
        _kernels.adjoint_sweep(phi[rows], lam[rows], kinds, sa, sb, angles, pidx, partials[i])

    _run_chunked(work_idx, list(enumerate(chunks)), workers)
    d_params = partials.sum(axis=0).reshape(tape.param_shape)
    d_amps = 2.0 * lam.real
    d_pix = pixel_gradient(d_amps, cache.pixels) if cache.pixels is not None else None
    return GradientBundle(d_params, d_amps, d_pix)


def input_gradients(cache: ForwardCache, d_exps: np.ndarray, workers: int = 1) -> GradientBundle:
    """Input-only gradient path: skips the phi sweep and angle taps.

    Roughly twice as fast as backward(); d_params comes back zero-filled.
    """
    d_exps = _check_dexps(cache, d_exps)
    tape = cache.tape
    kinds, sa, sb, angles, _ = cache.elementary()
    lam = _kernels.weighted_z(cache.final_states, d_exps, tape.n_qubits)

    def work(rows: slice):
        _kernels.dagger_sweep(lam[rows], kinds, sa, sb, angles)

    _run_chunked(work, _row_chunks(lam.shape[0], workers), workers)
    d_amps = 2.0 * lam.real
    d_pix = pixel_gradient(d_amps, cache.pixels) if cache.pixels is not None else None
    return GradientBundle(np.zeros(tape.param_shape), d_amps, d_pix)


def parameter_shift(
    tape: CircuitTape,
    params: np.ndarray,
    states: np.ndarray,
    d_exps: np.ndarray,
    workers: int = 1,
) -> np.ndarray:
    """Shift-rule gradient of sum d_exps * <Z>, shape (L, n, 3).

    Two full forward passes per angle; quadratic in circuit size, kept as
    the independent check on backward().
    """
    params = _check_params(tape, params)
    states = np.asarray(states, dtype=np.complex128)
    d_exps = np.asarray(d_exps, dtype=np.float64)
    flat = params.reshape(-1).copy()
    grad = np.empty_like(flat)
    for p in range(flat.size):
        vals = []
        for shift in (np.pi / 2, -np.pi / 2):
            shifted = flat.copy()
            shifted[p] += shift
            exps, _ = forward_batch(tape, shifted.reshape(tape.param_shape), states, workers)
            vals.append(float(np.sum(d_exps * exps)))
        grad[p] = 0.5 * (vals[0] - vals[1])
    return grad.reshape(tape.param_shape)


def pixel_gradient(d_amps: np.ndarray, pixels: np.ndarray) -> np.ndarray:
    """Chain amplitude gradients through x -> pad(x)/||x||.

    With psi the encoded state and g the amplitude gradient, the pixel
    gradient is (g - psi (psi . g)) / ||x|| on the first P coordinates. It
    is orthogonal to x because the encoding ignores input scale.
    """
    pixels = np.asarray(pixels, dtype=np.float64)
    d_amps = np.asarray(d_amps, dtype=np.float64)
    if pixels.ndim != 2 or d_amps.ndim != 2 or d_amps.shape[0] != pixels.shape[0]:
        raise ShapeMismatch(
            f"pixel_gradient got d_amps {d_amps.shape} and pixels {pixels.shape}"
        )
    p = pixels.shape[1]
    norms = np.linalg.norm(pixels, axis=1, keepdims=True)
    psi = pixels / norms
    radial = np.sum(psi * d_amps[:, :p], axis=1, keepdims=True)
    return (d_amps[:, :p] - psi * radial) / norms
