"""Compiled inner loops for the statevector simulator.

All kernels operate on batches of states laid out as complex128 arrays of
shape (B, 2**n_qubits). Qubit 0 is the most significant bit of the basis
index, so the pair stride for qubit q on an n-qubit register is
1 << (n - 1 - q); callers pass that shift directly.

Gate tapes come in two encodings:

  fused tape      kind 0 = arbitrary 2x2 on one qubit (matrix per gate),
                  kind 1 = CZ on a qubit pair. Used by the forward pass,
                  one matrix per Rot instead of three elementary gates.
  elementary tape kind 0 = RZ(angle), kind 1 = RY(angle), kind 2 = CZ.
                  Used by the reverse-mode sweep, where per-angle
                  derivatives need the RZ/RY factors individually.

Nothing here uses fastmath or threads; results are bit-reproducible.
"""

import numpy as np
from numba import njit

F_MAT = 0
F_CZ = 1

E_RZ = 0
E_RY = 1
E_CZ = 2


@njit(cache=True, nogil=True)
def apply_1q(states, u00, u01, u10, u11, shift):
    B, N = states.shape
    d = 1 << shift
    step = 2 * d
    for b in range(B):
        for base in range(0, N, step):
            for off in range(base, base + d):
                i1 = off + d
                a0 = states[b, off]
                a1 = states[b, i1]
                states[b, off] = u00 * a0 + u01 * a1
                states[b, i1] = u10 * a0 + u11 * a1


@njit(cache=True, nogil=True)
def apply_cz(states, shift_a, shift_b):
    B, N = states.shape
    m = (1 << shift_a) | (1 << shift_b)
    for b in range(B):
        for i in range(N):
            if (i & m) == m:
                states[b, i] = -states[b, i]


@njit(cache=True, nogil=True)
def run_fused_tape(states, kinds, shifts_a, shifts_b, mats):
    """Apply a fused tape in place, gate order = array order."""
    for g in range(kinds.shape[0]):
        if kinds[g] == F_MAT:
            apply_1q(
                states,
                mats[g, 0, 0], mats[g, 0, 1],
                mats[g, 1, 0], mats[g, 1, 1],
                shifts_a[g],
            )
        else:
            apply_cz(states, shifts_a[g], shifts_b[g])


@njit(cache=True, nogil=True)
def expect_z_all(states, n_qubits):
    """<Z_q> for every qubit, shape (B, n_qubits)."""
    B, N = states.shape
    out = np.zeros((B, n_qubits))
    for b in range(B):
        for i in range(N):
            a = states[b, i]
            p = a.real * a.real + a.imag * a.imag
            for q in range(n_qubits):
                if (i >> (n_qubits - 1 - q)) & 1:
                    out[b, q] -= p
                else:
                    out[b, q] += p
    return out


@njit(cache=True, nogil=True)
def weighted_z(states, coef, n_qubits):
    """lam[b, i] = states[b, i] * sum_q coef[b, q] * z_q(i).

    This is (sum_q coef_q Z_q) |psi> applied diagonally; z_q(i) is +1 when
    qubit q's bit of i is 0 and -1 when it is 1.
    """
    B, N = states.shape
    lam = np.empty_like(states)
    for b in range(B):
        for i in range(N):
            w = 0.0
            for q in range(n_qubits):
                if (i >> (n_qubits - 1 - q)) & 1:
                    w -= coef[b, q]
                else:
                    w += coef[b, q]
            lam[b, i] = states[b, i] * w
    return lam


@njit(cache=True, nogil=True)
def adjoint_sweep(phi, lam, kinds, shifts_a, shifts_b, angles, pidx, dparams):
    """Reverse sweep over an elementary tape, accumulating angle gradients.

    On entry phi and lam both hold post-circuit states: phi the forward
    state, lam the observable applied to it. Walking gates last to first,
    the derivative for gate G(theta) = exp(-i theta P / 2) read off while
    the states sit just after G is Im(<lam| P |phi>); then both states are
    pulled back through G^dagger. dparams receives the batch-summed
    derivative at each gate's pidx slot (pidx < 0 marks no parameter).
    On exit phi holds the circuit input and lam the adjoint state whose
    real part (times 2) is the gradient w.r.t. the input amplitudes.
    """
    B, N = phi.shape
    for g in range(kinds.shape[0] - 1, -1, -1):
        k = kinds[g]
        if k == E_CZ:
            m = (1 << shifts_a[g]) | (1 << shifts_b[g])
            for b in range(B):
                for i in range(N):
                    if (i & m) == m:
                        phi[b, i] = -phi[b, i]
                        lam[b, i] = -lam[b, i]
        elif k == E_RZ:
            d = 1 << shifts_a[g]
            if pidx[g] >= 0:
                acc = 0.0
                for b in range(B):
                    for i in range(N):
                        v = (lam[b, i].conjugate() * phi[b, i]).imag
                        if i & d:
                            acc -= v
                        else:
                            acc += v
                dparams[pidx[g]] += acc
            c = np.cos(angles[g] / 2)
            s = np.sin(angles[g] / 2)
            e0 = complex(c, s)
            e1 = complex(c, -s)
            for b in range(B):
                for i in range(N):
                    if i & d:
                        phi[b, i] *= e1
                        lam[b, i] *= e1
                    else:
                        phi[b, i] *= e0
                        lam[b, i] *= e0
        else:
            d = 1 << shifts_a[g]
            step = 2 * d
            if pidx[g] >= 0:
                acc = 0.0
                for b in range(B):
                    for base in range(0, N, step):
                        for off in range(base, base + d):
                            i1 = off + d
                            acc += (lam[b, i1].conjugate() * phi[b, off]).real
                            acc -= (lam[b, off].conjugate() * phi[b, i1]).real
                dparams[pidx[g]] += acc
            c = np.cos(angles[g] / 2)
            s = np.sin(angles[g] / 2)
            for b in range(B):
                for base in range(0, N, step):
                    for off in range(base, base + d):
                        i1 = off + d
                        p0 = phi[b, off]
                        p1 = phi[b, i1]
                        phi[b, off] = c * p0 + s * p1
                        phi[b, i1] = -s * p0 + c * p1
                        l0 = lam[b, off]
                        l1 = lam[b, i1]
                        lam[b, off] = c * l0 + s * l1
                        lam[b, i1] = -s * l0 + c * l1


@njit(cache=True, nogil=True)
def dagger_sweep(lam, kinds, shifts_a, shifts_b, angles):
    """Pull lam back through the elementary tape (daggered, reverse order).

    Same walk as adjoint_sweep minus phi and the derivative taps; used when
    only input-amplitude gradients are needed, which halves the work.
    """
    B, N = lam.shape
    for g in range(kinds.shape[0] - 1, -1, -1):
        k = kinds[g]
        if k == E_CZ:
            m = (1 << shifts_a[g]) | (1 << shifts_b[g])
            for b in range(B):
                for i in range(N):
                    if (i & m) == m:
                        lam[b, i] = -lam[b, i]
        elif k == E_RZ:
            d = 1 << shifts_a[g]
            c = np.cos(angles[g] / 2)
            s = np.sin(angles[g] / 2)
            e0 = complex(c, s)
            e1 = complex(c, -s)
            for b in range(B):
                for i in range(N):
                    if i & d:
                        lam[b, i] *= e1
                    else:
                        lam[b, i] *= e0
        else:
            d = 1 << shifts_a[g]
            step = 2 * d
            c = np.cos(angles[g] / 2)
            s = np.sin(angles[g] / 2)
            for b in range(B):
                for base in range(0, N, step):
                    for off in range(base, base + d):
                        i1 = off + d
                        l0 = lam[b, off]
                        l1 = lam[b, i1]
                        lam[b, off] = c * l0 + s * l1
                        lam[b, i1] = -s * l0 + c * l1


@njit(cache=True, nogil=True)
def col2im_add(cols, B, C, H, W, k, stride, pad, out_h, out_w):
    """Scatter-add column patches back onto images (adjoint of im2col)."""
    out = np.zeros((B, C, H, W))
    for b in range(B):
        for c in range(C):
            for u in range(k):
                for v in range(k):
                    row = (c * k + u) * k + v
                    for oi in range(out_h):
                        ii = oi * stride + u - pad
                        if ii < 0 or ii >= H:
                            continue
                        for oj in range(out_w):
                            jj = oj * stride + v - pad
                            if 0 <= jj < W:
                                out[b, c, ii, jj] += cols[b, row, oi * out_w + oj]
    return out


@njit(cache=True, nogil=True)
def conv2d_direct(x, w, bias, stride, pad):
    """Plain-loop convolution, the slow twin of the im2col path."""
    B, C, H, W = x.shape
    O = w.shape[0]
    k = w.shape[2]
    out_h = (H + 2 * pad - k) // stride + 1
    out_w = (W + 2 * pad - k) // stride + 1
    out = np.zeros((B, O, out_h, out_w))
    for b in range(B):
        for o in range(O):
            for oi in range(out_h):
                for oj in range(out_w):
                    acc = bias[o]
                    for c in range(C):
                        for u in range(k):
                            ii = oi * stride + u - pad
                            if ii < 0 or ii >= H:
                                continue
                            for v in range(k):
                                jj = oj * stride + v - pad
                                if 0 <= jj < W:
                                    acc += x[b, c, ii, jj] * w[o, c, u, v]
                    out[b, o, oi, oj] = acc
    return out


@njit(cache=True, nogil=True)
def conv_transpose2d_direct(x, w, bias, stride, pad, out_pad):
    """Plain-loop transposed convolution. w layout is (C_in, C_out, k, k)."""
    B, C, H, W = x.shape
    O = w.shape[1]
    k = w.shape[2]
    out_h = (H - 1) * stride - 2 * pad + k + out_pad
    out_w = (W - 1) * stride - 2 * pad + k + out_pad
    out = np.zeros((B, O, out_h, out_w))
    for b in range(B):
        for o in range(O):
            for oi in range(out_h):
                for oj in range(out_w):
                    out[b, o, oi, oj] = bias[o]
    for b in range(B):
        for c in range(C):
            for i in range(H):
                for j in range(W):
                    v = x[b, c, i, j]
                    if v == 0.0:
                        continue
                    for o in range(O):
                        for u in range(k):
                            ii = i * stride + u - pad
                            if ii < 0 or ii >= out_h:
                                continue
                            for t in range(k):
                                jj = j * stride + t - pad
                                if 0 <= jj < out_w:
                                    out[b, o, ii, jj] += v * w[c, o, u, t]
    return out
