"""
Whole-sequence recurrences recorded as single tape nodes.

Walking a recurrence step by step through the tensor engine costs a dozen
tape entries per step. The kernels here run the walk in plain numpy and
backpropagate through time by hand, so a sequence of any length costs one
node. Their outputs match the step-by-step definitions in
:mod:`slp.layers` and :mod:`slp.peruse` to rounding.
"""
import numpy as np

from slp import tensor as tn
from slp.exceptions import DimensionError


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _check_square(op, width, *matrices):
    if any(m.data.shape != (width, width) for m in matrices):
        raise DimensionError(op, *[m.shape for m in matrices])


def gru_scan(X, weights, reverse=False):
    """
    Hidden states of a GRU walked over the rows of ``X`` from a zero state.

    ``weights`` holds, for the update, reset and candidate gates in that
    order, the input matrix (H×D), the input bias (H) and the recurrent
    matrix (H×H). Row t of the result is the state after reading row t,
    whichever way the walk went.
    """
    X = tn.as_tensor(X)
    weights = [tn.as_tensor(w) for w in weights]
    if len(weights) != 9:
        raise DimensionError('gru_scan', (len(weights),), (9,))
    Wz, bz, Uz, Wr, br, Ur, Wn, bn, Un = weights
    hidden = Uz.data.shape[0]
    if X.ndim != 2 or Wz.data.shape[1] != X.data.shape[1]:
        raise DimensionError('gru_scan', X.shape, Wz.shape)
    _check_square('gru_scan', hidden, Uz, Ur, Un)

    x = X.data
    length = x.shape[0]
    Pz = x.dot(Wz.data.T) + bz.data
    Pr = x.dot(Wr.data.T) + br.data
    Pn = x.dot(Wn.data.T) + bn.data
    order = list(range(length - 1, -1, -1)) if reverse else list(range(length))

    states = np.zeros((length, hidden))
    previous = np.zeros((length, hidden))
    Z = np.zeros((length, hidden))
    R = np.zeros((length, hidden))
    N = np.zeros((length, hidden))
    h = np.zeros(hidden)
    for t in order:
        previous[t] = h
        Z[t] = _sigmoid(Pz[t] + Uz.data.dot(h))
        R[t] = _sigmoid(Pr[t] + Ur.data.dot(h))
        N[t] = np.tanh(Pn[t] + Un.data.dot(R[t] * h))
        h = (1.0 - Z[t]) * N[t] + Z[t] * h
        states[t] = h

    def backward_fn(g):
        dPz = np.zeros_like(Pz)
        dPr = np.zeros_like(Pr)
        dPn = np.zeros_like(Pn)
        dUz = np.zeros_like(Uz.data)
        dUr = np.zeros_like(Ur.data)
        dUn = np.zeros_like(Un.data)
        carry = np.zeros(hidden)
        for t in reversed(order):
            dh = g[t] + carry
            h_prev = previous[t]
            z, r, n = Z[t], R[t], N[t]
            da_n = dh * (1.0 - z) * (1.0 - n * n)
            da_z = dh * (h_prev - n) * z * (1.0 - z)
            d_rh = Un.data.T.dot(da_n)
            da_r = d_rh * h_prev * r * (1.0 - r)
            dUn += np.outer(da_n, r * h_prev)
            dUz += np.outer(da_z, h_prev)
            dUr += np.outer(da_r, h_prev)
            carry = dh * z + d_rh * r + Uz.data.T.dot(da_z) + Ur.data.T.dot(da_r)
            dPz[t], dPr[t], dPn[t] = da_z, da_r, da_n
        dX = dPz.dot(Wz.data) + dPr.dot(Wr.data) + dPn.dot(Wn.data)
        return (dX,
                dPz.T.dot(x), dPz.sum(axis=0), dUz,
                dPr.T.dot(x), dPr.sum(axis=0), dUr,
                dPn.T.dot(x), dPn.sum(axis=0), dUn)

    return tn.fused(states, [X] + weights, backward_fn, 'gru_scan')


def gated_scan(H, X, weights):
    """
    Fold the rows of ``X``, in order, into segment state ``H`` with the gated
    update and return the final state.

    ``weights`` holds, for the reset1, reset2, candidate and gate gates in
    that order, the frame matrix (D×D), the frame bias (D) and the state
    matrix (D×D).
    """
    H, X = tn.as_tensor(H), tn.as_tensor(X)
    weights = [tn.as_tensor(w) for w in weights]
    if len(weights) != 12:
        raise DimensionError('gated_scan', (len(weights),), (12,))
    width = H.data.shape[0]
    if H.ndim != 1 or X.ndim != 2 or X.data.shape[1] != width:
        raise DimensionError('gated_scan', H.shape, X.shape)
    (W1, b1, U1, W2, b2, U2, Wc, bc, Uc, Wz, bz, Uz) = [w.data for w in weights]
    _check_square('gated_scan', width, *(weights[0::3] + weights[2::3]))

    x = X.data
    steps = []
    state = H.data
    for v in x:
        r1 = _sigmoid(W1.dot(v) + b1 + U1.dot(state))
        r2 = _sigmoid(W2.dot(v) + b2 + U2.dot(state))
        c = np.tanh(Wc.dot(r1 * v) + bc + Uc.dot(r2 * state))
        z = _sigmoid(Wz.dot(v) + bz + Uz.dot(state))
        steps.append((state, r1, r2, c, z))
        state = z * c + (1.0 - z) * state

    def backward_fn(g):
        grads = [np.zeros_like(w) for w in (W1, b1, U1, W2, b2, U2, Wc, bc, Uc, Wz, bz, Uz)]
        dW1, db1, dU1, dW2, db2, dU2, dWc, dbc, dUc, dWz, dbz, dUz = grads
        dX = np.zeros_like(x)
        dH = np.array(g, dtype=np.float64)
        for i in range(len(steps) - 1, -1, -1):
            v = x[i]
            h, r1, r2, c, z = steps[i]
            da_z = dH * (c - h) * z * (1.0 - z)
            da_c = dH * z * (1.0 - c * c)
            d_r1v = Wc.T.dot(da_c)
            d_r2h = Uc.T.dot(da_c)
            da_1 = d_r1v * v * r1 * (1.0 - r1)
            da_2 = d_r2h * h * r2 * (1.0 - r2)
            dWz += np.outer(da_z, v)
            dbz += da_z
            dUz += np.outer(da_z, h)
            dWc += np.outer(da_c, r1 * v)
            dbc += da_c
            dUc += np.outer(da_c, r2 * h)
            dW1 += np.outer(da_1, v)
            db1 += da_1
            dU1 += np.outer(da_1, h)
            dW2 += np.outer(da_2, v)
            db2 += da_2
            dU2 += np.outer(da_2, h)
            dX[i] = Wz.T.dot(da_z) + d_r1v * r1 + W1.T.dot(da_1) + W2.T.dot(da_2)
            dH = dH * (1.0 - z) + Uz.T.dot(da_z) + d_r2h * r2 + U1.T.dot(da_1) + U2.T.dot(da_2)
        return [dH, dX] + grads

    return tn.fused(state, [H, X] + weights, backward_fn, 'gated_scan')
