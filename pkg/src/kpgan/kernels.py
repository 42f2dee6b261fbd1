"""GRU recurrence kernels.

Row-vector convention, gate blocks ordered ``[update, reset, candidate]``::

    z  = sigmoid(xp_z + h @ Wh_z)
    r  = sigmoid(xp_r + h @ Wh_r)
    n  = tanh(xp_n + (r * h) @ Wh_n)
    h' = (1 - z) * h + z * n

``xp = x @ Wx + b`` is computed outside the loop for the whole sequence.
The recurrent matrix is passed pre-split into the contiguous blocks
``wh_zr`` (H x 2H) and ``wh_n`` (H x H).
"""

import numpy as np

from ._jit import jit_compile, maybe_njit


def _gru_forward(xp, h0, wh_zr, wh_n):
    steps = xp.shape[0]
    hid = h0.shape[0]
    out = np.empty((steps, hid))
    zs = np.empty((steps, hid))
    rs = np.empty((steps, hid))
    ns = np.empty((steps, hid))
    h = h0.copy()
    for t in range(steps):
        a = np.dot(h, wh_zr)
        # exponent capped so saturated gates do not overflow; sigmoid(-700) is ~1e-304
        z = 1.0 / (1.0 + np.exp(np.minimum(-(xp[t, :hid] + a[:hid]), 700.0)))
        r = 1.0 / (1.0 + np.exp(np.minimum(-(xp[t, hid:2 * hid] + a[hid:]), 700.0)))
        n = np.tanh(xp[t, 2 * hid:] + np.dot(r * h, wh_n))
        h = (1.0 - z) * h + z * n
        zs[t] = z
        rs[t] = r
        ns[t] = n
        out[t] = h
    return out, zs, rs, ns


def _gru_backward(d_out, h0, out, zs, rs, ns, wh_zr, wh_n):
    steps, hid = d_out.shape
    d_xp = np.zeros((steps, 3 * hid))
    d_wh_zr = np.zeros_like(wh_zr)
    d_wh_n = np.zeros_like(wh_n)
    carry = np.zeros(hid)
    wh_zr_t = np.ascontiguousarray(wh_zr.T)
    wh_n_t = np.ascontiguousarray(wh_n.T)
    for t in range(steps - 1, -1, -1):
        if t > 0:
            h_prev = out[t - 1]
        else:
            h_prev = h0
        z = zs[t]
        r = rs[t]
        n = ns[t]
        dh = d_out[t] + carry
        dh_prev = dh * (1.0 - z)
        dn_pre = dh * z * (1.0 - n * n)
        dz_pre = dh * (n - h_prev) * z * (1.0 - z)
        rh = r * h_prev
        d_wh_n += np.outer(rh, dn_pre)
        drh = np.dot(dn_pre, wh_n_t)
        dr_pre = drh * h_prev * r * (1.0 - r)
        dh_prev += drh * r
        da = np.empty(2 * hid)
        da[:hid] = dz_pre
        da[hid:] = dr_pre
        d_wh_zr += np.outer(h_prev, da)
        dh_prev += np.dot(da, wh_zr_t)
        d_xp[t, :hid] = dz_pre
        d_xp[t, hid:2 * hid] = dr_pre
        d_xp[t, 2 * hid:] = dn_pre
        carry = dh_prev
    return d_xp, d_wh_zr, d_wh_n, carry


gru_forward = maybe_njit(_gru_forward)
gru_backward = maybe_njit(_gru_backward)

# Both flavours stay importable for benchmarking.
gru_forward_numpy = _gru_forward
gru_backward_numpy = _gru_backward


def compiled_kernels():
    """Return ``(forward, backward)`` compiled regardless of the env flag."""
    return jit_compile(_gru_forward), jit_compile(_gru_backward)
