"""Pure-numpy kernels: dense-net forward/backward and the local SGD loop.

This is the fallback implementation used when the compiled extension
(`uavfed._fastcore`) is unavailable. Both backends implement the same
contract and are interchangeable up to floating-point summation order;
`uavfed.backend` picks one at import time.

Parameter layout for a net with layer widths ``sizes = [n0, ..., nL]``:
for each layer l, a row-major weight matrix W_l of shape (n_{l+1}, n_l)
followed by a bias vector b_l of length n_{l+1}. Hidden layers apply
tanh; the output layer is linear. ``acts`` is the concatenation of the
post-activation outputs of layers 1..L.
"""

import numpy as np

NAME = "pure"


def _layer_offsets(sizes):
    offs, aoffs = [], []
    off = aoff = 0
    for l in range(len(sizes) - 1):
        offs.append(off)
        aoffs.append(aoff)
        off += sizes[l + 1] * (sizes[l] + 1)
        aoff += sizes[l + 1]
    return offs, aoffs


def param_count(sizes):
    return sum(sizes[l + 1] * (sizes[l] + 1) for l in range(len(sizes) - 1))


def act_count(sizes):
    return sum(sizes[1:])


def dense_forward(params, sizes, x, acts):
    """Fill ``acts`` with the activations of every layer for input ``x``."""
    n_layers = len(sizes) - 1
    off = aoff = 0
    inp = x
    for l in range(n_layers):
        nin, nout = sizes[l], sizes[l + 1]
        w = params[off : off + nout * nin].reshape(nout, nin)
        b = params[off + nout * nin : off + nout * (nin + 1)]
        out = w @ inp + b
        if l < n_layers - 1:
            np.tanh(out, out)
        acts[aoff : aoff + nout] = out
        inp = acts[aoff : aoff + nout]
        off += nout * (nin + 1)
        aoff += nout


def dense_backward(params, sizes, x, acts, dout, grad, scale=1.0):
    """Accumulate ``scale * d(loss)/d(params)`` into ``grad``.

    ``dout`` is d(loss)/d(output); ``acts`` must come from a
    ``dense_forward`` call with the same ``params`` and ``x``.
    """
    n_layers = len(sizes) - 1
    offs, aoffs = _layer_offsets(sizes)
    delta = np.asarray(dout, dtype=np.float64).copy()
    for l in range(n_layers - 1, -1, -1):
        nin, nout = sizes[l], sizes[l + 1]
        w = params[offs[l] : offs[l] + nout * nin].reshape(nout, nin)
        a_in = x if l == 0 else acts[aoffs[l - 1] : aoffs[l - 1] + nin]
        gw = grad[offs[l] : offs[l] + nout * nin].reshape(nout, nin)
        gw += scale * np.outer(delta, a_in)
        grad[offs[l] + nout * nin : offs[l] + nout * (nin + 1)] += scale * delta
        if l > 0:
            prev = acts[aoffs[l - 1] : aoffs[l - 1] + nin]
            delta = (w.T @ delta) * (1.0 - prev * prev)


def sgd_dense_softmax(params, sizes, features, labels, order, eta):
    """Run one single-sample SGD step per entry of ``order`` (in place).

    The loss is softmax cross-entropy on the net output. Returns True if
    every parameter stayed finite.
    """
    acts = np.empty(act_count(sizes), dtype=np.float64)
    grad = np.empty_like(params)
    nout = sizes[-1]
    for i in order:
        x = features[i]
        dense_forward(params, sizes, x, acts)
        logits = acts[-nout:]
        p = logits - logits.max()
        np.exp(p, p)
        p /= p.sum()
        p[labels[i]] -= 1.0
        grad[:] = 0.0
        dense_backward(params, sizes, x, acts, p, grad, 1.0)
        params -= eta * grad
    return bool(np.isfinite(params).all())
