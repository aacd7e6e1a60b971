import numpy as np

WIDE = np.longdouble


def _act(z, last, output_activation):
    if not last:
        return np.tanh(z)
    if output_activation == "sigmoid":
        return 1 / (1 + np.exp(-z))
    return z


def _losses_from(params, n_layers, output_activation, layer, z, target):
    """Loss for each stacked pre-activation ``z[e]`` of ``layer``, run to the output."""
    h = _act(z, layer == n_layers - 1, output_activation)
    for i in range(layer + 1, n_layers):
        h = _act(h @ params[2 * i] + params[2 * i + 1], i == n_layers - 1, output_activation)
    d = h - target
    return (d * d).mean(axis=(-2, -1))


def grad_rel_error(ae, x, target, eps=1e-6, floor=1e-7, chunk=256):
    """Largest element-wise relative gap between backprop and central differences.

    The reference loss is an independent forward pass in extended precision,
    so subtractive cancellation does not swamp gradient entries near
    ``floor``. Nudging weight ``W[a, b]`` of a layer only moves column ``b`` of
    that layer's pre-activation by ``eps * h[:, a]``, which lets a block of
    parameters be evaluated as one stacked forward pass.
    """
    _, grads = ae.loss_and_grad(x, target)
    params = [p.astype(WIDE) for p in ae.params]
    target = np.asarray(target, dtype=WIDE)
    h = np.asarray(x, dtype=WIDE)
    worst = 0.0
    for layer in range(ae.n_layers):
        w, b = params[2 * layer], params[2 * layer + 1]
        z = h @ w + b
        n_in, n_out = w.shape
        # Weights first (row-major, matching the gradient layout), then biases.
        rows = np.concatenate([np.repeat(np.arange(n_in), n_out), np.full(n_out, -1)])
        cols = np.concatenate([np.tile(np.arange(n_out), n_in), np.arange(n_out)])
        num = np.empty(len(rows), dtype=WIDE)
        for s in range(0, len(rows), chunk):
            r, c = rows[s:s + chunk], cols[s:s + chunk]
            # (E, m) shift applied to column c[e] of every batch row
            shift = np.where((r >= 0)[:, None], h.T[np.maximum(r, 0)], 1) * eps
            sides = []
            for sign in (1, -1):
                zz = np.repeat(z[None], len(r), axis=0)
                zz[np.arange(len(r)), :, c] += sign * shift
                sides.append(_losses_from(params, ae.n_layers, ae.output_activation, layer, zz, target))
            num[s:s + chunk] = (sides[0] - sides[1]) / (2 * eps)
        analytic = np.concatenate([grads[2 * layer].reshape(-1), grads[2 * layer + 1]])
        num = num.astype(float)
        rel = np.abs(analytic - num) / np.maximum(np.maximum(np.abs(analytic), np.abs(num)), floor)
        worst = max(worst, float(rel.max()))
        h = _act(z, layer == ae.n_layers - 1, ae.output_activation)
    return worst
