"""Central finite-difference checks for the gradient engine."""

import numpy as np

from .autograd import Tensor, backward


def numeric_grad(f, x, eps=1e-5):
    """Central difference of scalar ``f`` (numpy in, float out) at array ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(f(x))
        flat[i] = orig - eps
        fm = float(f(x))
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * eps)
    return g


def relative_error(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / denom)


def check_gradients(build, params, eps=1e-5, rtol=1e-4):
    """Compare tape gradients against central differences.

    ``build`` maps a list of Tensors to a scalar Tensor; ``params`` is a list
    of arrays.  Returns ``(ok, errors)`` with one relative error per param.
    """
    params = [np.array(p, dtype=np.float64) for p in params]
    leaves = [Tensor.param(p) for p in params]
    out = build(leaves)
    grads = backward(out)
    errors = []
    for i, leaf in enumerate(leaves):
        analytic = grads.get(leaf, np.zeros_like(params[i]))

        def f(v, i=i):
            args = [Tensor.const(p) for p in params]
            args[i] = Tensor.const(v)
            return build(args).value

        numeric = numeric_grad(f, params[i], eps)
        errors.append(relative_error(analytic, numeric))
    return all(e <= rtol for e in errors), errors
