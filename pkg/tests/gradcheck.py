"""Central finite-difference oracle shared by the learner tests and the acceptance suite."""

import numpy as np

STEP = 1e-5


def numeric_grad(f, x: np.ndarray, step: float = STEP) -> np.ndarray:
    g = np.zeros_like(x, dtype=float)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + step
        up = f()
        flat[i] = old - step
        down = f()
        flat[i] = old
        gflat[i] = (up - down) / (2 * step)
    return g


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest absolute gap, scaled by the largest gradient component."""
    a = np.concatenate([np.ravel(v) for v in analytic])
    n = np.concatenate([np.ravel(v) for v in numeric])
    return float(np.max(np.abs(a - n)) / max(np.max(np.abs(n)), np.max(np.abs(a)), 1e-8))


def lr_case(rng: np.random.Generator, n: int = 20, d: int = 5):
    from showbook.learners.logistic import loss_and_grad

    X = rng.normal(size=(n, d))
    y = (rng.random(n) < 0.5).astype(float)
    w = rng.normal(size=d)
    b = np.array([rng.normal()])
    l2 = float(rng.uniform(0, 0.1))
    _, gw, gb = loss_and_grad(w, b[0], X, y, l2)
    nw = numeric_grad(lambda: loss_and_grad(w, b[0], X, y, l2)[0], w)
    nb = numeric_grad(lambda: loss_and_grad(w, b[0], X, y, l2)[0], b)
    return relative_error([gw, np.array([gb])], [nw, nb])


def mlp_case(rng: np.random.Generator, n: int = 10, d: int = 4, h: int = 3):
    from showbook.learners.mlp import init_params, loss_and_grad

    X = rng.normal(size=(n, d))
    y = (rng.random(n) < 0.5).astype(float)
    params = init_params(d, h, rng)
    params = {k: v * 3.0 for k, v in params.items()}  # leave the near-linear regime
    params["b2"] = np.array([float(params["b2"])])
    l2 = float(rng.uniform(0, 0.1))

    def loss():
        p = dict(params)
        p["b2"] = params["b2"][0]
        return loss_and_grad(p, X, y, l2)[0]

    p = dict(params)
    p["b2"] = params["b2"][0]
    _, grads = loss_and_grad(p, X, y, l2)
    keys = ("W1", "b1", "w2", "b2")
    numeric = [numeric_grad(loss, params[k]) for k in keys]
    analytic = [np.ravel(grads[k]) for k in keys]
    return relative_error(analytic, numeric)
