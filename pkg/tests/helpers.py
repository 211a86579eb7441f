import numpy as np

from povsat.nn import LinearLayer, MlpRegressor, mse_loss, predict


def fd_gradients(model, x, y, eps=1e-4):
    """Central finite differences of the batch MSE for every parameter."""
    out = []
    for p in model.parameters():
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + eps
            up = mse_loss(predict(model, x), y)
            p[i] = old - eps
            down = mse_loss(predict(model, x), y)
            p[i] = old
            g[i] = (up - down) / (2 * eps)
        out.append(g)
    return out


def relative_error(a, b):
    a = np.concatenate([v.ravel() for v in a])
    b = np.concatenate([v.ravel() for v in b])
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def random_instance(rng):
    """Small random network and batch: input <= 16, hidden width <= 8, batch <= 4."""
    in_dim = int(rng.integers(1, 17))
    depth = int(rng.integers(1, 3))
    dims = [in_dim] + [int(rng.integers(1, 9)) for _ in range(depth)] + [1]
    layers = [
        LinearLayer(rng.normal(0, 1 / np.sqrt(a), (b, a)), rng.normal(0, 0.5, b))
        for a, b in zip(dims, dims[1:])
    ]
    model = MlpRegressor(layers, "relu")
    n = int(rng.integers(1, 5))
    x = rng.normal(size=(n, in_dim))
    y = rng.normal(size=n)
    return model, x, y


def tiny_model(weights, biases, activation="relu"):
    return MlpRegressor(
        [LinearLayer(np.array(w, float), np.array(b, float)) for w, b in zip(weights, biases)],
        activation,
    )
