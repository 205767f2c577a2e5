"""Shared test utilities: finite differences and tiny model builders."""

import numpy as np

from tfnet.nn import Model, softmax_cross_entropy


def central_difference(fn, arr: np.ndarray, index, h: float = 1e-6) -> float:
    """Central finite difference of scalar ``fn`` wrt one entry of ``arr``.

    Mutates ``arr`` in place and restores it, so ``fn`` can close over the
    live parameter array of a layer.
    """
    old = arr[index]
    arr[index] = old + h
    f_plus = fn()
    arr[index] = old - h
    f_minus = fn()
    arr[index] = old
    return (f_plus - f_minus) / (2.0 * h)


def relative_error(got: float, want: float, floor: float = 1e-8) -> float:
    return abs(got - want) / max(abs(got), abs(want), floor)


def model_loss_fn(model: Model, x: np.ndarray, y: np.ndarray, training: bool = True):
    """Closure computing the scalar training loss for gradient checks."""

    def fn() -> float:
        logits = model.forward(x, training=training)
        loss, _ = softmax_cross_entropy(logits, y)
        return float(loss)

    return fn


def check_model_gradients(model: Model, x: np.ndarray, y: np.ndarray,
                          rel_tol: float = 1e-4, h: float = 1e-6,
                          max_entries_per_param: int | None = None,
                          rng: np.random.Generator | None = None) -> float:
    """Backprop gradients vs central differences for every parameter entry.

    Returns the worst relative error seen.  Large parameter tensors can be
    subsampled (``max_entries_per_param``) to keep runtime bounded; the
    sampled index set is drawn from ``rng``.
    """
    logits = model.forward(x, training=True)
    _, grad_logits = softmax_cross_entropy(logits, y)
    model.zero_grad()
    model.backward(grad_logits)
    analytic = [g.copy() for g in model.gradients()]
    fn = model_loss_fn(model, x, y)
    worst = 0.0
    for p, g in zip(model.parameters(), analytic):
        flat_indices = np.arange(p.size)
        if max_entries_per_param is not None and p.size > max_entries_per_param:
            flat_indices = rng.choice(p.size, size=max_entries_per_param, replace=False)
        for flat in flat_indices:
            index = np.unravel_index(int(flat), p.shape)
            numeric = central_difference(fn, p, index, h)
            err = relative_error(float(g[index]), numeric)
            worst = max(worst, err)
            assert err <= rel_tol, (
                f"gradient mismatch at param shape {p.shape} index {index}: "
                f"analytic {g[index]:.10g}, numeric {numeric:.10g}, rel err {err:.3g}"
            )
    return worst
