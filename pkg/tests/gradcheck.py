"""Central finite differences against the analytic backward pass."""

import numpy as np

from oarsmt import trainer


def layer_errors(params, x, target, n, k, step=1e-6, per_layer=None, seed=0):
    """Norm-wise relative error ``|fd - g| / |fd|`` for every parameter array.

    With ``n > 0`` the untracked prefix is computed once and held fixed, so
    the finite differences see the same detached state as the backward pass.
    ``per_layer`` limits each array to that many randomly chosen entries.
    Arrays whose finite-difference gradient is exactly zero report the
    absolute norm of the analytic gradient instead.

    The small default step keeps perturbations from crossing ReLU kinks; the
    norm-wise error keeps its float64 roundoff (about 1e-16 / step per entry)
    from swamping entries with tiny gradients.
    """
    state = trainer.detached_prefix(params, x, n) if n > 0 else None
    _, grads = trainer.loss_and_grads(params, x, target, n, k, detached_state=state)
    rng = np.random.default_rng(seed)
    errors = []
    for arr, g in zip(params.arrays(), grads):
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        idx = np.arange(flat.size)
        if per_layer is not None and per_layer < flat.size:
            idx = rng.choice(flat.size, per_layer, replace=False)
        fd = np.empty(len(idx))
        for j, i in enumerate(idx):
            keep = flat[i]
            flat[i] = keep + step
            up = trainer.loss_and_grads(params, x, target, n, k, detached_state=state)[0]
            flat[i] = keep - step
            down = trainer.loss_and_grads(params, x, target, n, k, detached_state=state)[0]
            flat[i] = keep
            fd[j] = (up - down) / (2 * step)
        denom = np.linalg.norm(fd)
        diff = np.linalg.norm(fd - gflat[idx])
        errors.append(diff / denom if denom > 0 else np.linalg.norm(gflat[idx]))
    return errors
