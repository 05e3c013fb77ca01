import numpy as np
import pytest

from skelbyol.nn.tensor import Tensor


def finite_difference_check(fn, arrays, eps=1e-6, rel_tol=1e-4):
    """Compare reverse-mode gradients of scalar ``fn(*tensors)`` against
    central finite differences; returns the worst relative error."""
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    fn(*tensors).backward()
    worst = 0.0
    for tensor, arr in zip(tensors, arrays):
        fd = np.zeros_like(arr)
        flat = arr.reshape(-1)
        fd_flat = fd.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = fn(*[Tensor(a.copy()) for a in arrays]).item()
            flat[i] = orig - eps
            down = fn(*[Tensor(a.copy()) for a in arrays]).item()
            flat[i] = orig
            fd_flat[i] = (up - down) / (2.0 * eps)
        grad = np.zeros_like(arr) if tensor.grad is None else np.asarray(tensor.grad)
        denom = max(np.linalg.norm(fd), 1e-10)
        worst = max(worst, float(np.linalg.norm(grad - fd) / denom))
    assert worst < rel_tol, f"gradient mismatch: rel err {worst:.3g}"
    return worst


@pytest.fixture
def fd_check():
    return finite_difference_check
