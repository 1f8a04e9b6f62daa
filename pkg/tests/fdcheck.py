"""Central finite-difference gradient checking against autograd.

Shared by the backbone unit tests and the acceptance suite. The model is
probed in double precision and eval mode so batch-norm is an affine map
and the only nondifferentiable points are ReLU kinks, which random inputs
avoid with probability one.
"""

import numpy as np
import torch


def jitter_batchnorm_(model, seed=0):
    """Nudge BN affine parameters off their (1, 0) initialization.

    With weight 1 / bias 0, a dead ReLU channel propagates exact zeros
    through bias-free convolutions and parks the next activation exactly on
    its kink, where autograd's subgradient and a central difference
    legitimately disagree. Random affine offsets move every pre-activation
    to a two-sided point.
    """
    rng = np.random.default_rng(seed)
    with torch.no_grad():
        for module in model.modules():
            if isinstance(module, torch.nn.BatchNorm2d):
                for tensor, lo, hi in ((module.weight, 0.8, 1.2), (module.bias, -0.1, 0.1)):
                    values = rng.uniform(lo, hi, size=tuple(tensor.shape))
                    tensor.copy_(torch.from_numpy(values).to(tensor.dtype))


def check_gradients(model, inputs, rel_tol=1e-4, step=1e-6, sample_per_tensor=None, seed=0):
    """Compare autograd gradients to central differences per parameter entry.

    ``inputs`` is a tuple of double tensors. With ``sample_per_tensor``
    only that many randomly chosen entries of each parameter tensor are
    probed; otherwise every entry is. Returns the worst relative error.
    """
    model = model.double().eval()
    inputs = tuple(t.double() for t in inputs)
    rng = np.random.default_rng(seed)
    out = model(*inputs)
    direction = torch.from_numpy(rng.normal(size=tuple(out.shape)))
    loss = (out * direction).sum()
    model.zero_grad(set_to_none=True)
    loss.backward()
    worst = 0.0
    with torch.no_grad():
        for name, p in model.named_parameters():
            assert p.grad is not None, f"no gradient for {name}"
            flat = p.view(-1)
            grad_flat = p.grad.reshape(-1)
            n = flat.numel()
            if sample_per_tensor is None or n <= sample_per_tensor:
                indices = np.arange(n)
            else:
                indices = rng.choice(n, size=sample_per_tensor, replace=False)
            for i in indices:
                i = int(i)
                orig = float(flat[i])
                flat[i] = orig + step
                loss_plus = float((model(*inputs) * direction).sum())
                flat[i] = orig - step
                loss_minus = float((model(*inputs) * direction).sum())
                flat[i] = orig
                fd = (loss_plus - loss_minus) / (2.0 * step)
                ag = float(grad_flat[i])
                rel = abs(fd - ag) / max(abs(fd), abs(ag), 1e-8)
                worst = max(worst, rel)
                assert rel <= rel_tol, (
                    f"{name}[{i}]: autograd {ag!r} vs finite difference {fd!r} (rel {rel:.2e})"
                )
    return worst
