#!/usr/bin/env python3
"""A tour of the reverse-mode tape, ending with the model-wide gradient audit.

The package trains its networks with a small define-by-run autodiff engine
over numpy arrays.  This script builds a few expressions by hand, checks the
tape's gradients against central finite differences, and then runs the same
audit the `btmuda gradcheck` command uses: every loss component of a tiny
64-bit model, differentiated two ways.

Runtime: a few seconds.  Output: stdout only.
"""

import numpy as np

from btmuda.diffcore import tensor as dt
from btmuda.diffcore.tensor import Tensor, backward
from btmuda.training.verify import COMPONENTS, TINY_TOL, run_gradcheck


def fd_grad(f, x, h=1e-6):
    """Central finite differences, one entry at a time."""
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + h
        hi = f(x)
        x[idx] = orig - h
        lo = f(x)
        x[idx] = orig
        g[idx] = (hi - lo) / (2 * h)
    return g


def section(title):
    print(f"\n== {title} ==")


def main():
    rng = np.random.default_rng(0)

    section("a scalar chain, differentiated by the tape")
    x = Tensor(np.array(1.5), requires_grad=True)
    y = dt.exp(x * 0.5) + x * x          # d/dx = 0.5 e^{x/2} + 2x
    backward(y)
    expected = 0.5 * np.exp(0.75) + 3.0
    print(f"   f(x)  = exp(x/2) + x^2 at x = 1.5")
    print(f"   tape  : {float(x.grad):.12f}")
    print(f"   closed: {expected:.12f}")

    section("a matrix expression against finite differences")
    w = rng.standard_normal((4, 3))
    v = rng.standard_normal((3,))
    probe = np.cos(np.arange(4.0))  # fixed weights so the sum is not constant

    def loss_of(w_arr):
        wt = Tensor(w_arr, requires_grad=True)
        logits = dt.reshape(dt.matmul(wt, Tensor(v).reshape(3, 1)), (1, 4))
        out = dt.reduce_sum(dt.softmax(logits) * Tensor(probe))
        return wt, out

    wt, out = loss_of(w)
    backward(out)
    ref = fd_grad(lambda a: float(loss_of(a)[1].data), w.copy())
    rel = np.abs(wt.grad - ref) / np.maximum(1e-8, np.abs(wt.grad) + np.abs(ref))
    print(f"   probe-weighted softmax(W v), W in R^4x3")
    print(f"   max relative error vs finite differences: {rel.max():.2e}")

    section("the model-wide audit (losses of a tiny two-path network)")
    print(f"   tolerance {TINY_TOL:g}, sampling a few entries per parameter")
    reports = run_gradcheck(seed=0, max_checks=5)
    print(f"   {'loss':<16} {'max rel err':>12} {'entries':>8}")
    for name in (*COMPONENTS, "total"):
        r = reports[name]
        verdict = "ok" if r.passed(TINY_TOL) else "FAIL"
        print(f"   {name:<16} {r.max_rel_err:>12.3e} {r.checked:>8}   {verdict}")
    print("\nThe `btmuda gradcheck` command runs this audit with more samples")
    print("and exits nonzero if any loss disagrees with finite differences.")


if __name__ == "__main__":
    main()
