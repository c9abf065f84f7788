"""Evaluate the fractional heat kernel three ways and compare.

For alpha = 1 the kernel is the Poisson kernel, so the Fourier route can be
checked against a closed form; for other orders the three routes check
each other.
"""
import numpy as np

from fracheat.core import KernelParams
from fracheat.kernel import KernelQuery, eval_kernel, eval_kernel_contour, eval_kernel_subordination
from fracheat.oracles import poisson_kernel

print("alpha = 1, t = 1: Fourier route vs Poisson kernel")
for r in (0.0, 0.5, 2.0, 5.0):
    v = eval_kernel(KernelQuery(KernelParams(1.0, 1), 1.0, r))
    print(f"  r={r:4.1f}  p={v:.12f}  closed form={poisson_kernel(1.0, r):.12f}")

print("\nalpha = 0.7, t = 0.5, d = 1: three routes")
p = KernelParams(0.7, 1)
for r in (0.25, 1.0, 4.0):
    q = KernelQuery(p, 0.5, r)
    vals = [eval_kernel(q), eval_kernel_contour(q), eval_kernel_subordination(q)]
    spread = (max(vals) - min(vals)) / abs(vals[0])
    print(f"  r={r:4.2f}  " + "  ".join(f"{v:.10e}" for v in vals) + f"  rel spread {spread:.1e}")

print("\nheavy tails: r^(1+alpha) p(1, r) approaches a constant")
for r in np.geomspace(2, 200, 5):
    v = eval_kernel(KernelQuery(p, 1.0, float(r)))
    print(f"  r={r:8.2f}  r^(1+a) p = {r ** 1.7 * v:.6f}")
