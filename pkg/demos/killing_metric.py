"""Metric on S^3 built from a diagonal Killing two-tensor.

Run with ``python demos/killing_metric.py``.
"""
import numpy as np

from zollsphere.killing_metrics import (
    diag_tensor,
    equator_mean_curvature,
    equator_residual,
    metric_from_killing,
    rigidity_kernel,
)


def main(alpha=(1.1, 1.05, 1.02), beta=(0.05, 0.03, 0.01)):
    k = diag_tensor(alpha, beta)
    g = metric_from_killing(k)
    vs = np.random.default_rng(0).normal(size=(6, 4))
    vs /= np.linalg.norm(vs, axis=1)[:, None]
    H = equator_mean_curvature(g, vs, Q=8)
    dim, smin = rigidity_kernel(k)
    print(f"equator tensor residual   {equator_residual(g):.2e}")
    print(f"max equator mean curvature {np.max(np.abs(H)):.2e}")
    print(f"rigidity kernel dimension {dim}, smallest singular value {smin:.3e}")


if __name__ == "__main__":
    main()
