"""Stencil (simplex) gradients on the volume hyperplane ``c^T x = V``."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

REPAIR_EPS = 1e-6  # mm^2
# Singular values of the displacement matrix below this fraction of the
# largest are treated as zero.  Samples on the volume hyperplane give rank
# m - 1 exactly; rounding leaves a ~1e-12 relative singular value along c
# that would otherwise blow the gradient up.
PINV_RCOND = 1e-8


class StencilError(ValueError):
    pass


@dataclass(frozen=True)
class StencilBasis:
    """Orthonormal basis of ``{v : c^T v = 0}``, one vector per row."""

    vectors: np.ndarray
    c: np.ndarray

    def __len__(self) -> int:
        return self.vectors.shape[0]


def kernel_basis(c) -> StencilBasis:
    """Orthonormal basis of the kernel of ``c^T`` from a Householder reflector.

    ``H = I - 2 w w^T / w^T w`` with ``w = c/|c| + sign(c_1) e_1`` maps ``c``
    onto the first axis, so rows 2..m of ``H`` span the kernel.  These are the
    trailing right singular vectors LAPACK returns for the one-row matrix
    ``c^T``, i.e. the usual null-space basis of numerical toolkits, written out
    in closed form so the sample ordering does not depend on the LAPACK build.
    """
    c = np.asarray(c, dtype=float).ravel()
    m = c.size
    if m < 2:
        raise StencilError("kernel basis needs at least two variables")
    if not np.all(c > 0):
        raise StencilError("member lengths must be positive")
    w = c / np.linalg.norm(c)
    w[0] += 1.0 if w[0] >= 0 else -1.0
    H = np.eye(m) - (2.0 / (w @ w)) * np.outer(w, w)
    return StencilBasis(H[1:].copy(), c)


def repair(z: np.ndarray, c: np.ndarray, budget: float, eps: float = REPAIR_EPS) -> tuple[np.ndarray, bool]:
    """Clamp components below ``eps`` to ``eps`` and rescale the rest onto ``c^T z = V``.

    The non-clamped components share one scale factor.  Returns the point and
    whether it was modified.
    """
    z = np.array(z, dtype=float)
    clamped = z < eps
    if not clamped.any():
        return z, False
    if budget <= eps * c.sum():
        raise StencilError(f"volume budget {budget:g} too small to hold every area at {eps:g}")
    while True:
        z[clamped] = eps
        free_volume = c[~clamped] @ z[~clamped]
        target = budget - eps * c[clamped].sum()
        if free_volume <= 0:
            raise StencilError("sample point has no positive area left to rescale")
        z[~clamped] *= target / free_volume
        newly = (z < eps) & ~clamped
        if not newly.any():
            return z, True
        clamped |= newly


@dataclass
class StencilSample:
    center: np.ndarray
    radius: float
    points: np.ndarray  # (2m-2, m), ordered x + r d_1, x - r d_1, x + r d_2, ...
    repaired: np.ndarray = field(default=None)
    center_value: float = np.nan
    values: np.ndarray = field(default=None)

    def evaluate(self, f: Callable[[np.ndarray], float], center_value: float | None = None,
                 mapper: Callable = map) -> "StencilSample":
        self.center_value = f(self.center) if center_value is None else center_value
        self.values = np.fromiter(mapper(f, list(self.points)), dtype=float, count=len(self.points))
        return self

    @property
    def best_value(self) -> float:
        return float(np.min(self.values))


def sample_set(x, radius: float, basis: StencilBasis, budget: float,
               eps: float = REPAIR_EPS) -> StencilSample:
    """Sample points ``x +/- r delta_i``, repaired to stay positive and on the budget."""
    if not radius > 0:
        raise StencilError("stencil radius must be positive")
    x = np.asarray(x, dtype=float)
    points = np.empty((2 * len(basis), x.size))
    points[0::2] = x + radius * basis.vectors
    points[1::2] = x - radius * basis.vectors
    repaired = np.zeros(len(points), dtype=bool)
    for j in range(len(points)):
        points[j], repaired[j] = repair(points[j], basis.c, budget, eps)
    return StencilSample(x.copy(), float(radius), points, repaired)


@dataclass
class StencilGradient:
    gradient: np.ndarray
    degenerate: bool = False


def stencil_gradient(sample: StencilSample) -> StencilGradient:
    """Minimum-norm least-squares solution of ``Y g = delta``.

    Rows of ``Y`` are ``z_j - x`` and ``delta_j = f(z_j) - f(x)``.  The
    pseudo-inverse drops singular values below ``PINV_RCOND`` times the largest.
    """
    if sample.values is None:
        raise StencilError("sample has not been evaluated")
    Y = sample.points - sample.center
    delta = sample.values - sample.center_value
    if not np.all(np.isfinite(delta)):
        # a sample with an unstable damaged structure has f = +inf; it carries
        # no slope information, so it is left out of the fit
        keep = np.isfinite(delta)
        Y, delta = Y[keep], delta[keep]
    if Y.size == 0 or not np.any(Y):
        return StencilGradient(np.zeros(sample.center.size), True)
    g, *_ = np.linalg.lstsq(Y, delta, rcond=PINV_RCOND)
    return StencilGradient(g)


def simplex_gradient(f: Callable, x, radius: float, basis: StencilBasis, budget: float,
                     eps: float = REPAIR_EPS) -> np.ndarray:
    """Convenience wrapper: sample, evaluate and fit in one call."""
    sample = sample_set(x, radius, basis, budget, eps).evaluate(f)
    return stencil_gradient(sample).gradient


def project_to_kernel(g: Sequence[float], c) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    g = np.asarray(g, dtype=float)
    return g - c * (c @ g) / (c @ c)
