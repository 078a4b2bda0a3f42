"""Reference-triangle bases and quadrature.

Everything on the reference triangle That = {0 <= x, 0 <= y, x + y <= 1}
is expressed through the barycentric coordinates

    lam1 = 1 - x - y,   lam2 = x,   lam3 = y.

Provided bases:

* P1 hats             hat_i = lam_i
* dual functions      mu_1 = 3 - 4x - 4y, mu_2 = 4x - 1, mu_3 = 4y - 1
                      (equivalently mu_i = 4 lam_i - 1), biorthogonal to
                      the hats: int_T mu_i hat_j = (|T|/3) delta_ij
* cubic bubble        b = 27 lam1 lam2 lam3, zero on the element boundary
                      and equal to one at the barycenter

A single symmetric 7-point rule, exact for polynomials up to total
degree 5, is used for every integral in the library; the highest
polynomial degree that occurs in the assembled forms is 4.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial, sqrt

import numpy as np

BUBBLE_SCALE = 27.0  # value 1 at the barycenter: 27 * (1/3)^3 = 1

# gradients of the barycentric coordinates on the reference triangle
REF_HAT_GRADS = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric points and weights; weights sum to 1, scale by |T|."""

    points: np.ndarray  # (nq, 3)
    weights: np.ndarray  # (nq,)

    @property
    def npoints(self) -> int:
        return len(self.weights)


def _make_degree5_rule() -> QuadratureRule:
    s15 = sqrt(15.0)
    a1, w1 = (6.0 + s15) / 21.0, (155.0 + s15) / 1200.0
    a2, w2 = (6.0 - s15) / 21.0, (155.0 - s15) / 1200.0
    pts = [(1 / 3, 1 / 3, 1 / 3)]
    wts = [9.0 / 40.0]
    for a, w in ((a1, w1), (a2, w2)):
        b = 1.0 - 2.0 * a
        pts += [(b, a, a), (a, b, a), (a, a, b)]
        wts += [w, w, w]
    points = np.array(pts)
    weights = np.array(wts)
    points.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(points=points, weights=weights)


QUADRATURE = _make_degree5_rule()


def barycentric_integral(a: int, b: int, c: int, area: float) -> float:
    """Exact integral of lam1^a lam2^b lam3^c over a triangle of given area.

    Uses int_T lam1^a lam2^b lam3^c = 2 |T| a! b! c! / (a + b + c + 2)!.
    """
    if min(a, b, c) < 0:
        raise ValueError("exponents must be nonnegative")
    return 2.0 * area * factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 2)


@dataclass(frozen=True)
class BasisValues:
    """Values/gradients of all reference bases at one point of That."""

    hats: np.ndarray        # (3,)
    hat_grads: np.ndarray   # (3, 2), constant
    duals: np.ndarray       # (3,)
    bubble: float
    bubble_grad: np.ndarray  # (2,)


def eval_basis(x: float, y: float) -> BasisValues:
    """Evaluate hats, duals and the bubble at a point of the closed That."""
    lam = np.array([1.0 - x - y, x, y])
    if lam.min() < -1e-12 or lam.max() > 1.0 + 1e-12:
        raise ValueError(f"point ({x}, {y}) lies outside the reference triangle")
    duals = 4.0 * lam - 1.0
    bubble = BUBBLE_SCALE * lam[0] * lam[1] * lam[2]
    # chain rule: grad b = 27 * sum_i (prod_{j != i} lam_j) grad lam_i
    pair = np.array([lam[1] * lam[2], lam[0] * lam[2], lam[0] * lam[1]])
    bubble_grad = BUBBLE_SCALE * pair @ REF_HAT_GRADS
    return BasisValues(hats=lam, hat_grads=REF_HAT_GRADS.copy(),
                       duals=duals, bubble=float(bubble), bubble_grad=bubble_grad)


# ---------------------------------------------------------------------------
# tables at the quadrature points (shared by assembly and norm evaluation)

def hat_table(rule: QuadratureRule = QUADRATURE) -> np.ndarray:
    """Hat values at the rule's points, shape (nq, 3)."""
    return np.asarray(rule.points)


def dual_table(rule: QuadratureRule = QUADRATURE) -> np.ndarray:
    """Dual-function values at the rule's points, shape (nq, 3)."""
    return 4.0 * np.asarray(rule.points) - 1.0


def bubble_table(rule: QuadratureRule = QUADRATURE) -> np.ndarray:
    """Bubble values at the rule's points, shape (nq,)."""
    p = rule.points
    return BUBBLE_SCALE * p[:, 0] * p[:, 1] * p[:, 2]


def bubble_bary_derivative_table(rule: QuadratureRule = QUADRATURE) -> np.ndarray:
    """d(bubble)/d(lam_i) at the rule's points, shape (nq, 3).

    The physical gradient on an element follows by contracting with the
    element's barycentric gradients.
    """
    p = rule.points
    return BUBBLE_SCALE * np.stack(
        [p[:, 1] * p[:, 2], p[:, 0] * p[:, 2], p[:, 0] * p[:, 1]], axis=1)


# ---------------------------------------------------------------------------
# per-element geometry, vectorized over a (ntri, 3, 2) coordinate array

def triangle_areas(coords: np.ndarray) -> np.ndarray:
    """Signed areas for (ntri, 3, 2) vertex coordinates (positive if CCW)."""
    d1 = coords[:, 1] - coords[:, 0]
    d2 = coords[:, 2] - coords[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def hat_gradients(coords: np.ndarray, areas: np.ndarray | None = None) -> np.ndarray:
    """Physical gradients of the three barycentric hats, shape (ntri, 3, 2)."""
    if areas is None:
        areas = triangle_areas(coords)
    x, y = coords[..., 0], coords[..., 1]
    g = np.empty(coords.shape)
    g[:, 0, 0] = y[:, 1] - y[:, 2]
    g[:, 0, 1] = x[:, 2] - x[:, 1]
    g[:, 1, 0] = y[:, 2] - y[:, 0]
    g[:, 1, 1] = x[:, 0] - x[:, 2]
    g[:, 2, 0] = y[:, 0] - y[:, 1]
    g[:, 2, 1] = x[:, 1] - x[:, 0]
    return g / (2.0 * areas)[:, None, None]


def physical_points(coords: np.ndarray, rule: QuadratureRule = QUADRATURE) -> np.ndarray:
    """Map the rule's barycentric points onto each element, shape (ntri, nq, 2)."""
    return np.einsum("qv,tvd->tqd", rule.points, coords)


def bubble_gradients(coords: np.ndarray, rule: QuadratureRule = QUADRATURE,
                     areas: np.ndarray | None = None) -> np.ndarray:
    """Physical bubble gradients at the rule's points, shape (ntri, nq, 2)."""
    hg = hat_gradients(coords, areas)
    return np.einsum("qv,tvd->tqd", bubble_bary_derivative_table(rule), hg)


def reference_biorthogonality_check(rule: QuadratureRule = QUADRATURE) -> float:
    """Max deviation of int_That mu_i hat_j from (1/6) delta_ij."""
    duals = dual_table(rule)
    hats = hat_table(rule)
    gram = 0.5 * np.einsum("q,qi,qj->ij", rule.weights, duals, hats)
    return float(np.abs(gram - np.eye(3) / 6.0).max())
