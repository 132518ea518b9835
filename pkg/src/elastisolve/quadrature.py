"""Quadrature rules on the reference tetrahedron and triangle (barycentric points)."""

from dataclasses import dataclass
from itertools import permutations

import numpy as np


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric points and weights; weights sum to the reference-cell volume."""

    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __len__(self):
        return len(self.weights)


def _orbit(*bary):
    return np.array(sorted(set(permutations(bary))))


def _tet_rules():
    rules = {1: QuadratureRule(np.full((1, 4), 0.25), np.array([1.0 / 6.0]), 1)}
    a = 0.1381966011250105
    rules[2] = QuadratureRule(_orbit(1 - 3 * a, a, a, a), np.full(4, 1.0 / 24.0), 2)
    # 14-point rule with positive weights, exact for degree 5
    a1, w1 = 0.0927352503108912, 0.01224884051939366
    a2, w2 = 0.3108859192633006, 0.01878132095300264
    a3, w3 = 0.4544962958743504, 0.007091003462846911
    pts = np.vstack([_orbit(1 - 3 * a1, a1, a1, a1), _orbit(1 - 3 * a2, a2, a2, a2),
                     _orbit(a3, a3, 0.5 - a3, 0.5 - a3)])
    w = np.concatenate([np.full(4, w1), np.full(4, w2), np.full(6, w3)])
    rules[5] = QuadratureRule(pts, w, 5)
    return rules


def _tri_rules():
    rules = {1: QuadratureRule(np.full((1, 3), 1.0 / 3.0), np.array([0.5]), 1)}
    rules[2] = QuadratureRule(_orbit(2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0), np.full(3, 1.0 / 6.0), 2)
    a, wa = 0.445948490915965, 0.223381589678011
    b, wb = 0.091576213509771, 0.109951743655322
    pts = np.vstack([_orbit(1 - 2 * a, a, a), _orbit(1 - 2 * b, b, b)])
    rules[4] = QuadratureRule(pts, 0.5 * np.concatenate([np.full(3, wa), np.full(3, wb)]), 4)
    return rules


_TET = _tet_rules()
_TRI = _tri_rules()


def _pick(rules, degree):
    for d in sorted(rules):
        if d >= degree:
            return rules[d]
    raise ValueError(f"no rule of degree {degree} available (max {max(rules)})")


def tetrahedron_rule(degree):
    """Cheapest tabulated tetrahedron rule exact for polynomials of ``degree``."""
    return _pick(_TET, degree)


def triangle_rule(degree):
    """Cheapest tabulated triangle rule exact for polynomials of ``degree``."""
    return _pick(_TRI, degree)
