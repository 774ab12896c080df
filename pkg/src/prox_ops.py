""" Closed-form proximal operators and projections used by the primal-dual solver.
"""
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np


class RegularizerKind(str, Enum):
    LASSO = "lasso"
    EN = "en"
    CLOT = "clot"


def prox_l1(v, t):
    """ Soft threshold: sign(v) * max(|v| - t, 0).
    """
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def prox_clot(v, mu1, mu2):
    """ Prox of mu1 * ||x||_1 + mu2 * ||x||_2: soft threshold, then block shrink.
    """
    w = prox_l1(v, mu1)
    norm = np.linalg.norm(w)
    if norm <= mu2:
        return np.zeros_like(w)
    return (1.0 - mu2 / norm) * w


def prox_en(v, mu1, mu2):
    """ Prox of mu1 * ||x||_1 + mu2 * ||x||_2^2.
    """
    return prox_l1(v, mu1) / (1.0 + 2.0 * mu2)


def project_box(v, bound):
    v = np.asarray(v, dtype=float)
    return np.clip(v, -bound, bound)


def project_ball(p, center, radius):
    """ Euclidean projection onto the ball of given center and radius.
    """
    p = np.asarray(p, dtype=float)
    center = np.asarray(center, dtype=float)
    d = p - center
    dist = np.linalg.norm(d)
    if dist <= radius:
        return p.copy()
    return center + (radius / dist) * d


def project_balls(P, centers, radius):
    """ Row-wise project_ball for an (m, n) stack of points.
    """
    D = np.asarray(P, dtype=float) - centers
    dist = np.linalg.norm(D, axis=1, keepdims=True)
    scale = np.minimum(1.0, radius / np.maximum(dist, np.finfo(float).tiny))
    return centers + scale * D


def project_point(p, target):
    """ Projection onto the singleton {target}.
    """
    return np.array(target, dtype=float, copy=True)


@dataclass(frozen=True)
class Regularizer:
    """Discretized objective h||u||_1 (LASSO), + h*lam*||u||_2^2 (EN) or + sqrt(h)*lam*||u||_2 (CLOT).

    `scale` multiplies both weights; the minimizer does not depend on it.
    """

    kind: RegularizerKind
    lam: float
    h: float
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", RegularizerKind(self.kind))
        if self.lam < 0:
            raise ValueError(f"lambda must be nonnegative, got {self.lam}")
        if not self.h > 0:
            raise ValueError(f"h must be positive, got {self.h}")
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    @property
    def weights(self):
        """(weight on ||u||_1, weight on the l2 term)."""
        if self.kind is RegularizerKind.LASSO:
            return self.scale * self.h, 0.0
        if self.kind is RegularizerKind.EN:
            return self.scale * self.h, self.scale * self.h * self.lam
        return self.scale * self.h, self.scale * math.sqrt(self.h) * self.lam

    def value(self, u):
        u = np.asarray(u, dtype=float)
        w1, w2 = self.weights
        cost = w1 * np.sum(np.abs(u))
        if self.kind is RegularizerKind.EN:
            cost += w2 * float(u @ u)
        elif self.kind is RegularizerKind.CLOT:
            cost += w2 * np.linalg.norm(u)
        return float(cost)

    def prox(self, v, t=1.0):
        """ Prox of t * (this regularizer).
        """
        w1, w2 = self.weights
        if self.kind is RegularizerKind.LASSO:
            return prox_l1(v, t * w1)
        if self.kind is RegularizerKind.EN:
            return prox_en(v, t * w1, t * w2)
        return prox_clot(v, t * w1, t * w2)
