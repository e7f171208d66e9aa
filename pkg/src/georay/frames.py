"""Differential coordinates: local frames ``dy = A dx`` in which ``ds^2`` is Euclidean."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.linalg import solve_triangular

from .metric import MetricField, NotPositiveDefiniteError, eval_metric

DEGENERATE_GRADIENT = 1e-20
ORTHO_TOL = 1e-12


class FrameError(ValueError):
    pass


class DegenerateGradientError(FrameError):
    pass


@dataclass(frozen=True)
class FrameField:
    """Forward map ``A`` (dy = A dx) and inverse ``A_star`` (dx = A_star dy) at ``point``."""

    A: np.ndarray
    A_star: np.ndarray
    point: np.ndarray

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def to_y(self, dx) -> np.ndarray:
        return self.A @ np.asarray(dx, dtype=float)

    def to_x(self, dy) -> np.ndarray:
        return self.A_star @ np.asarray(dy, dtype=float)

    def residuals(self, rho: Optional[np.ndarray] = None) -> dict:
        """Max-abs violations of the frame identities (``rho`` enables the metric ones)."""
        eye = np.eye(self.dim)
        out = {"inverse": float(np.max(np.abs(self.A @ self.A_star - eye)))}
        if rho is not None:
            out["metric"] = float(np.max(np.abs(self.A.T @ self.A - rho)))
            out["dual"] = float(np.max(np.abs(self.A_star.T @ rho @ self.A_star - eye)))
        return out


@dataclass(frozen=True)
class ScalarField:
    """A function of position with an optional analytic gradient."""

    evaluate: Callable[[np.ndarray], float]
    grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    h_fd: float = 1e-5

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.grad is not None:
            return np.asarray(self.grad(x), dtype=float)
        g = np.empty_like(x)
        for k in range(x.size):
            e = np.zeros_like(x)
            e[k] = self.h_fd
            g[k] = (self.evaluate(x + e) - self.evaluate(x - e)) / (2 * self.h_fd)
        return g


def frame_from_metric(m: MetricField, x) -> FrameField:
    """Canonical (upper-triangular) frame at ``x``: ``A = L^T`` with ``rho = L L^T``."""
    x = np.asarray(x, dtype=float)
    return frame_from_matrix(eval_metric(m, x), x)


def frame_from_matrix(rho, point=None) -> FrameField:
    rho = np.asarray(rho, dtype=float)
    try:
        L = np.linalg.cholesky(rho)
    except np.linalg.LinAlgError:
        k = _first_bad_minor(rho)
        raise NotPositiveDefiniteError(f"metric not positive definite: leading minor of order {k} is not positive") from None
    A = L.T
    A_star = solve_triangular(A, np.eye(len(A)), lower=False)
    if point is None:
        point = np.zeros(len(A))
    return FrameField(A, A_star, np.asarray(point, dtype=float))


def _first_bad_minor(rho: np.ndarray) -> int:
    for k in range(1, len(rho) + 1):
        if not np.linalg.det(rho[:k, :k]) > 0:
            return k
    return len(rho)


def metric_from_frame(A) -> np.ndarray:
    """``rho_ij = sum_k A_ki A_kj``."""
    A = np.asarray(A, dtype=float)
    if np.linalg.matrix_rank(A) < A.shape[0]:
        raise FrameError("frame matrix is singular")
    rho = A.T @ A
    return 0.5 * (rho + rho.T)


def check_rotation(B) -> np.ndarray:
    B = np.asarray(B, dtype=float)
    dev = float(np.max(np.abs(B.T @ B - np.eye(len(B)))))
    if dev > ORTHO_TOL:
        raise FrameError(f"rotation is not orthogonal: max |B^T B - I| = {dev:.3g}")
    return B


def rotate_frame(f: FrameField, B) -> FrameField:
    """Rotate the differential coordinates, ``dy' = B dy``."""
    B = check_rotation(B)
    return FrameField(B @ f.A, f.A_star @ B.T, f.point)


def rotation_2d(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, s], [-s, c]])


def random_rotation(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix via QR with sign fix."""
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def derivative_vector(f: ScalarField, frame: FrameField) -> np.ndarray:
    """All ``Df/Dy_i = sum_j (df/dx_j) A_star[j, i]`` at the frame point."""
    return f.gradient(frame.point) @ frame.A_star


def directional_derivative(f: ScalarField, frame: FrameField, i: int) -> float:
    return float(derivative_vector(f, frame)[i])


def gradient_square(f: ScalarField, frame: FrameField) -> float:
    d = derivative_vector(f, frame)
    return float(d @ d)


def gradient_align(f: ScalarField, frame: FrameField) -> tuple[FrameField, np.ndarray]:
    """Rotate the frame so that its first coordinate runs along the gradient of ``f``.

    Uses a Householder reflection taking the derivative vector to
    ``(|d|, 0, ..., 0)``; in dim > 1 the last axis is flipped afterwards so the
    result is a proper rotation.
    """
    d = derivative_vector(f, frame)
    sq = float(d @ d)
    if sq <= DEGENERATE_GRADIENT:
        raise DegenerateGradientError(f"gradient square {sq:.3g} below {DEGENERATE_GRADIENT}")
    n = len(d)
    norm = np.sqrt(sq)
    w = d.copy()
    w[0] -= norm
    if np.linalg.norm(w) <= 1e-12 * norm:
        B = np.eye(n)
    else:
        B = np.eye(n) - 2.0 * np.outer(w, w) / (w @ w)
        if n > 1:
            B[-1] *= -1.0
    return rotate_frame(frame, B), B
