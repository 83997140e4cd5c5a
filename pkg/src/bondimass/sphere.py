"""Gauss-Legendre x uniform-azimuth product grid on the unit sphere.

Nodes never sit on the poles, so integrands carrying ``cot(theta)`` or
``csc(theta)`` factors can be sampled directly.  Arrays living on a grid have
shape ``(n_theta, n_psi)`` with theta along the first axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FOUR_PI = 4.0 * np.pi

DEFAULT_SHAPE = (24, 48)


@dataclass(frozen=True, eq=False)
class SphereGrid:
    theta: np.ndarray          # (n_theta,), increasing, interior to (0, pi)
    psi: np.ndarray            # (n_psi,), 2 pi b / n_psi
    weights: np.ndarray        # (n_theta, n_psi), sums to 4 pi
    theta_weights: np.ndarray  # Gauss-Legendre weights in x = cos(theta)
    _dtheta_even: np.ndarray = field(repr=False)
    _dtheta_odd: np.ndarray = field(repr=False)

    @property
    def shape(self):
        return (self.theta.size, self.psi.size)

    @property
    def n_theta(self) -> int:
        return self.theta.size

    @property
    def n_psi(self) -> int:
        return self.psi.size

    @property
    def TH(self) -> np.ndarray:
        return np.broadcast_to(self.theta[:, None], self.shape)

    @property
    def PS(self) -> np.ndarray:
        return np.broadcast_to(self.psi[None, :], self.shape)

    def direction(self, nu: int) -> np.ndarray:
        """Values of n^nu on the grid: 1, sin cos, sin sin, cos."""
        return direction_vector(nu, self.TH, self.PS)

    def d_theta(self, values: np.ndarray, parity: int = 1) -> np.ndarray:
        """Theta derivative of a field sampled on the grid.

        Each azimuthal mode m of a field that is smooth on the sphere obeys
        f_m(-theta) = parity * (-1)^m f_m(theta); it is interpolated by a
        cosine or sine series through the theta nodes and differentiated
        exactly.  ``parity`` is +1 for scalars and spin-2 components and -1
        for vector (spin-1) components such as N and P.
        """
        values = np.asarray(values, dtype=float)
        spec = np.fft.rfft(values, axis=-1)
        m = np.arange(spec.shape[-1])
        even = (parity * (-1) ** m) > 0
        out = np.empty_like(spec)
        out[:, even] = self._dtheta_even @ spec[:, even]
        out[:, ~even] = self._dtheta_odd @ spec[:, ~even]
        return np.fft.irfft(out, n=self.n_psi, axis=-1)

    def d_psi(self, values: np.ndarray, order: int = 1) -> np.ndarray:
        """Psi derivative by Fourier differentiation on each ring."""
        n = self.n_psi
        k = np.fft.rfftfreq(n, d=1.0 / n)
        spec = np.fft.rfft(values, axis=-1)
        factor = (1j * k) ** order
        if order % 2 == 1 and n % 2 == 0:
            factor[-1] = 0.0
        return np.fft.irfft(spec * factor, n=n, axis=-1)


def direction_vector(nu: int, theta, psi):
    if nu == 0:
        return np.ones(np.broadcast(theta, psi).shape)
    if nu == 1:
        return np.sin(theta) * np.cos(psi)
    if nu == 2:
        return np.sin(theta) * np.sin(psi)
    if nu == 3:
        return np.cos(theta) * np.ones_like(psi)
    raise ValueError(f"direction index must be 0..3, got {nu}")


def _trig_diff_matrices(theta: np.ndarray):
    """Collocation derivative matrices for cosine (even) and sine (odd)
    series through the given nodes."""
    n = theta.size
    k_even = np.arange(n)
    k_odd = np.arange(1, n + 1)
    C = np.cos(np.outer(theta, k_even))
    S = np.sin(np.outer(theta, k_odd))
    dC = -k_even * np.sin(np.outer(theta, k_even))
    dS = k_odd * np.cos(np.outer(theta, k_odd))
    return np.linalg.solve(C.T, dC.T).T, np.linalg.solve(S.T, dS.T).T


def make_grid(n_theta: int = DEFAULT_SHAPE[0], n_psi: int = DEFAULT_SHAPE[1]) -> SphereGrid:
    if int(n_theta) != n_theta or int(n_psi) != n_psi:
        raise ValueError("grid sizes must be integers")
    n_theta, n_psi = int(n_theta), int(n_psi)
    if n_theta < 4 or n_psi < 4 or n_psi % 2:
        raise ValueError(f"need n_theta >= 4 and even n_psi >= 4, got ({n_theta}, {n_psi})")
    x, w = np.polynomial.legendre.leggauss(n_theta)
    order = np.argsort(-x)  # increasing theta
    x, w = x[order], w[order]
    theta = np.arccos(x)
    psi = 2.0 * np.pi * np.arange(n_psi) / n_psi
    weights = np.outer(w, np.full(n_psi, 2.0 * np.pi / n_psi))
    return SphereGrid(theta, psi, weights, w, *_trig_diff_matrices(theta))


def parse_shape(text: str):
    """Parse ``"NxM"`` into ``(N, M)``."""
    try:
        a, b = text.lower().split("x")
        return int(a), int(b)
    except ValueError:
        raise ValueError(f"grid must look like 24x48, got {text!r}") from None


def integrate(values, grid: SphereGrid) -> float:
    values = np.broadcast_to(np.asarray(values, dtype=float), grid.shape)
    if not np.all(np.isfinite(values)):
        raise ValueError("non-finite value on the quadrature grid")
    return float(np.sum(values * grid.weights))


def moment(values, nu: int, grid: SphereGrid) -> float:
    """(1/4 pi) * integral of values * n^nu over the unit sphere."""
    return integrate(np.asarray(values, dtype=float) * grid.direction(nu), grid) / FOUR_PI


def moments(values, grid: SphereGrid) -> np.ndarray:
    return np.array([moment(values, nu, grid) for nu in range(4)])
