"""Jang's equation on the graph slice and the energy of the Jang graph.

For ``f = sqrt(1 + r^2) + p(theta, psi) ln r`` the operator

    J(f) = (g^ij - f^i f^j / (1 + |df|^2)) (f_;ij / sqrt(1 + |df|^2) - h_ij)

is evaluated in the hyperbolic frame, where the induced metric is close to
the identity.  (The coordinate metric in (r, theta, psi) has a condition
number of order r^4.)  The metric ``gbar = g + df df`` is then compared with
the flat metric in the frame ``d/dr, (1/r) d/dtheta, (1/(r sin)) d/dpsi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import fieldexpr as fx
from .asymptotics import POWER_BASIS, CoefficientFit, extract_log_separated, radii as make_radii
from .characteristic import Report
from .hyperbolic_mass import covariant_derivative, modified_aspect_at
from .jets import inv3, real_array
from .slice_geometry import BondiMetricModel, GraphSlice, SliceGeometry, slice_geometry
from .sphere import FOUR_PI, SphereGrid, moments

DIVERGENCE_TOL = 1e-8


@dataclass
class JangFunction:
    """f = sqrt(1 + r^2) + p ln r; the remainder q is fixed to zero."""
    p: fx.ScalarField

    def __post_init__(self):
        if not isinstance(self.p, fx.ScalarField):
            self.p = fx.ScalarField(self.p)

    def derivatives(self, r, theta, psi, log_r=None):
        """Gradient (..., 3) and coordinate Hessian (..., 3, 3) in (r, theta, psi).

        ``log_r`` freezes the ln r factors at a given value (the terms that
        come from differentiating ln r keep their 1/r form).
        """
        r, theta, psi = np.broadcast_arrays(*(real_array(x) for x in (r, theta, psi)))
        keys = [(0, 0, 0), (0, 1, 0), (0, 0, 1), (0, 2, 0), (0, 1, 1), (0, 0, 2)]
        p, pt, pp, ptt, ptp, ppp = (np.broadcast_to(v, r.shape) for v in
                                    fx.evaluate_many([self.p.d(*k) for k in keys], 0.0,
                                                     theta.astype(float), psi.astype(float)))
        s = np.sqrt(1.0 + r * r)
        L = np.log(r) if log_r is None else np.broadcast_to(np.asarray(log_r, dtype=r.dtype), r.shape)
        grad = np.stack([r / s + p / r, pt * L, pp * L], axis=-1)
        hess = np.empty(r.shape + (3, 3), dtype=r.dtype)
        hess[..., 0, 0] = 1.0 / s**3 - p / (r * r)
        hess[..., 0, 1] = hess[..., 1, 0] = pt / r
        hess[..., 0, 2] = hess[..., 2, 0] = pp / r
        hess[..., 1, 1] = ptt * L
        hess[..., 1, 2] = hess[..., 2, 1] = ptp * L
        hess[..., 2, 2] = ppp * L
        return grad, hess

    def value(self, r, theta, psi):
        r = np.asarray(r, dtype=float)
        return np.sqrt(1.0 + r * r) + self.p(0.0, theta, psi) * np.log(r)


def laplacian_S2(p, theta, psi):
    """p_thth + cot p_th + csc^2 p_psps, evaluated symbolically."""
    sf = p if isinstance(p, fx.ScalarField) else fx.ScalarField(p)
    th = fx.THETA
    e = sf.d(0, 2, 0) + fx.cot(th) * sf.d(0, 1, 0) + sf.d(0, 0, 2) / fx.sin(th) ** 2
    return fx.evaluate(fx.simplify(e), 0.0, theta, psi)


def _christoffel_lower(dG: np.ndarray) -> np.ndarray:
    """Gam[..., l, i, j] = 1/2 (d_i G_lj + d_j G_li - d_l G_ij) from dG[..., k, i, j]."""
    return 0.5 * (np.einsum("...ilj->...lij", dG) + np.einsum("...jli->...lij", dG) - dG)


def jang_from_geometry(geo: SliceGeometry, jf: JangFunction, shift: float = 0.0, log_r=None):
    """J(f) at every point of the batch, plus the trace factor in the frame.

    ``shift`` adds a constant to f; it enters nowhere, and is accepted so
    that callers can check the translation invariance explicitly.
    """
    grad, hess = jf.derivatives(geo.r, geo.theta, geo.psi, log_r)
    F = geo.F
    FF = F[..., :, None] * F[..., None, :]
    Ghat = FF * geo.G
    Gi = inv3(Ghat)
    gam = _christoffel_lower(geo.dG) * F[..., :, None, None] * FF[..., None, :, :]
    fhat = F * grad
    cov = FF * hess - np.einsum("...kl,...lij,...k->...ij", Gi, gam, fhat)
    fup = np.einsum("...ij,...j->...i", Gi, fhat)
    n2 = np.einsum("...i,...i->...", fhat, fup)
    w = 1.0 + n2
    trace = Gi - fup[..., :, None] * fup[..., None, :] / w[..., None, None]
    J = np.einsum("...ij,...ij->...", trace, cov / np.sqrt(w)[..., None, None] - geo.h_frame)
    return J, trace


def jang_residual(model: BondiMetricModel, slc: GraphSlice, jf: JangFunction, r, theta, psi):
    return jang_from_geometry(slice_geometry(model, slc, r, theta, psi), jf)[0]


def _grid_batch(model, slc, theta, psi, radii):
    rr = make_radii() if radii is None else np.asarray(radii, dtype=float)
    theta, psi = np.broadcast_arrays(np.asarray(theta, dtype=float), np.asarray(psi, dtype=float))
    R = np.broadcast_to(rr.reshape((rr.size,) + (1,) * theta.ndim), (rr.size,) + theta.shape)
    geo = slice_geometry(model, slc, R, np.broadcast_to(theta, R.shape), np.broadcast_to(psi, R.shape))
    return rr, geo


def fit_jang(model: BondiMetricModel, slc: GraphSlice, jf: JangFunction, theta, psi,
             radii=None) -> CoefficientFit:
    """Coefficients of ln(r)^k / r^n in J(f), keyed (n, k)."""
    rr, geo = _grid_batch(model, slc, theta, psi, radii)
    return extract_log_separated(rr, lambda lam: jang_from_geometry(geo, jf, log_r=lam)[0].astype(float),
                                 basis=POWER_BASIS)


def check_jang_expansion(model: BondiMetricModel, slc: GraphSlice, jf: JangFunction, theta, psi,
                         radii=None, rtol: float = 1e-3, atol: float = 1e-6) -> Report:
    """ln r/r^3 coefficient of J(f) is the sphere Laplacian of p and the
    1/r^3 coefficient is p - 2 M_mod(0)."""
    fit = fit_jang(model, slc, jf, theta, psi, radii)
    lap = laplacian_S2(jf.p, theta, psi)
    expect = {"log": np.broadcast_to(lap, np.shape(theta)),
              "power": jf.p(0.0, theta, psi) - 2 * modified_aspect_at(model, theta, psi)}
    got = {"log": fit[(3, 1)], "power": fit[(3, 0)]}
    passed, worst, parts = True, 0.0, {}
    for key in ("log", "power"):
        err = np.abs(got[key] - expect[key])
        ok = (err <= atol) | (err <= rtol * np.abs(expect[key]))
        passed &= bool(np.all(ok))
        worst = max(worst, float(np.max(err / np.maximum(np.abs(expect[key]), atol))))
        parts[key] = {"expected": np.ravel(expect[key]).tolist(), "fitted": np.ravel(got[key]).tolist(),
                      "passed": bool(np.all(ok))}
    # lower orders must be absent
    lower = float(max(np.max(np.abs(fit[(2, 0)])), np.max(np.abs(fit[(2, 1)]))))
    passed &= lower <= atol
    return Report("jang_expansion", bool(passed), worst,
                  {"rtol": rtol, "atol": atol, "max_lower_order": lower,
                   "fit_residual": float(np.max(fit.residual)), "coefficients": parts},
                  "J(f) ~ (ln r/r^3) Lap p + (p - 2 M_mod(0))/r^3")


# ---------------------------------------------------------------------------
# Energy of the Jang graph

def flat_connection(r, theta) -> np.ndarray:
    """W[..., k, l, i] = omega_li(e_k) for the flat spherical frame."""
    r, theta = np.broadcast_arrays(real_array(r), real_array(theta))
    ir = 1.0 / r
    cot = np.cos(theta) / (r * np.sin(theta))
    W = np.zeros(r.shape + (3, 3, 3), dtype=ir.dtype)
    W[..., 1, 0, 1], W[..., 1, 1, 0] = -ir, ir
    W[..., 2, 0, 2], W[..., 2, 2, 0] = -ir, ir
    W[..., 2, 1, 2], W[..., 2, 2, 1] = -cot, cot
    return W


def adm_integrand(geo: SliceGeometry, jf: JangFunction, log_r=None) -> np.ndarray:
    """div alpha_1. - e_1(tr alpha) with alpha = gbar - 1 in the flat frame."""
    r, th = geo.r, geo.theta
    grad, hess = jf.derivatives(r, th, geo.psi, log_r)
    gbar = geo.G + grad[..., :, None] * grad[..., None, :]
    dgbar = geo.dG + hess[..., :, :, None] * grad[..., None, None, :] + grad[..., None, :, None] * hess[..., :, None, :]
    sn = np.sin(th)
    F0 = np.stack([np.ones_like(r), 1.0 / r, 1.0 / (r * sn)], axis=-1)
    dF0 = np.zeros(r.shape + (3, 3), dtype=r.dtype)
    dF0[..., 0, 1] = -1.0 / (r * r)
    dF0[..., 0, 2] = -1.0 / (r * r * sn)
    dF0[..., 1, 2] = -np.cos(th) / (r * sn * sn)
    FF = F0[..., :, None] * F0[..., None, :]
    dFF = dF0[..., :, :, None] * F0[..., None, None, :] + F0[..., None, :, None] * dF0[..., :, None, :]
    alpha = FF * gbar - np.eye(3)
    dalpha = F0[..., :, None, None] * (dFF * gbar[..., None, :, :] + FF[..., None, :, :] * dgbar)
    D = covariant_derivative(alpha, dalpha, flat_connection(r, th))
    div = D[..., 0, 0, 0] + D[..., 1, 0, 1] + D[..., 2, 0, 2]
    dtr = D[..., 0, 0, 0] + D[..., 0, 1, 1] + D[..., 0, 2, 2]
    return div - dtr


@dataclass
class ADMResult:
    energy: Optional[float]
    divergent: bool
    log_moment: float          # (1/16 pi) int [I]_{ln r/r^2} dOmega
    power_moment: float        # (1/16 pi) int [I]_{1/r^2} dOmega
    leading_moment: float      # largest 1/r and ln^k r/r^2 (k >= 1) monopole
    fit: CoefficientFit

    def as_dict(self) -> dict:
        return {"energy": self.energy, "divergent": self.divergent, "log_moment": self.log_moment,
                "power_moment": self.power_moment, "leading_moment": self.leading_moment,
                "max_fit_residual": float(np.max(self.fit.residual))}


def adm_energy(model: BondiMetricModel, slc: GraphSlice, jf: JangFunction, grid: SphereGrid,
               radii=None, divergence_tol: float = DIVERGENCE_TOL) -> ADMResult:
    """(1/16 pi) lim int I r^2 dOmega from the 1/r^2 fit coefficient of I.

    The limit diverges when a monopole of 1/r, ln r/r^2 or ln^2 r/r^2
    survives; it is then flagged and ``energy`` is None.
    """
    rr, geo = _grid_batch(model, slc, grid.TH, grid.PS, radii)
    fit = extract_log_separated(rr, lambda lam: adm_integrand(geo, jf, log_r=lam).astype(float), basis=POWER_BASIS)
    leading = [t for t in fit.basis if t[0] < 2 or (t[0] == 2 and t[1] > 0)]
    mono = {t: FOUR_PI * moments(fit[t], grid)[0] / (16 * math.pi) for t in leading}
    lead = float(max(abs(v) for v in mono.values()))
    divergent = lead > divergence_tol
    power = float(FOUR_PI * moments(fit[(2, 0)], grid)[0] / (16 * math.pi))
    return ADMResult(None if divergent else power, divergent, float(mono[(2, 1)]), power, lead, fit)
