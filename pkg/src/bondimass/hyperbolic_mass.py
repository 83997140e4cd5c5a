"""Hyperbolic energy-momentum integrands and their limits on the graph slice.

With ``a = g - 1`` and ``b = h - 1`` in the hyperbolic frame,

    E = sum_j nabla_j a_1j - e_1(tr a) + a_22 + a_33,
    P = b_11 - tr b = -b_22 - b_33,

where ``nabla`` is the connection of the unit hyperbolic metric.  Limits of
their sphere integrals are read off radial fits: the 1/r^2 part must have
vanishing moments for the limit to exist, and the 1/r^3 part gives the value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from . import fieldexpr as fx
from .asymptotics import CoefficientFit, extract_coefficients, radii as make_radii
from .characteristic import Report
from .energetics import EnergyMomentum
from .jets import real_array
from .slice_geometry import BondiMetricModel, GraphSlice, SliceGeometry, slice_geometry
from .sphere import FOUR_PI, SphereGrid, moments

NORMALIZATIONS = ("combined", "paper-definitions")
DIVERGENCE_TOL = 1e-8


class DivergentLimitError(ArithmeticError):
    def __init__(self, message: str, coefficient):
        super().__init__(message)
        self.coefficient = coefficient


def hyperbolic_connection(r, theta) -> np.ndarray:
    """W[..., k, l, i] = omega_li(e_k) for the unit hyperbolic frame."""
    r, theta = np.broadcast_arrays(real_array(r), real_array(theta))
    s = np.sqrt(1.0 + r * r) / r
    cot = np.cos(theta) / (r * np.sin(theta))
    W = np.zeros(r.shape + (3, 3, 3), dtype=s.dtype)
    W[..., 1, 0, 1], W[..., 1, 1, 0] = -s, s
    W[..., 2, 0, 2], W[..., 2, 2, 0] = -s, s
    W[..., 2, 1, 2], W[..., 2, 2, 1] = -cot, cot
    return W


def covariant_derivative(a: np.ndarray, da: np.ndarray, W: np.ndarray) -> np.ndarray:
    """nabla_k a_ij = e_k(a_ij) - a_jl omega_li(e_k) - a_il omega_lj(e_k)."""
    return (da
            - np.einsum("...jl,...kli->...kij", a, W)
            - np.einsum("...il,...klj->...kij", a, W))


def integrands(geo: SliceGeometry):
    """(E, P) at every point of the batch."""
    a, b = geo.a, geo.b
    W = hyperbolic_connection(geo.r, geo.theta)
    Da = covariant_derivative(a, geo.frame_derivative_a(), W)
    div = Da[..., 0, 0, 0] + Da[..., 1, 0, 1] + Da[..., 2, 0, 2]
    dtr = Da[..., 0, 0, 0] + Da[..., 0, 1, 1] + Da[..., 0, 2, 2]
    E = div - dtr + a[..., 1, 1] + a[..., 2, 2]
    P = -b[..., 1, 1] - b[..., 2, 2]
    return E, P


def cal_E(model: BondiMetricModel, slc: GraphSlice, r, theta, psi) -> np.ndarray:
    return integrands(slice_geometry(model, slc, r, theta, psi))[0]


def cal_P(model: BondiMetricModel, slc: GraphSlice, r, theta, psi) -> np.ndarray:
    return integrands(slice_geometry(model, slc, r, theta, psi))[1]


def cal_P_definition(geo: SliceGeometry) -> np.ndarray:
    """b_11 - tr b, written out from the definition."""
    b = geo.b
    return b[..., 0, 0] - (b[..., 0, 0] + b[..., 1, 1] + b[..., 2, 2])


@dataclass
class IntegrandFits:
    E: CoefficientFit
    P: CoefficientFit


def fit_integrands(model: BondiMetricModel, slc: GraphSlice, theta, psi, radii=None) -> IntegrandFits:
    """Radial fits of E and P at each direction (theta, psi arrays of equal shape)."""
    rr = make_radii() if radii is None else np.asarray(radii, dtype=float)
    theta, psi = np.broadcast_arrays(np.asarray(theta, dtype=float), np.asarray(psi, dtype=float))
    ext = (rr.size,) + (1,) * theta.ndim
    R = np.broadcast_to(rr.reshape(ext), (rr.size,) + theta.shape)
    geo = slice_geometry(model, slc, R, np.broadcast_to(theta, R.shape), np.broadcast_to(psi, R.shape))
    E, P = integrands(geo)
    return IntegrandFits(extract_coefficients(rr, E.astype(float)), extract_coefficients(rr, P.astype(float)))


FORMS = ("stated", "derived")


def lemma_expectations(model: BondiMetricModel, slc: GraphSlice, theta, psi,
                       form: str = "stated") -> Dict[str, np.ndarray]:
    """Closed forms of the 1/r^2 and 1/r^3 coefficients of E and P at u = 0.

    ``stated`` is the expansion as written.  ``derived`` keeps the connection
    term -(sqrt(1+r^2)/r)(a_22 + a_33) of the divergence, which removes
    4(c^2+d^2)/r^2 + 4(cc_0+dd_0)/r^3 from E; P is the same in both.
    """
    if form not in FORMS:
        raise ValueError(f"form must be one of {FORMS}")
    q = model.news.sym
    exprs = [q.c, q.d, q.c_0, q.d_0, q.Ldiv, model.initial["M"], slc.a3.expr]
    c, d, c0, d0, L, M, a3 = (np.broadcast_to(v, np.broadcast(theta, psi).shape)
                              for v in fx.evaluate_many(exprs, 0.0, theta, psi))
    ccd0 = c * c0 + d * d0
    k2, k3 = (12, 15) if form == "stated" else (8, 11)
    return {
        "E2": k2 * (c * c + d * d),
        "E3": M + 16 * a3 + k3 * ccd0 - L / 2,
        "P2": np.zeros_like(c),
        "P3": -(3 * M - 16 * a3 + 5 * ccd0 - L) / 2,
    }


def modified_aspect_at(model: BondiMetricModel, theta, psi) -> np.ndarray:
    """M - Ldiv/2 at u = 0."""
    q = model.news.sym
    M, L = fx.evaluate_many([model.initial["M"], q.Ldiv], 0.0, theta, psi)
    return np.broadcast_to(M - 0.5 * L, np.broadcast(theta, psi).shape)


def _compare(got, exp, rtol, atol):
    err = np.abs(np.asarray(got) - np.asarray(exp))
    ok = (err <= atol) | (err <= rtol * np.abs(exp))
    rel = float(np.max(err / np.maximum(np.abs(exp), atol)))
    return bool(np.all(ok)), rel


def check_lemma(model: BondiMetricModel, slc: GraphSlice, theta, psi, radii=None,
                rtol: float = 1e-4, atol: float = 1e-8, form: str = "stated") -> Report:
    """Fitted E and P coefficients against their closed forms."""
    fits = fit_integrands(model, slc, theta, psi, radii)
    exp = lemma_expectations(model, slc, theta, psi, form)
    got = {"E2": fits.E.order(2), "E3": fits.E.order(3), "P2": fits.P.order(2), "P3": fits.P.order(3)}
    passed, worst, parts = True, 0.0, {}
    for key in ("E2", "E3", "P2", "P3"):
        ok, rel = _compare(got[key], exp[key], rtol, atol)
        passed &= ok
        worst = max(worst, rel)
        parts[key] = {"expected": np.asarray(exp[key]).ravel().tolist(),
                      "fitted": np.asarray(got[key]).ravel().tolist(), "passed": ok}
    reliable = fits.E.reliable and fits.P.reliable
    k2, k3 = (12, 15) if form == "stated" else (8, 11)
    name = "integrand_expansion" if form == "stated" else "integrand_expansion_derived"
    return Report(name, passed and reliable, worst,
                  {"rtol": rtol, "atol": atol, "reliable": reliable, "form": form, "coefficients": parts},
                  f"E ~ {k2}(c^2+d^2)/r^2 + (M + 16a3 + {k3}cc_0 + {k3}dd_0 - Ldiv/2)/r^3, "
                  "P ~ -(3M - 16a3 + 5cc_0 + 5dd_0 - Ldiv)/(2r^3)")


@dataclass
class EMLimits:
    normalization: str
    E: Optional[EnergyMomentum]
    P: Optional[EnergyMomentum]
    E_minus_P: Optional[EnergyMomentum]
    divergent: bool
    divergent_moments: np.ndarray       # 1/r^2 moments of the relevant integrand
    max_residual: float

    def as_dict(self) -> dict:
        out = {"normalization": self.normalization, "divergent": self.divergent,
               "divergent_moments": [float(x) for x in self.divergent_moments],
               "max_fit_residual": self.max_residual}
        for key in ("E", "P", "E_minus_P"):
            v = getattr(self, key)
            out[key] = v.tolist() if v is not None else None
        return out


def em_limits(model: BondiMetricModel, slc: GraphSlice, grid: SphereGrid,
              normalization: str = "combined", radii=None,
              divergence_tol: float = DIVERGENCE_TOL, raise_on_divergence: bool = False) -> EMLimits:
    """Limits of the hyperbolic energy-momentum surface integrals.

    The surface element on S_r is r^3 dOmega, so the limit is the 1/r^3
    coefficient of the integrand integrated against n^nu.  ``combined``
    reports (1/16 pi) int (E - P) n^nu; ``paper-definitions`` reports
    E_nu = (1/16 pi) int E n^nu and P_nu = (1/8 pi) int P n^nu separately,
    together with their difference.  A 1/r^2 moment above ``divergence_tol``
    marks the limit as divergent.
    """
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
    fits = fit_integrands(model, slc, grid.TH, grid.PS, radii)
    E2, E3 = fits.E.order(2), fits.E.order(3)
    P2, P3 = fits.P.order(2), fits.P.order(3)
    resid = float(max(np.max(fits.E.residual), np.max(fits.P.residual)))
    if normalization == "combined":
        div_mom = FOUR_PI * moments(E2 - P2, grid)
        divergent = bool(np.max(np.abs(div_mom)) > divergence_tol)
        EmP = None if divergent else EnergyMomentum(FOUR_PI * moments(E3 - P3, grid) / (16 * math.pi))
        res = EMLimits(normalization, None, None, EmP, divergent, div_mom, resid)
    else:
        div_mom = FOUR_PI * moments(E2, grid)
        divergent = bool(np.max(np.abs(div_mom)) > divergence_tol
                         or np.max(np.abs(FOUR_PI * moments(P2, grid))) > divergence_tol)
        if divergent:
            res = EMLimits(normalization, None, None, None, True, div_mom, resid)
        else:
            E = FOUR_PI * moments(E3, grid) / (16 * math.pi)
            P = FOUR_PI * moments(P3, grid) / (8 * math.pi)
            res = EMLimits(normalization, EnergyMomentum(E), EnergyMomentum(P),
                           EnergyMomentum(E - P), False, div_mom, resid)
    if divergent and raise_on_divergence:
        raise DivergentLimitError("1/r^2 moment of the integrand does not vanish", div_mom)
    return res


def check_modified_link(model: BondiMetricModel, grid: SphereGrid, slc: Optional[GraphSlice] = None,
                        radii=None, rtol: float = 1e-4, moment_tol: float = 1e-6,
                        precondition_tol: float = 1e-12) -> Report:
    """With a3 = -M/16 and c = d = 0 at u = 0 the 1/r^3 coefficient of
    E - P is twice the modified mass aspect, and the combined limit is half
    the modified Bondi energy-momentum."""
    slc = GraphSlice.minus_M_over_16(model) if slc is None else slc
    q = model.news.sym
    c, d = fx.evaluate_many([q.c, q.d], 0.0, grid.TH, grid.PS)
    pre = float(max(np.max(np.abs(c)), np.max(np.abs(d))))
    anchor = "E - P ~ 2 M_mod(0, theta, psi)/r^3 on the slice a3 = -M/16"
    if pre > precondition_tol:
        raise ValueError(f"c and d must vanish at u = 0 (max |c|, |d| = {pre:.3g})")
    fits = fit_integrands(model, slc, grid.TH, grid.PS, radii)
    coef = fits.E.order(3) - fits.P.order(3)
    mod = modified_aspect_at(model, grid.TH, grid.PS)
    ok_pt, rel = _compare(coef, 2 * mod, rtol, 1e-8)
    limits = em_limits(model, slc, grid, "combined", radii)
    mbar = moments(mod, grid)
    if limits.E_minus_P is None:
        moment_err = math.inf
    else:
        moment_err = float(np.max(np.abs(limits.E_minus_P.m - mbar / 2)))
    passed = ok_pt and moment_err < moment_tol
    return Report("modified_link", passed, rel,
                  {"rtol": rtol, "moment_error": moment_err, "moment_tol": moment_tol,
                   "E_minus_P": limits.E_minus_P.tolist() if limits.E_minus_P else None,
                   "modified_bondi_half": (mbar / 2).tolist()},
                  anchor)
