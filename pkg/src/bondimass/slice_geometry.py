"""Truncated Bondi metric, the asymptotically null graph slice and its geometry.

The spacetime metric is assembled from the large-r expansions of
gamma, delta, beta, U, W and V in coordinates (u, r, theta, psi).  Near
``u = 0`` the data fields are replaced by quadratic Taylor polynomials whose
coefficients come from the u-derivative formulas of
:func:`bondimass.characteristic.rates`.  Metric components and their first
partials are obtained together with forward-mode jets: field partials are
exact symbolic derivatives and the r-dependence is explicit.

On the slice ``u = sqrt(1 + r^2) - r + (c^2 + d^2)|_0 / (12 r^3) + a3 / r^4``
(with slice coordinates r, theta, psi) everything is expressed in the
hyperbolic frame ``sqrt(1+r^2) d/dr, (1/r) d/dtheta, (1/(r sin)) d/dpsi``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from types import SimpleNamespace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import fieldexpr as fx
from . import jets as jt
from .asymptotics import CoefficientFit, extract_coefficients, radii as make_radii
from .characteristic import NewsData, Report, aux_symbols, mbar_field, p_fields, rates
from .fieldexpr import Expr, ScalarField

COMPONENTS = ("11", "12", "13", "22", "23", "33")
PAIRS = {"11": (0, 0), "12": (0, 1), "13": (0, 2), "22": (1, 1), "23": (1, 2), "33": (2, 2)}

# field expressions evaluated (with their u, theta, psi partials) at every point
MODEL_FIELDS = ("c", "d", "M", "C", "H", "l", "lbar", "p", "pbar", "Mbar")

SAMPLE_THETA_RANGE = (0.2, math.pi - 0.2)


class DegenerateMetricError(ArithmeticError):
    """The truncated metric or the slice is not usable at the point (r too small)."""


def _as_expr(x) -> Expr:
    if isinstance(x, ScalarField):
        return x.expr
    if isinstance(x, Expr):
        return x
    if isinstance(x, str):
        return fx.simplify(fx.parse(x))
    return fx.const(float(x))


def _rate_taylor(x0: Expr, rate: Expr) -> Expr:
    """x0 + u R(0) + u^2/2 R_u(0) for a field with u-derivative ``rate``."""
    r0 = fx.substitute(rate, {"u": 0.0})
    r1 = fx.substitute(fx.diff(rate, "u"), {"u": 0.0})
    u = fx.U
    return fx.simplify(x0 + r0 * u + 0.5 * r1 * u * u)


class BondiMetricModel:
    """Metric functions near u = 0 for given news and initial data.

    ``M0 .. H0`` are the data at ``u = 0`` (any u in them is set to 0).  The
    fields M, N, P, C, H become quadratic polynomials in u, and so do c and
    d.  ``bare_cot_typo`` selects the literal reading of the Mbar formula.
    """

    def __init__(self, news: NewsData, M0=0.0, N0=0.0, P0=0.0, C0=0.0, H0=0.0,
                 bare_cot_typo: Optional[bool] = None):
        self.news = news
        typo = news.bare_cot_typo if bare_cot_typo is None else bare_cot_typo
        self.bare_cot_typo = typo
        init = {k: fx.substitute(_as_expr(v), {"u": 0.0})
                for k, v in dict(M=M0, N=N0, P=P0, C=C0, H=H0).items()}
        self.initial = init
        q = news.sym
        th, ps = "theta", "psi"
        M_T = _rate_taylor(init["M"], q.Mdot)
        M_2, M_3 = fx.diff(M_T, th), fx.diff(M_T, ps)
        z = fx.ZERO
        _, Ndot, Pdot, _, _ = rates(q, M_T, M_2, M_3, z, z, z, z, z, z)
        N_T = _rate_taylor(init["N"], Ndot)
        P_T = _rate_taylor(init["P"], Pdot)
        _, _, _, Cdot, Hdot = rates(q, M_T, M_2, M_3, N_T, fx.diff(N_T, th), fx.diff(N_T, ps),
                                    P_T, fx.diff(P_T, th), fx.diff(P_T, ps))
        C_T = _rate_taylor(init["C"], Cdot)
        H_T = _rate_taylor(init["H"], Hdot)
        c_T, d_T = fx.taylor2(news.c.expr), fx.taylor2(news.d.expr)
        qt = aux_symbols(ScalarField(c_T), ScalarField(d_T), typo)
        p, pbar = p_fields(qt, N_T, P_T)
        Mbar = mbar_field(qt, N_T, fx.diff(N_T, th), fx.diff(P_T, ps))
        self.fields: Dict[str, ScalarField] = {
            "c": ScalarField(c_T), "d": ScalarField(d_T),
            "M": ScalarField(M_T), "N": ScalarField(N_T), "P": ScalarField(P_T),
            "C": ScalarField(C_T), "H": ScalarField(H_T),
            "l": ScalarField(qt.l), "lbar": ScalarField(qt.lbar),
            "p": ScalarField(fx.simplify(p)), "pbar": ScalarField(fx.simplify(pbar)),
            "Mbar": ScalarField(fx.simplify(Mbar)),
        }
        # (c^2 + d^2) at u = 0, the 1/r^3 correction of the slice
        self.cd2_0 = ScalarField(fx.simplify(fx.substitute(q.c * q.c + q.d * q.d, {"u": 0.0})))
        self._exprs = []
        for name in MODEL_FIELDS:
            f = self.fields[name]
            self._exprs += [f.d(), f.d(1, 0, 0), f.d(0, 1, 0), f.d(0, 0, 1)]

    @classmethod
    def from_strings(cls, c="0", d="0", M0="0", N0="0", P0="0", C0="0", H0="0",
                     bare_cot_typo: bool = False) -> "BondiMetricModel":
        return cls(NewsData(c, d, bare_cot_typo), M0, N0, P0, C0, H0)

    def field_jets(self, u, theta, psi) -> Dict[str, jt.Jet]:
        """Jets over (u, r, theta, psi) of every model field at the points."""
        shape = np.broadcast(u, theta, psi).shape
        vals = fx.evaluate_many(self._exprs, u, theta, psi)
        zero = np.zeros(shape)
        out = {}
        for i, name in enumerate(MODEL_FIELDS):
            v, fu, ft, fp = (np.broadcast_to(x, shape) for x in vals[4 * i: 4 * i + 4])
            out[name] = jt.from_partials(v, (fu, zero, ft, fp))
        return out

    def functions(self, u, r, theta, psi) -> SimpleNamespace:
        """Jets of gamma, delta, beta, U, W, V at the points."""
        u, r, theta, psi = np.broadcast_arrays(*(jt.real_array(x) for x in (u, r, theta, psi)))
        F = SimpleNamespace(**self.field_jets(u.astype(float), theta.astype(float), psi.astype(float)))
        rj = jt.Jet.variable(r, 1, 4)
        ir = 1.0 / rj
        ir2 = ir * ir
        ir3 = ir2 * ir
        c, d = F.c, F.d
        cc, dd = c * c, d * d
        gamma = c * ir + (F.C - c * cc / 6 - 1.5 * c * dd) * ir3
        delta = d * ir + (F.H + 0.5 * cc * d - d * dd / 6) * ir3
        beta = -0.25 * (cc + dd) * ir2
        U = -F.l * ir2 + F.p * ir3
        W = -F.lbar * ir2 + F.pbar * ir3
        V = -rj + 2.0 * F.M + F.Mbar * ir
        return SimpleNamespace(gamma=gamma, delta=delta, beta=beta, U=U, W=W, V=V, r=rj)

    def metric_jet(self, u, r, theta, psi) -> Tuple[np.ndarray, np.ndarray]:
        """Metric components and first partials.

        Returns ``(g, dg)`` with ``g[..., mu, nu]`` and
        ``dg[..., alpha, mu, nu] = d g_{mu nu} / d x^alpha``.
        """
        fn = self.functions(u, r, theta, psi)
        shape = fn.r.v.shape
        th = jt.Jet.variable(np.broadcast_to(theta, shape), 2, 4)
        s = jt.sin(th)
        r_ = fn.r
        r2 = r_ * r_
        e2g, em2g = jt.exp(2.0 * fn.gamma), jt.exp(-2.0 * fn.gamma)
        e2b = jt.exp(2.0 * fn.beta)
        ch, sh = jt.cosh(2.0 * fn.delta), jt.sinh(2.0 * fn.delta)
        U, W = fn.U, fn.W
        comp = {
            (0, 0): fn.V * ir_(r_) * e2b + r2 * (e2g * U * U * ch + em2g * W * W * ch + 2.0 * U * W * sh),
            (0, 1): -1.0 * e2b,
            (0, 2): -1.0 * r2 * (e2g * U * ch + W * sh),
            (0, 3): -1.0 * r2 * (em2g * W * ch + U * sh) * s,
            (2, 2): r2 * e2g * ch,
            (2, 3): r2 * sh * s,
            (3, 3): r2 * em2g * ch * s * s,
        }
        dtype = np.result_type(fn.r.v, float)
        g = np.zeros(shape + (4, 4), dtype=dtype)
        dg = np.zeros(shape + (4, 4, 4), dtype=dtype)
        for (a, b), jet in comp.items():
            v = np.broadcast_to(jet.v, shape)
            gr = np.moveaxis(np.broadcast_to(jet.g, (4,) + shape), 0, -1)
            g[..., a, b] = g[..., b, a] = v
            dg[..., :, a, b] = dg[..., :, b, a] = gr
        return g, dg

    def metric_at(self, u, r, theta, psi) -> np.ndarray:
        g, _ = self.metric_jet(u, r, theta, psi)
        det = np.linalg.det(g)
        if np.any(det >= 0) or not np.all(np.isfinite(g)):
            raise DegenerateMetricError("metric is not Lorentzian at some point; r too small")
        return g


def ir_(r: jt.Jet) -> jt.Jet:
    return 1.0 / r


# ---------------------------------------------------------------------------
# Graph slice

@dataclass
class GraphSlice:
    """The graph u = u(r, theta, psi); a4 is fixed to zero."""
    a3: ScalarField = field(default_factory=lambda: ScalarField(0.0))
    u_offset: float = 0.0

    def __post_init__(self):
        if not isinstance(self.a3, ScalarField):
            self.a3 = ScalarField(_as_expr(self.a3))

    @classmethod
    def minus_M_over_16(cls, model: BondiMetricModel) -> "GraphSlice":
        return cls(ScalarField(fx.simplify(-model.initial["M"] / 16)))


def _base(r):
    """sqrt(1+r^2) - r with its first two derivatives, cancellation free."""
    s = np.sqrt(1.0 + r * r)
    sr = s + r
    b = 1.0 / sr
    b1 = -1.0 / (s * sr)
    b2 = (2 * r + s + r * r / s) / (s * s * sr * sr)
    return b, b1, b2


def graph_u(slc: GraphSlice, model: BondiMetricModel, r, theta, psi):
    """Value, gradient (..., 3) and Hessian (..., 3, 3) of the graph in (r, theta, psi)."""
    r, theta, psi = np.broadcast_arrays(*(jt.real_array(x) for x in (r, theta, psi)))
    b, b1, b2 = _base(r)
    val = slc.u_offset + b
    grad = np.zeros(r.shape + (3,), dtype=r.dtype)
    hess = np.zeros(r.shape + (3, 3), dtype=r.dtype)
    grad[..., 0] = b1
    hess[..., 0, 0] = b2
    for K, n in ((model.cd2_0, 3), (slc.a3, 4)):
        if K.is_zero():
            continue
        k = 1.0 / 12 if n == 3 else 1.0
        keys = [(0, 0, 0), (0, 1, 0), (0, 0, 1), (0, 2, 0), (0, 1, 1), (0, 0, 2)]
        v, kt, kp, ktt, ktp, kpp = (k * np.broadcast_to(x, r.shape) for x in
                                    fx.evaluate_many([K.d(*key) for key in keys], 0.0,
                                                     theta.astype(float), psi.astype(float)))
        rn = r**-n
        val = val + v * rn
        grad[..., 0] += -n * v * rn / r
        grad[..., 1] += kt * rn
        grad[..., 2] += kp * rn
        hess[..., 0, 0] += n * (n + 1) * v * rn / (r * r)
        hess[..., 0, 1] += -n * kt * rn / r
        hess[..., 0, 2] += -n * kp * rn / r
        hess[..., 1, 1] += ktt * rn
        hess[..., 1, 2] += ktp * rn
        hess[..., 2, 2] += kpp * rn
    hess[..., 1, 0] = hess[..., 0, 1]
    hess[..., 2, 0] = hess[..., 0, 2]
    hess[..., 2, 1] = hess[..., 1, 2]
    return val, grad, hess


def frame_factors(r, theta):
    """F_i with e_i = F_i d/dx^i and their (r, theta, psi) derivatives dF[..., k, i]."""
    r, theta = np.broadcast_arrays(jt.real_array(r), jt.real_array(theta))
    s = np.sqrt(1.0 + r * r)
    sn = np.sin(theta)
    F = np.stack([s, 1.0 / r, 1.0 / (r * sn)], axis=-1)
    dF = np.zeros(r.shape + (3, 3), dtype=F.dtype)
    dF[..., 0, 0] = r / s
    dF[..., 0, 1] = -1.0 / (r * r)
    dF[..., 0, 2] = -1.0 / (r * r * sn)
    dF[..., 1, 2] = -np.cos(theta) / (r * sn * sn)
    return F, dF


# ---------------------------------------------------------------------------
# Slice geometry

@dataclass
class SliceGeometry:
    """Geometry of the slice at a batch of points (leading array axes ``shape``).

    Coordinate quantities refer to (r, theta, psi); frame quantities to the
    hyperbolic frame.  ``a`` and ``b`` are the frame deviations g - 1, h - 1.
    """
    r: np.ndarray
    theta: np.ndarray
    psi: np.ndarray
    u: np.ndarray
    du: np.ndarray          # (..., 3)
    ddu: np.ndarray         # (..., 3, 3)
    g4: np.ndarray          # (..., 4, 4)
    dg4: np.ndarray         # (..., 4, 4, 4)
    G: np.ndarray           # induced metric, coordinates
    dG: np.ndarray          # (..., k, i, j) = d_k G_ij along the slice
    h_coord: np.ndarray
    normal: np.ndarray      # (..., 4) unit normal e_n
    F: np.ndarray
    dF: np.ndarray
    a: np.ndarray
    b: np.ndarray
    tangents: np.ndarray    # (..., 3, 4) coordinate tangents T_i

    @property
    def g_frame(self) -> np.ndarray:
        return self.a + np.eye(3)

    @property
    def h_frame(self) -> np.ndarray:
        return self.b + np.eye(3)

    def frame_derivative_a(self) -> np.ndarray:
        """da[..., k, i, j] = e_k(a_ij) in the hyperbolic frame."""
        F, dF, G, dG = self.F, self.dF, self.G, self.dG
        FF = F[..., :, None] * F[..., None, :]
        dFF = dF[..., :, :, None] * F[..., None, None, :] + F[..., None, :, None] * dF[..., :, None, :]
        coord = dFF * G[..., None, :, :] + FF[..., None, :, :] * dG
        return F[..., :, None, None] * coord


def slice_geometry(model: BondiMetricModel, slc: GraphSlice, r, theta, psi,
                   extended: bool = True) -> SliceGeometry:
    """Induced metric, normal and second fundamental form at the points.

    With ``extended`` the r-dependent assembly runs in long double, which
    keeps the deviations a, b free of double-precision cancellation noise.
    """
    dtype = np.longdouble if extended else float
    r, theta, psi = np.broadcast_arrays(*(np.asarray(x, dtype=dtype) for x in (r, theta, psi)))
    if np.any(r <= 0):
        raise ValueError("r must be positive")
    if np.any((theta <= 0) | (theta >= math.pi)):
        raise ValueError("theta must lie in (0, pi)")
    u, du, ddu = graph_u(slc, model, r, theta, psi)
    g, dg = model.metric_jet(u, r, theta, psi)
    if not (np.all(np.isfinite(g)) and np.all(np.isfinite(dg))):
        raise DegenerateMetricError("metric is not finite at some point")
    shape = r.shape
    T = np.zeros(shape + (3, 4), dtype=dtype)
    T[..., :, 0] = du
    for i in range(3):
        T[..., i, i + 1] = 1.0
    # derivative of g along the slice: D_k g = d_0 g u_k + d_k g
    Dg = dg[..., 1:, :, :] + du[..., :, None, None] * dg[..., 0:1, :, :]
    gT = np.einsum("...mn,...jn->...mj", g, T)               # g_{mu nu} T_j^nu
    G = np.einsum("...im,...mj->...ij", T, gT)
    dG = np.einsum("...im,...kmn,...jn->...kij", T, Dg, T)
    # d_k T_i = u_{ik} d_0
    gT0 = gT[..., 0, :]
    dG += ddu[..., :, :, None] * gT0[..., None, None, :] + ddu[..., :, None, :] * gT0[..., None, :, None]
    # normal: X = -(d_0 + rho^j d_j) with g(T_i, X) = 0
    A = gT[..., 1:, :].swapaxes(-1, -2)                      # A_ij = T_i^mu g_{mu j}
    rhs = -gT[..., 0, :]                                     # -T_i^mu g_{mu 0}
    try:
        rho = np.einsum("...ij,...j->...i", jt.inv3(A), rhs)
    except np.linalg.LinAlgError as exc:
        raise DegenerateMetricError("normal system is singular") from exc
    X = -np.concatenate([np.ones(shape + (1,), dtype=dtype), rho], axis=-1)
    norm2 = -np.einsum("...m,...mn,...n->...", X, g, X)
    if np.any(norm2 <= 0):
        raise DegenerateMetricError("normal is not timelike; slice not spacelike at some point")
    n = X / np.sqrt(norm2)[..., None]
    # h(T_i, T_j) = g(nabla_{T_i} T_j, n)
    # Gam[..., mu, alpha, beta] = 1/2 (d_alpha g_{mu beta} + d_beta g_{mu alpha} - d_mu g_{alpha beta})
    Gam = 0.5 * (np.einsum("...amb->...mab", dg) + np.einsum("...bma->...mab", dg) - dg)
    ng = np.einsum("...m,...mn->...n", n, g)
    h = ddu * ng[..., 0, None, None] + np.einsum("...m,...mab,...ia,...jb->...ij", n, Gam, T, T)
    F, dF = frame_factors(r, theta)
    FF = F[..., :, None] * F[..., None, :]
    eye = np.eye(3)
    a = FF * G - eye
    b = FF * h - eye
    return SliceGeometry(r, theta, psi, u, du, ddu, g, dg, G, dG, h, n, F, dF, a, b, T)


def induced_metric(model: BondiMetricModel, slc: GraphSlice, r, theta, psi) -> np.ndarray:
    """g(e_i, e_j) in the hyperbolic frame, shape (..., 3, 3)."""
    return slice_geometry(model, slc, r, theta, psi).g_frame


def normal_and_h(model: BondiMetricModel, slc: GraphSlice, r, theta, psi):
    """Unit normal (4-vector components) and h(e_i, e_j) in the hyperbolic frame."""
    geo = slice_geometry(model, slc, r, theta, psi)
    return geo.normal, geo.h_frame


def normal_contracts(geo: SliceGeometry) -> Tuple[float, float]:
    """max |g(n, n) + 1| and max |g(n, e_i)| over the batch."""
    n, g = geo.normal, geo.g4
    nn = np.einsum("...m,...mn,...n->...", n, g, n)
    e = geo.tangents * geo.F[..., :, None]
    ne = np.einsum("...m,...mn,...in->...i", n, g, e)
    return float(np.max(np.abs(nn + 1))), float(np.max(np.abs(ne)))


# ---------------------------------------------------------------------------
# Finite-difference cross-check of metric derivatives

def fd_metric_derivative(model: BondiMetricModel, u, r, theta, psi, rel_r: float = 1e-6,
                         h_angle: float = 1e-6, h_u: float = 1e-6) -> np.ndarray:
    """Central differences of the metric at one point, shape (4, 4, 4).

    Differencing runs in long double so roundoff stays below the truncation error.
    """
    x = np.array([u, r, theta, psi], dtype=np.longdouble)
    steps = np.array([h_u, r * rel_r, h_angle, h_angle])
    out = np.zeros((4, 4, 4))
    for a in range(4):
        xp, xm = x.copy(), x.copy()
        xp[a] += steps[a]
        xm[a] -= steps[a]
        gp, _ = model.metric_jet(*xp)
        gm, _ = model.metric_jet(*xm)
        out[a] = (gp - gm) / (2 * steps[a])
    return out.astype(float)


def check_christoffel_fd(model: BondiMetricModel, slc: GraphSlice, seed: int = 0, n_points: int = 3,
                         r_range=(20.0, 200.0), tol: float = 1e-6) -> Report:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_points):
        r = float(np.exp(rng.uniform(*np.log(r_range))))
        th = float(rng.uniform(*SAMPLE_THETA_RANGE))
        ps = float(rng.uniform(0, 2 * math.pi))
        u = float(graph_u(slc, model, r, th, ps)[0])
        _, dg = model.metric_jet(u, r, th, ps)
        fd = fd_metric_derivative(model, u, r, th, ps)
        scale = np.maximum(np.abs(dg), 1.0 / r)
        worst = max(worst, float(np.max(np.abs(dg - fd) / scale)))
    return Report("christoffel_fd", worst < tol, worst, {"tolerance": tol, "points": n_points},
                  "exact metric partials agree with central differences")


# ---------------------------------------------------------------------------
# Closed-form expansion table

ORACLE_FIELDS = ("c", "d", "c_0", "d_0", "c_00", "d_00", "c_2", "c_3", "d_2", "d_3",
                 "d_22", "d_33", "l", "lbar", "l_0", "lbar_0", "l_2", "lbar_3", "cot", "csc")


def paper_gh_oracle(model: BondiMetricModel, a3, theta, psi, h12_sign: float = 1.0) -> Dict[str, Dict[int, np.ndarray]]:
    """Expected coefficients {order: value} of the twelve frame components.

    Keys are ``"g11" .. "g33"`` and ``"h11" .. "h33"``; order 0 is the
    constant term.  All fields are taken at u = 0.  ``h12_sign`` is the sign
    joining the ``(c_3 d - c d_3) csc`` term in the 1/r^3 part of h12.
    """
    q = model.news.sym
    exprs = [getattr(q, k) for k in ORACLE_FIELDS]
    ini = model.initial
    exprs += [ini[k] for k in ("M", "N", "P", "C", "H")]
    exprs.append(_as_expr(a3.expr if isinstance(a3, ScalarField) else a3))
    vals = fx.evaluate_many(exprs, 0.0, theta, psi)
    shape = np.broadcast(np.asarray(theta), np.asarray(psi)).shape
    v = SimpleNamespace(**{k: np.broadcast_to(x, shape) for k, x in
                           zip(ORACLE_FIELDS + ("M", "N", "P", "C", "H", "a3"), vals)})
    c, d, cot, csc = v.c, v.d, v.cot, v.csc
    cd2 = c * c + d * d
    ccd0 = c * v.c_0 + d * v.d_0
    z = np.zeros(shape)
    one = np.ones(shape)
    out = {
        "g11": {0: one, 1: z, 2: z, 3: (16 * v.a3 + v.M - ccd0) / 2},
        "g12": {0: z, 1: z, 2: -v.l / 2, 3: (12 * v.N - 3 * v.l_0 + 4 * (c * v.c_2 + d * v.d_2)) / 12},
        "g13": {0: z, 1: z, 2: -v.lbar / 2,
                3: (12 * v.P - 3 * v.lbar_0 + 4 * csc * (c * v.c_3 + d * v.d_3)) / 12},
        "g22": {0: one, 1: 2 * c, 2: 2 * cd2 + v.c_0,
                3: c * c * c + c * d * d + 2 * v.C + 2 * ccd0 + v.c_00 / 4},
        "g23": {0: z, 1: 2 * d, 2: v.d_0, 3: c * c * d + d * d * d + 2 * v.H + v.d_00 / 4},
        "g33": {0: one, 1: -2 * c, 2: 2 * cd2 - v.c_0,
                3: -c * c * c - c * d * d - 2 * v.C + 2 * ccd0 - v.c_00 / 4},
        "h11": {0: one, 1: z, 2: cd2, 3: 16 * v.a3 - v.M},
        "h12": {0: z, 1: z, 2: v.l / 2,
                3: (v.l_0 / 2 - 2 * cd2 * cot - 4 * v.N
                    + h12_sign * (-c * v.d_3 + v.c_3 * d) * csc
                    - 13.0 / 3 * (c * v.c_2 + d * v.d_2)) / 2},
        "h13": {0: z, 1: z, 2: v.lbar / 2,
                3: (v.lbar_0 / 2 + c * v.d_2 - v.c_2 * d - 4 * v.P
                    - 13.0 / 3 * (c * v.c_3 + d * v.d_3) * csc) / 2},
        "h22": {0: one, 1: c, 2: v.c_0,
                3: (3 * v.M - 16 * v.a3 - 4 * v.C - 2 * v.l_2 - 2 * c * cd2 + 5 * ccd0
                    + 1.5 * v.c_00) / 4},
        "h23": {0: z, 1: d, 2: v.d_0,
                3: (-2 * d * cd2 + 2 * d * cot * cot + 2 * d * csc * csc - 4 * v.c_3 * cot * csc
                    - v.d_33 * csc * csc - v.d_2 * cot - v.d_22 - 4 * v.H + 1.5 * v.d_00) / 4},
        "h33": {0: one, 1: -c, 2: -v.c_0,
                3: (3 * v.M - 16 * v.a3 + 4 * v.C + 2 * c * cd2 + 5 * ccd0 - 1.5 * v.c_00
                    - 2 * v.l * cot - 2 * v.lbar_3 * csc) / 4},
    }
    return out


# ---------------------------------------------------------------------------
# Radial verification of the table

def sample_directions(n: int, seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """``n`` reproducible directions with theta kept away from the poles."""
    rng = np.random.default_rng(seed)
    return rng.uniform(*SAMPLE_THETA_RANGE, n), rng.uniform(0.0, 2 * math.pi, n)


def fit_components(model: BondiMetricModel, slc: GraphSlice, theta, psi, radii=None,
                   basis=None, weight_power: float = 0.0) -> Dict[str, CoefficientFit]:
    """Radial fits of a_ij and b_ij (keys ``g11``.., ``h11``..) per direction."""
    rr = make_radii() if radii is None else np.asarray(radii, dtype=float)
    theta, psi = np.atleast_1d(theta), np.atleast_1d(psi)
    R = rr[:, None] * np.ones_like(theta)[None, :]
    geo = slice_geometry(model, slc, R, theta[None, :] * np.ones_like(R), psi[None, :] * np.ones_like(R))
    fits = {}
    for comp, (i, j) in PAIRS.items():
        fits["g" + comp] = extract_coefficients(rr, geo.a[..., i, j], basis=basis, weight_power=weight_power)
        fits["h" + comp] = extract_coefficients(rr, geo.b[..., i, j], basis=basis, weight_power=weight_power)
    return fits


def verify_expansions(model: BondiMetricModel, slc: GraphSlice, theta, psi, radii=None, basis=None,
                      rtol: float = 1e-4, atol: float = 1e-8, h12_sign: float = 1.0,
                      orders: Sequence[int] = (1, 2, 3)) -> Report:
    """Fitted 1/r, 1/r^2, 1/r^3 coefficients of all twelve components against
    the closed-form table, direction by direction.

    A coefficient passes when its error is below ``atol`` or below
    ``rtol`` times the expected magnitude (expected zeros use ``atol``).
    """
    theta, psi = np.atleast_1d(np.asarray(theta, dtype=float)), np.atleast_1d(np.asarray(psi, dtype=float))
    fits = fit_components(model, slc, theta, psi, radii, basis)
    oracle = paper_gh_oracle(model, slc.a3, theta, psi, h12_sign)
    entries = []
    worst = 0.0
    passed = True
    unreliable = []
    for key in sorted(fits):
        fit = fits[key]
        if not fit.reliable:
            unreliable.append(key)
        for n in orders:
            exp = np.asarray(oracle[key][n], dtype=float)
            got = np.asarray(fit.order(n), dtype=float)
            err = np.abs(got - exp)
            ok = (err <= atol) | (err <= rtol * np.abs(exp))
            rel = np.where(np.abs(exp) > atol, err / np.maximum(np.abs(exp), 1e-300), err / atol * rtol)
            worst = max(worst, float(np.max(rel)))
            passed = passed and bool(np.all(ok))
            entries.append({
                "component": key, "order": n,
                "expected": [float(x) for x in exp], "fitted": [float(x) for x in got],
                "passed": bool(np.all(ok)),
            })
    if unreliable:
        passed = False
    detail = {
        "rtol": rtol, "atol": atol, "h12_sign": h12_sign,
        "directions": [[float(t), float(p)] for t, p in zip(theta, psi)],
        "unreliable_fits": unreliable,
        "max_fit_residual": {k: float(np.max(f.residual)) for k, f in sorted(fits.items())},
        "entries": entries,
    }
    return Report("expansion_table", passed, worst, detail,
                  "g(e_i, e_j) and h(e_i, e_j) expansions through 1/r^3")


def report_json(report: Report) -> str:
    return json.dumps(report.as_dict(), indent=2, sort_keys=True)
