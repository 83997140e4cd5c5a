"""Scenario and expression generators shared by the tests."""

from __future__ import annotations

import math

import numpy as np

from bondimass import fieldexpr as fx
from bondimass.characteristic import CharacteristicState, NewsData, evolve
from bondimass.slice_geometry import BondiMetricModel

# smooth real harmonics with l >= 2 (regular potentials for spin-2 data)
HARMONICS = (
    "(3*cos(theta)^2 - 1)",
    "sin(theta)*cos(theta)*cos(psi)",
    "sin(theta)*cos(theta)*sin(psi)",
    "sin(theta)^2*cos(2*psi)",
    "sin(theta)^2*sin(2*psi)",
    "cos(theta)^3",
    "sin(theta)^3*cos(3*psi)",
)


def _dfield(e: fx.Expr, nt: int, np_: int) -> fx.Expr:
    return fx.partial(e, 0, nt, np_)


def spin2_pair(Y: str, Z: str = "0"):
    """c, d from an electric potential Y and a magnetic potential Z.

    c = Y_tt - cot Y_t - csc^2 Y_pp - 2 csc (Z_tp - cot Z_p)
    d = 2 csc (Y_tp - cot Y_p) + Z_tt - cot Z_t - csc^2 Z_pp
    Both are regular at the poles with vanishing polar psi-averages.
    """
    th = fx.var("theta")
    cot, csc = fx.cot(th), fx.csc(th)

    def eth(P):
        return _dfield(P, 2, 0) - cot * _dfield(P, 1, 0) - csc * csc * _dfield(P, 0, 2)

    def mag(P):
        return 2 * csc * (_dfield(P, 1, 1) - cot * _dfield(P, 0, 1))

    y, z = fx.parse(Y), fx.parse(Z)
    c = fx.simplify(eth(y) - mag(z))
    d = fx.simplify(mag(y) + eth(z))
    return fx.to_string(c), fx.to_string(d)


def random_potential(rng: np.random.Generator, scale: float = 0.05, u_shape: str = "smooth") -> str:
    terms = []
    for h in HARMONICS:
        a, b, w = rng.normal(size=3)
        if u_shape == "smooth":
            amp = f"({scale * a:.6f} + {scale * b:.6f}*sin({1 + abs(w):.4f}*u))"
        else:
            amp = f"({scale * a:.6f})"
        terms.append(f"{amp}*{h}")
    return " + ".join(terms)


def random_news(rng: np.random.Generator, scale: float = 0.05) -> tuple:
    return spin2_pair(random_potential(rng, scale), random_potential(rng, scale))


def random_initial(rng: np.random.Generator, mass: float = 1.0) -> dict:
    """Smooth initial M, N, P, C, H with the parities of the fields."""
    k = 0.1 * rng.normal(size=8)
    return {
        "M0": f"{mass} + {k[0]:.6f}*cos(theta) + {k[1]:.6f}*sin(theta)*cos(psi)",
        "N0": f"{k[2]:.6f}*sin(theta)*cos(theta) + {k[3]:.6f}*sin(theta)*sin(psi)",
        "P0": f"{k[4]:.6f}*sin(theta)*cos(psi)",
        "C0": f"{k[5]:.6f}*sin(theta)^2*cos(2*psi)",
        "H0": f"{k[6]:.6f}*sin(theta)^2 + {k[7]:.6f}*sin(theta)^2*sin(psi)",
    }


def random_model(seed: int):
    rng = np.random.default_rng(seed)
    c, d = random_news(rng)
    init = random_initial(rng)
    a3 = f"{0.2 * rng.normal():.6f}*cos(theta) + {0.1 * rng.normal():.6f}*sin(theta)*sin(psi)"
    return BondiMetricModel(NewsData(c, d), **init), a3


def constant_aspect_M0(news: NewsData, value: float) -> str:
    """M0 whose modified aspect at u = 0 is the constant ``value``."""
    L0 = fx.substitute(news.sym.Ldiv, {"u": 0.0})
    return fx.to_string(fx.simplify(fx.const(value) + L0 / 2))


def constant_aspect_state(news: NewsData, grid, u0: float, u_end: float, du: float, value: float):
    """Initial state at u0 whose modified aspect is the constant ``value`` at u_end.

    The modified aspect evolves independently of M, so one trial run gives
    the accumulated flux exactly (to the integrator's accuracy).
    """
    M_try = constant_aspect_M0(news, 0.0)
    trial = evolve(CharacteristicState.from_fields(grid, u0, M=M_try), news, u0, u_end, du)
    drop = trial.mod_aspect[0] - trial.mod_aspect[-1]
    M_init = value + (trial.states[0].M - trial.mod_aspect[0]) + drop
    return CharacteristicState.from_fields(grid, u0, M=M_init)


# ---------------------------------------------------------------------------
# random expressions for the differentiation oracle

_LEAVES = ("u", "theta", "psi", "0.7", "1.3", "2")
_UNARY = ("sin({})", "cos({})", "exp({}/3)", "sinh({}/4)", "cosh({}/4)",
          "ln(2 + sin({}))", "sqrt(1 + ({})^2)", "-({})")
_ANGLE = ("cot(theta)", "csc(theta)", "sec(psi/4)", "tan(theta/4)")


def random_expression(rng: np.random.Generator, depth: int = 3) -> str:
    if depth == 0 or rng.random() < 0.2:
        if rng.random() < 0.15:
            return _ANGLE[rng.integers(len(_ANGLE))]
        return _LEAVES[rng.integers(len(_LEAVES))]
    kind = rng.integers(3)
    if kind == 0:
        return _UNARY[rng.integers(len(_UNARY))].format(random_expression(rng, depth - 1))
    a, b = random_expression(rng, depth - 1), random_expression(rng, depth - 1)
    op = rng.integers(5)
    if op == 0:
        return f"({a}) + ({b})"
    if op == 1:
        return f"({a}) - ({b})"
    if op == 2:
        return f"({a})*({b})"
    if op == 3:
        return f"({a})/(2 + cos({b}))"
    return f"({a})^{int(rng.integers(2, 4))}"


def fd4(fun, x: float, h: float = 1e-4) -> float:
    """Fourth-order central difference."""
    return (-fun(x + 2 * h) + 8 * fun(x + h) - 8 * fun(x - h) + fun(x - 2 * h)) / (12 * h)


def interior_point(rng: np.random.Generator):
    return (float(rng.uniform(-1, 1)), float(rng.uniform(0.3, math.pi - 0.3)),
            float(rng.uniform(0, 2 * math.pi)))
