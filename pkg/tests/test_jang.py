import numpy as np
import pytest

from bondimass.characteristic import NewsData
from bondimass.hyperbolic_mass import modified_aspect_at
from bondimass.jang import (
    JangFunction,
    adm_energy,
    check_jang_expansion,
    fit_jang,
    jang_from_geometry,
    jang_residual,
    laplacian_S2,
)
from bondimass.slice_geometry import BondiMetricModel, GraphSlice, sample_directions, slice_geometry
from bondimass.sphere import make_grid
from helpers import constant_aspect_M0, random_initial, random_news

FLAT = GraphSlice()


def constant_aspect_model(seed, value=1.0):
    rng = np.random.default_rng(seed)
    news = NewsData(*random_news(rng))
    init = random_initial(rng)
    init["M0"] = constant_aspect_M0(news, value)
    return BondiMetricModel(news, **init)


@pytest.fixture(scope="module")
def grid():
    return make_grid(12, 24)


# ---------------------------------------------------------------------------
# sphere Laplacian

@pytest.mark.parametrize("p, expected", [
    ("2.5", lambda t, s: 0 * t),
    ("cos(theta)", lambda t, s: -2 * np.cos(t)),
    ("sin(theta)*cos(psi)", lambda t, s: -2 * np.sin(t) * np.cos(s)),
    ("3*cos(theta)^2 - 1", lambda t, s: -6 * (3 * np.cos(t) ** 2 - 1)),
])
def test_laplacian_examples(p, expected):
    th, ps = np.linspace(0.2, 2.9, 7), np.linspace(0, 6, 7)
    np.testing.assert_allclose(laplacian_S2(p, th, ps), expected(th, ps), atol=1e-13)


# ---------------------------------------------------------------------------
# J(f)

def test_hyperbolic_slice_solves_jang():
    r = np.geomspace(10, 1e5, 9)
    J = jang_residual(BondiMetricModel.from_strings(), FLAT, JangFunction("0"), r, 1.1, 0.4)
    assert np.max(np.abs(J)) < 1e-10


def test_translation_invariance():
    model = constant_aspect_model(1)
    th, ps = sample_directions(5, seed=7)
    geo = slice_geometry(model, FLAT, np.full(5, 80.0), th, ps)
    jf = JangFunction("1 + 0.3*cos(theta)")
    J0, _ = jang_from_geometry(geo, jf)
    J1, _ = jang_from_geometry(geo, jf, shift=3.7)
    assert np.max(np.abs(J1 - J0)) < 1e-10


def test_trace_factor_positive_definite():
    model = constant_aspect_model(2)
    th, ps = sample_directions(6, seed=1)
    r = np.geomspace(20, 2000, 5)[:, None] * np.ones_like(th)
    geo = slice_geometry(model, GraphSlice("0.1*cos(theta)"), r, th * np.ones_like(r), ps * np.ones_like(r))
    _, trace = jang_from_geometry(geo, JangFunction("2 + 0.5*sin(theta)*cos(psi)"))
    assert np.min(np.linalg.eigvalsh(trace.astype(float))) > 0


def test_constant_aspect_with_matching_p():
    model = constant_aspect_model(3, value=0.8)
    th, ps = sample_directions(6, seed=3)
    fit = fit_jang(model, FLAT, JangFunction("1.6"), th, ps)
    assert np.max(np.abs(fit[(3, 1)])) < 1e-6
    assert np.max(np.abs(fit[(3, 0)])) < 1e-6


@pytest.mark.parametrize("seed, p", [
    (4, "1 + 0.3*cos(theta)"),
    (5, "0.5 + 0.2*sin(theta)*sin(psi) + 0.1*cos(theta)^2"),
])
def test_generic_p_expansion(seed, p):
    rng = np.random.default_rng(seed)
    model = BondiMetricModel(NewsData(*random_news(rng)), **random_initial(rng))
    th, ps = sample_directions(6, seed=seed)
    rep = check_jang_expansion(model, GraphSlice("0.1*cos(theta)"), JangFunction(p), th, ps)
    assert rep.passed, rep.as_dict()


def test_nonconstant_p_gives_nonzero_leading_terms():
    # contrapositive of the rigidity statement
    model = constant_aspect_model(6)
    th, ps = sample_directions(4, seed=6)
    fit = fit_jang(model, FLAT, JangFunction("2 + 0.4*cos(theta)"), th, ps)
    assert np.min(np.abs(fit[(3, 1)])) > 1e-3


@pytest.mark.parametrize("seed, p", [(9, "2 + 0.5*sin(theta)*cos(psi)"), (12, "0.1 + 0.03*cos(theta)")])
def test_leading_terms_dominate_remainder(seed, p):
    # sup over directions at each radius; pointwise the leading term has zeros
    rng = np.random.default_rng(seed)
    model = BondiMetricModel(NewsData(*random_news(rng)), **random_initial(rng))
    jf = JangFunction(p)
    th, ps = sample_directions(8, seed=seed)
    R = np.geomspace(50, 2000, 12)[:, None] * np.ones_like(th)
    J = jang_residual(model, FLAT, jf, R, th * np.ones_like(R), ps * np.ones_like(R)).astype(float)
    lead = (np.log(R) * laplacian_S2(jf.p, th, ps) + jf.p(0, th, ps) - 2 * modified_aspect_at(model, th, ps)) / R**3
    ratio = np.max(np.abs(J - lead), axis=1) / np.max(np.abs(lead), axis=1)
    assert np.all(ratio < 0.1), ratio


# ---------------------------------------------------------------------------
# ADM energy of the Jang graph

def test_adm_zero(grid):
    res = adm_energy(BondiMetricModel.from_strings(), FLAT, JangFunction("0"), grid)
    assert not res.divergent and abs(res.energy) < 1e-10


@pytest.mark.parametrize("p0", [0.5, 1.0, 2.0])
def test_adm_constant_p(grid, p0):
    model = constant_aspect_model(10, value=p0 / 2)
    res = adm_energy(model, FLAT, JangFunction(str(p0)), grid)
    assert res.energy == pytest.approx(p0, abs=1e-3)


def test_adm_integrand_moments(grid):
    # ln r/r^2 monopole: mean of Lap p, zero; 1/r^2 monopole: (1/16 pi) int 4p = mean of p
    model = constant_aspect_model(11)
    res = adm_energy(model, FLAT, JangFunction("1 + 0.3*cos(theta)^2"), grid)
    assert abs(res.log_moment) < 1e-8
    assert res.energy == pytest.approx(1.1, abs=1e-6)
    assert "energy" in res.as_dict()
