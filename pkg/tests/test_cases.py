import math

import numpy as np
import pytest
from scipy.integrate import quad

from kineticfv.cases import (
    CASES,
    DMR_LEFT,
    DMR_RIGHT,
    EXPLOSION_IN,
    EXPLOSION_OUT,
    GAMMA,
    LAX_LEFT,
    LAX_RIGHT,
    NACA_CHORD,
    CaseError,
    get_case,
    initial_field,
    naca_freestream,
    naca_ogrid,
    naca_surface,
    naca_thickness,
    pressure_coefficient,
    riemann_exact_euler,
    solve_riemann,
    support_check,
    vortex_exact,
    vortex_init,
)
from kineticfv.mesh import Rect
from kineticfv.velocity import conserved_moments


def pressure_state(prim):
    rho, u, v, th = prim
    return rho, u, rho * th


# --- vortex -----------------------------------------------------------------

def test_vortex_centre_and_far_field():
    centre = vortex_init(np.array([5.0, 5.0]))
    dT = -25 * math.e / (16 * math.pi ** 2)
    assert dT == pytest.approx(-0.4303, abs=1e-4)
    assert centre == pytest.approx([1 + dT, 1.0, 1.0, 1 + dT], abs=1e-14)   # gamma = 2: rho = T
    # perturbations decay like a Gaussian in the distance to the centre
    far = vortex_init(np.array([[0.0, 5.0], [5.0, 10.0], [0.2, 0.3]]))
    assert np.max(np.abs(far - 1.0)) <= 1e-4          # velocity decays like exp((1 - r^2) / 2)
    ring = vortex_init(np.array([[6.0, 5.0], [5.0, 7.0]]))
    assert np.all(np.abs(ring[:, 0] - 1.0) > np.abs(far[:, 0] - 1.0).max())


def test_vortex_exact_translates_with_wrap():
    x = np.array([[1.0, 2.0], [9.95, 0.02]])
    for t in (0.3, 10.0, 13.7):
        back = np.mod(x - t, 10.0)
        assert np.allclose(vortex_exact(x, t), vortex_init(back), atol=1e-14)
    assert np.allclose(vortex_exact(x, 10.0), vortex_init(x), atol=1e-12)


# --- Riemann ----------------------------------------------------------------

def test_riemann_constant_state():
    s = (0.7, 0.3, 0.0, 1.4)
    out = riemann_exact_euler(s, s, np.linspace(-5, 5, 11))
    assert np.allclose(out, s, atol=1e-12)


def test_riemann_symmetric_rarefaction():
    sol = solve_riemann((1.0, -0.5, 0.0, 1.0), (1.0, 0.5, 0.0, 1.0))
    assert abs(sol.sample(np.array([0.0]))[0, 1]) <= 1e-12
    prof = riemann_exact_euler((1.0, -0.5, 0.0, 1.0), (1.0, 0.5, 0.0, 1.0), np.array([-0.4, 0.4]))
    assert prof[0, 0] == pytest.approx(prof[1, 0], rel=1e-12)
    assert prof[0, 1] == pytest.approx(-prof[1, 1], rel=1e-12)


def test_riemann_rejects_vacuum_and_bad_input():
    with pytest.raises(CaseError):
        solve_riemann((1.0, -20.0, 0.0, 1.0), (1.0, 20.0, 0.0, 1.0))
    with pytest.raises(CaseError):
        solve_riemann((-1.0, 0.0, 0.0, 1.0), (1.0, 0.0, 0.0, 1.0))


def test_lax_exact_solution_values():
    sol = solve_riemann(LAX_LEFT, LAX_RIGHT)
    assert sol.p_star == pytest.approx(2.49751, rel=1e-5)
    assert sol.u_star == pytest.approx(1.35687, rel=1e-5)
    assert sol.star_density(-1) == pytest.approx(0.374414, rel=1e-5)
    assert sol.star_density(1) == pytest.approx(0.957548, rel=1e-5)
    w = sol.wave_speeds()
    assert w["right_shock"] == pytest.approx(2.83964, rel=1e-5)
    assert w["contact"] == pytest.approx(1.35687, rel=1e-5)
    assert w["left_head"] == pytest.approx(-3.28396, rel=1e-5)
    assert w["left_tail"] == pytest.approx(-2.29565, rel=1e-5)
    assert sol.rankine_hugoniot_residual() <= 1e-10


def test_dmr_states_are_a_mach_two_shock():
    sol = solve_riemann(DMR_LEFT, (2.0, 0.0, 0.0, 0.5))
    # the post-shock state drives the pre-shock gas: one right shock, no left wave
    assert sol.p_star == pytest.approx(DMR_LEFT[0] * DMR_LEFT[3], rel=1e-9)
    assert sol.wave_speeds()["right_shock"] == pytest.approx(2.0, rel=1e-9)
    c_right = math.sqrt(GAMMA * DMR_RIGHT[3])
    assert 2.0 / c_right == pytest.approx(2.0, rel=1e-12)


def hll_euler(left, right, n=4000, t_final=0.1, cfl=0.45, gamma=GAMMA):
    """First-order finite volumes with the HLL flux on [-1, 1]."""
    dx = 2.0 / n
    x = -1.0 + (np.arange(n) + 0.5) * dx

    def cons(rho, u, p):
        return np.stack([rho, rho * u, p / (gamma - 1) + 0.5 * rho * u * u])

    rl, ul, pl = pressure_state(left)
    rr, ur, pr = pressure_state(right)
    U = np.where(x < 0, cons(rl, ul, pl)[:, None], cons(rr, ur, pr)[:, None])
    t = 0.0
    while t < t_final - 1e-14:
        rho, mom, E = U
        u = mom / rho
        p = (gamma - 1) * (E - 0.5 * rho * u * u)
        c = np.sqrt(gamma * p / rho)
        dt = min(cfl * dx / np.max(np.abs(u) + c), t_final - t)
        Ue = np.concatenate([U[:, :1], U, U[:, -1:]], axis=1)
        ue = np.concatenate([u[:1], u, u[-1:]])
        pe = np.concatenate([p[:1], p, p[-1:]])
        ce = np.concatenate([c[:1], c, c[-1:]])
        F = np.stack([Ue[1], Ue[1] * ue + pe, (Ue[2] + pe) * ue])
        sl = np.minimum(ue[:-1] - ce[:-1], ue[1:] - ce[1:])
        sr = np.maximum(ue[:-1] + ce[:-1], ue[1:] + ce[1:])
        FL, FR, UL, UR = F[:, :-1], F[:, 1:], Ue[:, :-1], Ue[:, 1:]
        hll = (sr * FL - sl * FR + sl * sr * (UR - UL)) / (sr - sl)
        flux = np.where(sl >= 0, FL, np.where(sr <= 0, FR, hll))
        U = U - dt / dx * (flux[:, 1:] - flux[:, :-1])
        t += dt
    return x, U[0]


def test_lax_profile_against_finite_volume_oracle():
    x, rho = hll_euler(LAX_LEFT, LAX_RIGHT)
    sol = solve_riemann(LAX_LEFT, LAX_RIGHT)
    t = 0.1
    w = sol.wave_speeds()
    mid = 0.5 * (w["contact"] + w["right_shock"]) * t
    plateau = rho[np.abs(x - mid) < 0.02].mean()
    assert plateau == pytest.approx(sol.star_density(1), rel=5e-3)
    half = 0.5 * (sol.star_density(1) + LAX_RIGHT[0])
    right = x > mid
    cross = x[right][np.argmax(rho[right] < half)]
    assert cross == pytest.approx(w["right_shock"] * t, abs=0.01)
    exact = riemann_exact_euler(LAX_LEFT, LAX_RIGHT, x / t)[:, 0]
    assert np.mean(np.abs(exact - rho)) * 2.0 < 0.02


# --- NACA -------------------------------------------------------------------

def test_naca_profile():
    y = 0.594689181 * (0.298222773 * math.sqrt(0.5) - 0.127125232 * 0.5 - 0.357907906 * 0.25
                       + 0.291984971 * 0.125 - 0.105174606 * 0.0625)
    assert naca_thickness(0.5) == pytest.approx(y, rel=1e-15)
    assert naca_thickness(0.5) == pytest.approx(0.0521902, abs=1e-7)
    assert NACA_CHORD == 1.0 and abs(naca_thickness(1.0)) <= 1e-12
    assert naca_thickness(0.0) == 0.0
    xs = np.linspace(0.0, 0.3, 50)
    assert np.max(naca_thickness(xs)) == pytest.approx(0.06, abs=2e-3)   # 12 % thick
    surf = naca_surface(20)
    assert len(surf) == 40
    x, y = surf[:, 0], surf[:, 1]
    area = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
    assert area > 0


def test_naca_ogrid_symmetric_and_valid():
    mesh = naca_ogrid(40, 16, coarsen=2)
    assert np.all(mesh.area > 0)
    foil, _ = quad(naca_thickness, 0.0, 1.0)
    assert mesh.area.sum() == pytest.approx(100.0 - 2 * foil, abs=5e-3)
    key = np.round(mesh.barycenter, 10)
    mirrored = {tuple(p) for p in np.round(mesh.barycenter * [1, -1], 10)}
    assert all(tuple(p) in mirrored for p in key)
    tags = {mesh.tag_names[t] for t in mesh.face_tag[mesh.face_cells[:, 1] < 0]}
    assert tags == {"wall", "left", "right", "top", "bottom"}


def test_pressure_coefficient():
    free = naca_freestream(0.5)
    assert free == pytest.approx([1.0, 0.5, 0.0, 0.5])
    assert math.hypot(free[1], free[2]) / math.sqrt(GAMMA * free[3]) == pytest.approx(0.5)
    assert pressure_coefficient(0.5, free) == 0.0
    assert pressure_coefficient(0.5 + 0.125, free) == pytest.approx(1.0)
    with pytest.raises(CaseError):
        pressure_coefficient(1.0, (1.0, 0.0, 0.0, 1.0))
    rot = naca_freestream(0.5, 4.0)
    assert math.degrees(math.atan2(rot[2], rot[1])) == pytest.approx(4.0)


# --- case generators --------------------------------------------------------

def test_case_registry():
    assert set(CASES) == {"bkw", "vortex", "lax", "explosion", "dmr", "naca"}
    with pytest.raises(CaseError):
        get_case("sod")
    assert get_case("lax", nx=40).metadata["nx"] == 40


def test_lax_case_setup():
    spec = get_case("lax", nx=20, ny=2)
    mesh = spec.build_mesh()
    assert mesh.periodic == (False, True)
    assert {k: v.kind for k, v in spec.boundaries.items()} == {"left": "dirichlet", "right": "dirichlet"}
    assert spec.domain == Rect(-1.0, 1.0, -0.05, 0.05)
    assert (spec.velocity, spec.t_final) == ((-15.0, 15.0, 32), 0.1)
    full = get_case("lax").build_mesh()
    assert full.ncell == 4000


def test_explosion_case_setup():
    spec = get_case("explosion", n=10)
    assert spec.t_final == 0.07 and spec.velocity[:2] == (-20.0, 20.0)
    assert all(b.kind == "dirichlet" for b in spec.boundaries.values())
    pts = np.array([[0.49, 0.0], [0.0, -0.51], [0.3, 0.3]])
    assert np.allclose(spec.initial(pts), [EXPLOSION_IN, EXPLOSION_OUT, EXPLOSION_IN])


def test_dmr_and_naca_case_setup():
    dmr = get_case("dmr", nx=10, ny=4)
    assert dmr.velocity[:2] == (-10.0, 10.0)
    naca = get_case("naca", attack_deg=4.0)
    kinds = {k: v.kind for k, v in naca.boundaries.items()}
    assert kinds == {"left": "inflow", "bottom": "inflow", "right": "transmissive",
                     "top": "transmissive", "wall": "specular"}
    assert naca.velocity == (-10.0, 10.0, 32) and naca.t_final == 5.0


@pytest.mark.parametrize("name,kw", [("vortex", {}), ("lax", dict(nx=20, ny=2)), ("explosion", dict(n=10)),
                                     ("dmr", dict(nx=10, ny=4)), ("naca", dict(coarsen=10, rings=40))])
def test_support_check_passes(name, kw):
    spec = get_case(name, **kw)
    support_check(spec, spec.build_mesh())


def test_support_check_rejects_small_box():
    spec = get_case("lax", nx=20, ny=2)
    narrow = spec.with_overrides(velocity=(-8.0, 8.0, 32))
    with pytest.raises(CaseError, match="exceeds"):
        support_check(narrow, narrow.build_mesh())
    warnings = []
    support_check(spec, spec.build_mesh(), warnings.append)
    assert len(warnings) == 1
    support_check(spec.with_overrides(eps=0.0), spec.build_mesh(), warnings.append)
    assert len(warnings) == 1


@pytest.mark.parametrize("name,kw", [("vortex", dict(n=8)), ("lax", dict(nx=20, ny=2))])
def test_initial_field_reproduces_macroscopic_state(name, kw):
    spec = get_case(name, **kw)
    mesh = spec.build_mesh()
    grid = spec.grid()
    F = initial_field(spec, mesh, grid)
    prim = spec.initial(mesh.cell_qp)
    rho = prim[..., 0]
    cons = np.stack([rho, rho * prim[..., 1], rho * prim[..., 2],
                     rho * prim[..., 3] + 0.5 * rho * (prim[..., 1] ** 2 + prim[..., 2] ** 2)], axis=-1)
    target = np.einsum("iq,iqk->ik", mesh.cell_qw, cons) / mesh.area[:, None]
    assert np.max(np.abs(conserved_moments(F, grid) - target)) <= 1e-6 * np.max(np.abs(target))
