import math

import numpy as np
import pytest

from kineticfv.cases import vortex_init
from kineticfv.cli import (
    FIELD_COLUMNS,
    ConfigError,
    ErrorReport,
    RunConfig,
    attach_orders,
    cell_error_norms,
    convergence_driver,
    main,
    make_spec,
    observed_order,
    parse_config,
    parse_config_text,
    run,
    space_error_norms,
    step_count,
    velocity_error_norms,
)
from kineticfv.velocity import build_grid, maxwellian

TINY_VORTEX = "case = vortex\nmesh_size = 5\nt_final = 0.004\nn_axis = 16\nvelocity_bound = 8\n"


# --- configuration ----------------------------------------------------------

def test_parse_lax_defaults(tmp_path):
    path = tmp_path / "lax.cfg"
    path.write_text("# shock tube\ncase = lax   # trailing comment\n\n")
    spec = make_spec(parse_config(path))
    assert spec.name == "lax" and spec.eps == 5e-5 and spec.order == 3
    assert spec.velocity == (-15.0, 15.0, 32)


def test_parse_overrides():
    cfg = parse_config_text("case = lax\nepsilon = 5e-4\n")
    assert make_spec(cfg).eps == 5e-4
    cfg = parse_config_text("case = vortex\ntableau = BPR343\norder = 3\n")
    spec = make_spec(cfg)
    assert (spec.tableau, spec.order, spec.degree) == ("BPR343", 3, 2)
    cfg = parse_config_text("case = lax\nmesh_size = 40\nvelocity_bound = 12\n")
    spec = make_spec(cfg)
    assert spec.metadata["nx"] == 40 and spec.velocity == (-12.0, 12.0, 32)


@pytest.mark.parametrize("text,fragment", [
    ("case = lax\nfoo = 1\n", ":2: unknown key 'foo'"),
    ("case = lax\n\norder = three\n", ":3: invalid value 'three'"),
    ("case = lax\nepsilon\n", ":2: expected 'key = value'"),
    ("case = lax\ncase = dmr\n", ":2: duplicate key"),
    ("case = lax\norder =\n", ":2: missing value"),
    ("epsilon = 1\n", "missing required key 'case'"),
    ("case = sod\n", "unknown case"),
    ("case = lax\norder = 4\n", "order must be"),
    ("case = lax\ntableau = RK3\n", "unknown tableau"),
    ("case = lax\nepsilon = -1\n", "non-negative"),
    ("case = lax\nt_final = 0\n", "t_final must be positive"),
    ("case = lax\namplitude = 0.1\n", "does not accept"),
    ("case = bkw\nmesh_size = 3\n", "has no mesh size"),
])
def test_parse_errors_carry_location(text, fragment):
    with pytest.raises(ConfigError) as info:
        parse_config_text(text, "run.cfg")
    assert fragment in str(info.value)
    assert str(info.value).startswith("run.cfg")


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="does not exist"):
        parse_config(tmp_path / "nope.cfg")


# --- norms ------------------------------------------------------------------

def test_velocity_norms():
    g = build_grid(-6, 6, 16)
    f = maxwellian(np.array([1.0, 0.3, 0.0, 1.2]), g)
    h = maxwellian(np.array([1.0, 0.2, 0.1, 1.0]), g)
    assert velocity_error_norms(f, f, g) == 0.0
    for p in (1, 2):
        e = velocity_error_norms(h, f, g, p)
        assert velocity_error_norms(3.7 * h, 3.7 * f, g, p) == pytest.approx(e, rel=1e-13)
        assert e == pytest.approx(np.sum(np.abs(h - f) ** p) ** (1 / p) / np.sum(f ** p) ** (1 / p), rel=1e-13)
    assert velocity_error_norms(h, f, g, np.inf) == np.max(np.abs(h - f))
    with pytest.warns(RuntimeWarning):
        assert velocity_error_norms(f, 0 * f, g) == pytest.approx(np.sum(f))
    with pytest.raises(ValueError):
        velocity_error_norms(f[:-1], f[:-1], g)


def test_space_norms(periodic_tris):
    mesh = periodic_tris
    ref = lambda x: np.tile([1.0, 0.0, 0.0, 1.0], (len(x), 1))  # noqa: E731
    U = np.tile([1.0, 0.0, 0.0, 1.0], (mesh.ncell, 1))
    assert space_error_norms(U, ref, mesh) == {"rho": 0.0, "T": 0.0}
    c = 0.125
    U = np.tile([1.0 + c, 0.0, 0.0, 1.0 + c], (mesh.ncell, 1))
    out = space_error_norms(U, ref, mesh, 1)
    assert out["rho"] == pytest.approx(c * 4.0, rel=1e-12)
    assert out["T"] == pytest.approx(0.0, abs=1e-14)
    assert space_error_norms(U, ref, mesh, 2)["rho"] == pytest.approx(c * 2.0, rel=1e-12)
    assert space_error_norms(U, ref, mesh, np.inf)["rho"] == pytest.approx(c)
    assert cell_error_norms(np.ones(3), np.zeros(3), np.array([0.5, 0.25, 0.25])) == pytest.approx(1.0)


def test_orders_recomputed_from_errors():
    rows = [ErrorReport("L1", "rho", 0.08, 0.4), ErrorReport("L1", "T", 0.3, 0.4),
            ErrorReport("L1", "rho", 0.02, 0.2), ErrorReport("L1", "T", 0.1, 0.2),
            ErrorReport("L1", "rho", 0.006, 0.1)]
    out = attach_orders(rows)
    assert out[0].order is None and out[1].order is None
    assert out[2].order == math.log(0.08 / 0.02) / math.log(2.0)
    assert out[3].order == pytest.approx(math.log(3.0) / math.log(2.0), rel=1e-15)
    assert out[4].order == observed_order(0.02, 0.006, 0.2, 0.1)


def test_first_order_synthetic_harness():
    """Forward Euler on y' = t has global error exactly T dt / 2."""
    T = 1.0
    rows = []
    for n in (10, 20, 40, 80):
        dt = T / n
        y = sum(k * dt * dt for k in range(n))
        rows.append(ErrorReport("L1", "y", abs(0.5 * T * T - y), dt))
    orders = [r.order for r in attach_orders(rows)[1:]]
    assert orders == pytest.approx([1.0, 1.0, 1.0], abs=1e-10)


def test_step_count():
    assert step_count(0.1, 0.03) == (4, pytest.approx(0.025))
    n, dt = step_count(9e-3, 9e-4)
    assert n == 10 and n * dt == pytest.approx(9e-3, rel=1e-15)


# --- runs -------------------------------------------------------------------

def test_bkw_run_report(tmp_path):
    res = run(RunConfig("bkw", n_axis=32, output_dir=str(tmp_path)))
    names = [r.norm for r in res.reports]
    assert names == ["L1", "L2", "Linf"]
    assert 1.183e-3 / 10 <= res.reports[0].value <= 1.183e-3 * 10
    assert "L1" in (tmp_path / "report.txt").read_text()


@pytest.fixture(scope="module")
def tiny_runs(tmp_path_factory):
    base = parse_config_text(TINY_VORTEX)
    out = {}
    for label, kw in (("a", {}), ("b", {}), ("w2", {"workers": 2})):
        d = tmp_path_factory.mktemp(label)
        out[label] = (d, run(base.replace(output_dir=str(d), epsilon=0.05, **kw)))
    return out


def test_run_outputs(tiny_runs):
    d, res = tiny_runs["a"]
    header = (d / "vortex_final.csv").read_text().splitlines()[0]
    assert header.split(",") == list(FIELD_COLUMNS)
    assert (d / "run.log").read_text().startswith("# case=vortex")
    assert {r.variable for r in res.reports} == {"rho", "T"}
    assert res.fields.shape == (res.mesh.ncell, len(FIELD_COLUMNS))
    assert res.state.t == pytest.approx(0.004, rel=1e-13)


def test_run_is_deterministic(tiny_runs):
    a = (tiny_runs["a"][0] / "vortex_final.csv").read_bytes()
    b = (tiny_runs["b"][0] / "vortex_final.csv").read_bytes()
    assert a == b


def test_worker_count_independence(tiny_runs):
    a = np.loadtxt(tiny_runs["a"][0] / "vortex_final.csv", delimiter=",", skiprows=1)
    b = np.loadtxt(tiny_runs["w2"][0] / "vortex_final.csv", delimiter=",", skiprows=1)
    assert np.max(np.abs(a - b)) <= 1e-12


def test_vtk_output(tmp_path):
    cfg = parse_config_text(TINY_VORTEX + "output_format = vtk\nmodel = bgk\n")
    res = run(cfg.replace(output_dir=str(tmp_path)))
    text = (tmp_path / "vortex_final.vtk").read_text().splitlines()
    assert text[0] == "# vtk DataFile Version 3.0" and text[3] == "DATASET UNSTRUCTURED_GRID"
    nc = res.mesh.ncell
    assert f"CELL_DATA {nc}" in text and f"CELL_TYPES {nc}" in text
    i = text.index("SCALARS rho double 1")
    rho = np.array(text[i + 2:i + 2 + nc], dtype=float)
    assert np.array_equal(rho, res.fields[:, 3])


def test_convergence_driver_needs_three_levels():
    with pytest.raises(ValueError):
        convergence_driver(RunConfig("vortex"), [4, 8])
    with pytest.raises(ValueError):
        convergence_driver(RunConfig("vortex"), [4, 8, 16], mode="space-only")


def test_time_only_driver_small():
    cfg = parse_config_text(TINY_VORTEX + "model = bgk\nepsilon = 1\norder = 2\nmesh_kind = triangle\n")
    cfg = cfg.replace(t_final=0.02)
    table = convergence_driver(cfg, [0.01, 0.005, 0.0025], mode="time-only", variables=("rho",))
    orders = table.orders("L1", "rho")
    assert len(orders) == 2 and all(o > 1.5 for o in orders)
    assert table.monotone


def test_vortex_reference_matches_initial_state():
    x = np.array([[5.0, 5.0], [1.0, 9.0]])
    spec = make_spec(parse_config_text("case = vortex\n"))
    assert np.allclose(spec.reference(x, 0.0), vortex_init(x))


# --- command line -----------------------------------------------------------

def test_main_exit_codes(tmp_path, capsys):
    good = tmp_path / "ok.cfg"
    good.write_text("case = bkw\nn_axis = 16\n")
    assert main(["solve", str(good)]) == 0
    assert "bkw" in capsys.readouterr().out
    bad = tmp_path / "bad.cfg"
    bad.write_text("case = bkw\nspeed = 3\n")
    assert main(["solve", str(bad)]) == 2
    assert ":2: unknown key" in capsys.readouterr().err
    assert main(["solve", str(tmp_path / "missing.cfg")]) == 2
    assert main(["converge", str(good), "--levels", "4", "8"]) == 2
    with pytest.raises(SystemExit):
        main(["frobnicate"])
