import warnings

import numpy as np
import pytest

from wpsim.config import exponent_warnings, parse_config
from wpsim.errors import ConfigError


def write(tmp_path, text, name="run.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_minimal_config_gets_defaults(tmp_path):
    cfg = parse_config(write(tmp_path, "grid: {nodes: [17]}\n"))
    assert cfg.grid.nodes == (17,) and cfg.grid.dim == 1
    assert cfg.j == 0 and cfg.ell == 0
    assert cfg.stepper.scheme == "trapezoidal" and cfg.stepper.m_min == 1e-6
    assert cfg.exponents == (2.0, 2.0, 2.0, 2.0)
    assert cfg.experiment == "simulate" and cfg.warnings == []
    prob = cfg.build()
    np.testing.assert_array_equal(prob.s0.theta, 1.0)
    np.testing.assert_array_equal(prob.s0.u, 0.0)


def test_no_file_uses_defaults_and_missing_file_errors(tmp_path):
    assert parse_config().grid.nodes == (65,)
    with pytest.raises(ConfigError) as info:
        parse_config(tmp_path / "nope.yaml")
    assert info.value.key == "config"


def test_b_equal_theta_rejected(tmp_path):
    text = "coefficients:\n  b: {kind: affine, a: 0, b: 1}\n  theta_range: [0, 2]\n"
    with pytest.raises(ConfigError, match=r"b\(theta\) >= b0 > 0") as info:
        parse_config(write(tmp_path, text))
    assert info.value.key == "coefficients.b"


def test_theta_range_defaults_to_data(tmp_path):
    # b = theta - 0.5 is positive on the range spanned by theta_a = 1 and theta0 in [1, 1.2]
    text = "coefficients:\n  b: {kind: affine, a: -0.5, b: 1}\ninitial:\n  theta0: '1 + 0.2*sin(x)'\n"
    cfg = parse_config(write(tmp_path, text))
    lo, hi = cfg.raw["coefficients"]["theta_range"]
    assert lo == pytest.approx(1.0) and hi == pytest.approx(1.2, rel=1e-6)


def test_exponent_constraint_warnings():
    notes = exponent_warnings((2.0, 1.2, 2.0, 2.0), d=3, j=0, ell=0)
    assert any("d/q < 2" in n for n in notes)
    notes = exponent_warnings((2.0, 2.0, 2.0, 2.0), d=2, j=0, ell=0)
    assert notes == ["exponents.r,s: constraint 2/r + d/s < 2 violated (d=2, r=2.0, s=2.0)"]
    assert exponent_warnings((2.0, 2.0, 4.0, 4.0), d=1, j=0, ell=0) == []


def test_exponent_warning_emitted_by_parse(tmp_path):
    text = "grid: {bounds: [[0, 1], [0, 1]], nodes: [9, 9]}\n"
    with pytest.warns(UserWarning, match="2/r \\+ d/s < 2"):
        cfg = parse_config(write(tmp_path, text))
    assert cfg.warnings
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        parse_config(write(tmp_path, text), experiment="equilibrium")


@pytest.mark.parametrize("text,key", [
    ("exponents: {q: 0.5}\n", "exponents.q"),
    ("stepr: {dt: 1}\n", "stepr"),
    ("stepper: {dtt: 1}\n", "stepper.dtt"),
    ("stepper: {dt: -1}\n", "stepper.dt"),
    ("stepper: {m_min: 2}\n", "stepper.m_min"),
    ("physical: {kappa_a: 0}\n", "physical.kappa_a"),
    ("boundary: {j: 2}\n", "boundary"),
    ("boundary: {g: 'import os'}\n", "boundary.g"),
    ("coefficients: {c: {kind: cubic}}\n", "coefficients.c.kind"),
    ("coefficients: {k: {kind: table, path: missing.csv}}\n", "coefficients.k.path"),
    ("experiment: dance\n", "experiment"),
    ("source: {kind: custom-table, table: {v: [-1, 1], Q: [1, 1]}}\n", "source.table"),
    ("initial: {u0: {mode: 0}}\n", "initial.u0.mode"),
    ("grid: {nodes: [2]}\n", "grid"),
    (": [\n", "config"),
])
def test_invalid_configs_name_key(tmp_path, text, key):
    with pytest.raises(ConfigError) as info:
        parse_config(write(tmp_path, text))
    assert info.value.key == key


def test_positive_source_allowed_for_equilibrium(tmp_path):
    text = "boundary: {ell: 1}\nsource: {kind: custom-table, table: {v: [-1, 1], Q: [0.2, 0.2]}}\n"
    cfg = parse_config(write(tmp_path, text), experiment="equilibrium")
    assert cfg.model.source.q0 == pytest.approx(0.2)


def test_table_coefficient_and_mode_initial(tmp_path):
    (tmp_path / "k.csv").write_text("theta,k\n0,0.1\n5,0.6\n")
    text = ("coefficients:\n  k: {kind: table, path: k.csv}\n"
            "initial:\n  u0: {mode: 2, amplitude: 0.01}\n  u1: {random: 3, amplitude: 0.02}\n")
    cfg = parse_config(write(tmp_path, text))
    assert cfg.model.coeffs.k(np.array([2.5]))[0] == pytest.approx(0.35)
    prob = cfg.build()
    w = prob.grid.weights
    assert np.sqrt(np.sum(w * prob.s0.u**2)) == pytest.approx(0.01)
    assert np.sqrt(np.sum(w * prob.s0.v**2)) == pytest.approx(0.02)
    again = parse_config(write(tmp_path, text)).build()
    np.testing.assert_array_equal(again.s0.v, prob.s0.v)
    other = parse_config(write(tmp_path, text + "seed: 5\n")).build()
    assert not np.allclose(other.s0.v, prob.s0.v)


def test_boundary_expressions_compiled(tmp_path):
    text = "boundary: {g: '0.1*sin(t)', h: 'theta_a + t'}\nphysical: {theta_a: 2.0}\n"
    bc = parse_config(write(tmp_path, text)).boundary()
    assert bc.g(0.5)[0] == pytest.approx(0.1 * np.sin(0.5))
    assert bc.g_t(0.5)[0] == pytest.approx(0.1 * np.cos(0.5))
    assert bc.h(1.0)[-1] == pytest.approx(3.0)
