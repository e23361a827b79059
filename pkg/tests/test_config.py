import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from moldiss.config import (
    G0, GridSpec, PhysicalParams, RunConfig, ValidationError, derive, dump_config,
    load_config, paper_defaults, parse_assignments, validate,
)


def test_resonant_momentum_and_grid(defaults):
    d = defaults.derived
    assert d.k0 == pytest.approx(8.41e5, rel=5e-3)
    assert d.dx == pytest.approx(1.269e-6, rel=1e-3)
    assert d.dk == pytest.approx(9.666e3, rel=1e-3)
    assert d.k0 / (math.pi / d.dx) == pytest.approx(0.34, abs=0.01)


def test_initial_molecule_number(defaults):
    d = defaults.derived
    p = defaults.params
    assert d.N_m0 == pytest.approx(1.62e3, rel=5e-3)
    assert d.N_m0 == pytest.approx(p.n0 * p.sigma * math.sqrt(math.pi), rel=1e-3)
    assert d.total_number == 2 * d.N_m0


def test_g0_value():
    assert G0 == pytest.approx(2.04e-6, rel=5e-3)


def test_k_grid_map(defaults):
    d = defaults.derived
    m = len(d.k_grid)
    for j in (0, 1, m // 2 - 1, m // 2, m - 1):
        expect = (j if j < m // 2 else j - m) * d.dk
        assert d.k_of_index(j) == pytest.approx(expect)
        assert d.index_of_k(expect) == j


def test_delta_zero_limit():
    d = derive(PhysicalParams(delta=0.0), GridSpec())
    assert d.k0 == 0.0


@pytest.mark.parametrize("change,msg", [
    (dict(delta=258.0), "delta must be negative"),
    (dict(num_points=500), "num_points must be a power of two"),
    (dict(method="hfb", trajectories=5), "trajectories must be 1"),
])
def test_single_violations(change, msg):
    with pytest.raises(ValidationError) as exc:
        paper_defaults(**change)
    assert any(msg in p for p in exc.value.problems)


def test_all_violations_reported():
    with pytest.raises(ValidationError) as exc:
        validate(PhysicalParams(delta=1.0, n0=-1.0), GridSpec(num_points=500), RunConfig())
    probs = " ".join(exc.value.problems)
    for msg in ("delta", "n0", "power of two"):
        assert msg in probs


def test_nyquist_margin():
    with pytest.raises(ValidationError, match="0.7"):
        paper_defaults(num_points=128)


def test_deterministic_forces_one_trajectory(defaults):
    assert defaults.replace(method="hfb").run.trajectories == 1
    assert load_config(None, ["method=undepleted"]).run.trajectories == 1


def test_unknown_key_rejected():
    with pytest.raises(ValidationError, match="unknown key"):
        parse_assignments(["dleta = -258"])


def test_bad_value_reported():
    with pytest.raises(ValidationError, match="num_points"):
        parse_assignments(["num_points = 3.5"])


def test_config_file_roundtrip(tmp_path, defaults):
    cfg = defaults.replace(u_aa=G0, trajectories=17, snapshot_times=(0.01, 0.02))
    path = tmp_path / "c.conf"
    path.write_text("# comment line\n" + dump_config(cfg))
    again = load_config(path)
    assert again.as_dict() == cfg.as_dict()
    assert again.manifest_hash() == cfg.manifest_hash()


def test_unreadable_config(tmp_path):
    with pytest.raises(ValidationError, match="cannot read"):
        load_config(tmp_path / "missing.conf")


def test_overrides_apply_last(tmp_path):
    path = tmp_path / "c.conf"
    path.write_text("trajectories = 5\n")
    assert load_config(path, ["trajectories=7"]).run.trajectories == 7


@settings(max_examples=30, deadline=None)
@given(n0=st.floats(1e5, 1e8), sigma=st.floats(2e-5, 8e-5), delta=st.floats(-400, -1))
def test_derive_is_pure_and_consistent(n0, sigma, delta):
    p = PhysicalParams(n0=n0, sigma=sigma, delta=delta)
    a, b = derive(p, GridSpec()), derive(p, GridSpec())
    assert a.N_m0 == b.N_m0 and a.k0 == b.k0
    assert np.array_equal(a.k_grid, b.k_grid)
    assert a.N_m0 == pytest.approx(n0 * sigma * math.sqrt(math.pi), rel=1e-3)
