import textwrap

import numpy as np
import pytest

from fracpara import ConfigError, load_scenario
from fracpara.scenario import DEFAULT_TOLERANCES, PRESETS


def write(tmp_path, body):
    path = tmp_path / "scenario.toml"
    path.write_text(textwrap.dedent(body))
    return path


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_validate(name):
    sc = load_scenario(preset=name)
    g = sc.grid(0)
    assert sc.grid(1).spec.Nx == 2 * g.spec.Nx
    sigma = sc.sigma(g)
    masks = sc.masks(g)
    assert sigma.identity_outside(masks.omega)
    for f in sc.bumps(g):
        assert not f.values[:, ~masks.w_set].any()
    assert sc.tolerances == DEFAULT_TOLERANCES


def test_file_overrides_preset(tmp_path):
    path = write(tmp_path, """
        scenario = "default1d"
        [grid]
        Nx = 32
        [sigma]
        kind = "constant"
        matrix = [[2.0]]
        [fractional]
        s = 0.4
        [checks]
        key_equation = 0.01
        disable = ["u_v_relation"]
    """)
    sc = load_scenario(path)
    assert sc.spec.Nx == 32 and sc.spec.Nt == 64
    assert sc.s_values == [0.4]
    assert sc.tolerances["key_equation"] == 0.01
    assert not sc.enabled("u_v_relation")
    np.testing.assert_allclose(sc.sigma(sc.grid(0)).values[..., 0, 0], 2.0)
    assert load_scenario(path, s_override=0.7).s_values == [0.7]


@pytest.mark.parametrize("body,field,line", [
    ("[grid]\nNx = 'many'\n", "[grid].Nx", 2),
    ("[grid]\nn = 1\n\n[fractional]\ns = [0.5, 1.5]\n", "[fractional].s", 5),
    ("[sigma]\nkind = 'constant'\nmatrix = [[1.0, 2.0]]\n", "[sigma].matrix", 3),
    ("[sigma]\nkind = 'constant'\nmatrix = [[-1.0]]\n", "[sigma].matrix", 3),
    ("[masks]\nomega = [[1.0, -1.0]]\n", "[masks].omega", 2),
    ("[masks]\nw = [[0.5, 3.0]]\n", "[masks]", 1),
    ("[checks]\nfoo = 1.0\n", "[checks].foo", 2),
    ("[checks]\ntransfer = -1.0\n", "[checks].transfer", 2),
    ("[extra]\nx = 1\n", "[extra]", 1),
    ("[masks]\nbumps = [{center = [0.0], radius = 0.3, time = 0.0, duration = 0.5}]\n", "[masks].bumps", 2),
    ("[grid]\nNx = 2\n", "[grid]", 1),
])
def test_invalid_fields_are_located(tmp_path, body, field, line):
    with pytest.raises(ConfigError) as info:
        load_scenario(write(tmp_path, body))
    assert info.value.field_name == field
    assert info.value.line == line
    assert field in str(info.value)


def test_malformed_toml_reports_line(tmp_path):
    with pytest.raises(ConfigError) as info:
        load_scenario(write(tmp_path, "[grid]\nNx = 64\nNt = = 3\n"))
    assert info.value.line == 3


def test_unknown_preset_and_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_scenario(preset="default3d")
    with pytest.raises(ConfigError):
        load_scenario(tmp_path / "absent.toml")
    with pytest.raises(ConfigError):
        load_scenario(preset="default1d", s_override=1.2)
