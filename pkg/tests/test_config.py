import copy

import pytest
import yaml

from kinefp.config import RunConfig, load_config, parse_config
from kinefp.core import ConfigError

BASE = {
    "params": {"gamma": 0.5, "k": 1.0, "sigma": 0.5, "d": 1.0, "eta": 0.5, "alpha1": 1.0, "c_R": 1.0,
               "d1": 0.5, "gamma1": 1.0, "q1": 1.0, "delta": 1.0, "v_max": 2.0},
    "grid": {"nx": 32, "nv": 32, "nt": 20, "t_final": 0.3},
}


def tree(**edits):
    t = copy.deepcopy(BASE)
    for path, value in edits.items():
        *head, last = path.split("__")
        node = t
        for h in head:
            node = node.setdefault(h, {})
        if value is None:
            node.pop(last)
        else:
            node[last] = value
    return t


def test_defaults_fill_in():
    cfg = parse_config(tree())
    assert cfg.params.dim == 1 and cfg.params.flux_mode == "cutoff"
    assert cfg.grid.nx == 32 and cfg.grid.x_extent == 4.0
    assert cfg.scheme.variant == "A" and cfg.snapshots == 10
    assert cfg.rho_spec.center == (1.0,)


@pytest.mark.parametrize("edits, where", [
    ({"params__sigma": None}, "params.sigma: missing required field 'sigma'"),
    ({"params__bogus": 1.0}, "params.bogus: unknown field"),
    ({"scheme__variant": "C"}, "scheme.variant"),
    ({"params__k": "one"}, "params.k: expected a number"),
    ({"grid__nx": 32.5}, "grid.nx: expected an integer"),
    ({"initial__p0__x_width": -1.0}, "initial.p0.x_width"),
    ({"initial__c0__background": -1.0}, "initial.c0.background"),
    ({"initial__p0__x_center": [0.0, 1.0]}, "initial.p0.x_center"),
    ({"output__plots": "yes"}, "output.plots"),
    ({"output__snapshots": 0}, "output.snapshots"),
    ({"seed": 1.5}, "seed"),
    ({"params__flux_mode": "sharp"}, "params."),
    ({"params__sigma": -0.5}, "params.sigma"),
])
def test_rejections_name_the_field(edits, where):
    with pytest.raises(ConfigError) as exc:
        parse_config(tree(**edits))
    assert where in str(exc.value)


def test_root_must_be_mapping():
    with pytest.raises(ConfigError):
        parse_config([1, 2])
    with pytest.raises(ConfigError, match="params"):
        parse_config({"grid": {}})


def test_hash_is_stable_and_sensitive():
    a, b = parse_config(tree()), parse_config(tree())
    assert a.hash == b.hash and len(a.hash) == 64
    assert parse_config(tree(params__k=1.1)).hash != a.hash
    # explicit defaults hash like omitted ones
    assert parse_config(tree(scheme__variant="A", grid__x_extent=4.0)).hash == a.hash


def test_with_field_coerces_and_validates():
    cfg = parse_config(tree())
    assert cfg.with_field("nt", 40.0).grid.nt == 40
    assert cfg.with_field("alpha1", 2).params.alpha1 == 2.0
    with pytest.raises(ConfigError):
        cfg.with_field("nt", 40.5)
    with pytest.raises(ConfigError):
        cfg.with_field("colour", 1.0)
    with pytest.raises(ConfigError):
        cfg.with_field("sigma", -1.0)


def test_load_from_file(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump(tree()))
    assert isinstance(load_config(path), RunConfig)
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("params: [unclosed")
    with pytest.raises(ConfigError, match="YAML"):
        load_config(bad)


def test_shipped_config_parses():
    from pathlib import Path
    cfg = load_config(Path(__file__).parents[1] / "scripts" / "configs" / "baseline_1d.yaml")
    assert cfg.plots and cfg.scheme.beta == 3.0
