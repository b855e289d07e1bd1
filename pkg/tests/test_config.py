import json

import pytest

from drprice.config import ExperimentConfig, deep_merge, from_dict, load_config
from drprice.errors import ConfigError


def test_defaults_match_experiment_constants():
    c = from_dict({})
    assert (c.consumer.alpha, c.consumer.beta, c.consumer.kappa) == (0.5, 1.0, 10.0)
    assert c.consumer.x_des == 18.0 and c.consumer.population == 100
    assert c.markov.transition_prob == 0.25 and c.markov.scale == 1.5
    assert [p.kind for p in c.policies] == ["pwlsa", "greedy"]


@pytest.mark.parametrize("data, path", [
    ({"horizon_days": 0}, "horizon_days"),
    ({"num_runs": 2.5}, "num_runs"),
    ({"scenario": "drift"}, "scenario"),
    ({"consumer": {"alpha": 1.0}}, "consumer.alpha"),
    ({"consumer": {"beta": -1}}, "consumer.beta"),
    ({"consumer": {"colour": 1}}, "consumer.colour"),
    ({"market": {"mode": "kmeans"}}, "market.mode"),
    ({"market": []}, "market"),
    ({"demand": {"source": "file"}}, "demand.path"),
    ({"demand": {"source": "consumer", "path": "m.txt"}}, "demand.path"),
    ({"demand": {"source": "inline", "A": [[1]], "b": [1], "sigma": 1, "sigma_w": [[1]]}}, "demand.sigma_w"),
    ({"markov": {"transition_prob": 1.2}}, "markov.transition_prob"),
    ({"dispatch": [[1, 2], [1]]}, "dispatch"),
    ({"policies": []}, "policies"),
    ({"policies": [{"kind": "bandit"}]}, "policies[0].kind"),
    ({"policies": [{"kind": "greedy", "guard": "no"}]}, "policies[0].guard"),
    ({"policies": ["pwlsa", "pwlsa"]}, "policies"),
    ({"policies": [{"kind": "pwlsa", "gamma": -1}]}, "policies[0].gamma"),
    ({"bogus": 1}, "bogus"),
])
def test_rejections_name_field(data, path):
    with pytest.raises(ConfigError) as err:
        from_dict(data)
    assert str(err.value).startswith(path)


def test_hash_ignores_execution_fields():
    a = from_dict({"output_dir": "x", "workers": 1})
    b = from_dict({"output_dir": "y", "workers": 4})
    assert a.content_hash() == b.content_hash()
    assert a.content_hash() != from_dict({"master_seed": 1}).content_hash()


def test_round_trip_through_dict():
    c = from_dict({"policies": [{"kind": "pwlsa", "gamma": 0.3, "label": "p"}], "market": {"levels": 3}})
    again = from_dict(c.to_dict())
    assert again.canonical_json() == c.canonical_json()
    assert isinstance(again, ExperimentConfig)


def test_load_and_merge(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"market": {"levels": 3}}))
    merged = deep_merge({"market": {"levels": 1, "mode": "raw"}, "num_runs": 5}, load_config(p))
    assert merged == {"market": {"levels": 3, "mode": "raw"}, "num_runs": 5}
    p.write_text("{nope")
    with pytest.raises(ConfigError):
        load_config(p)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
