import textwrap

import pytest

from cmslab.config import ConfigError, load_config, load_system
from cmslab.presets import PRESETS

DECIMAL = """\
schema = 1
name = "decimal"
dim = 1

[run]
seed = 7
particles = 5000

[[vertices]]
id = "I"
region = "x1 >= 0 and x1 <= 1"
lower = [0.0]
upper = [1.0]
anchor = [0.0]
"""


def edges(n=10, to="I", prob="1/10", map_="x1/10 + {k}/10"):
    return "".join(textwrap.dedent(f"""
        [[edges]]
        id = "{k}"
        from = "I"
        to = "{to}"
        map = ["{map_.format(k=k)}"]
        prob = "{prob}"
        """) for k in range(n))


def write(tmp_path, text, name="sys.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_decimal(tmp_path):
    sys, run = load_config(write(tmp_path, DECIMAL + edges()))
    assert sys.graph.n_edges == 10 and sys.dim == 1
    assert run == {"seed": 7, "particles": 5000}


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_load(name):
    sys, run = load_system(preset=name)
    assert run == {} and sys.graph.n_edges >= 1


def test_dangling_vertex(tmp_path):
    with pytest.raises(ConfigError, match="'Z'") as exc:
        load_config(write(tmp_path, DECIMAL + edges(1, to="Z")))
    assert exc.value.path == "edges[0].to"


def test_expression_error_location(tmp_path):
    text = DECIMAL + edges(1, map_="x1/10 +* 2")
    with pytest.raises(ConfigError) as exc:
        load_config(write(tmp_path, text))
    err = exc.value
    line = text.splitlines()[err.line - 1]
    assert "x1/10 +* 2" in line
    assert line[err.offset - 1] == "*"
    assert f"sys.toml:{err.line}:{err.offset}" in str(err)


@pytest.mark.parametrize("mutate, path", [
    (lambda t: t.replace("schema = 1", "schema = 2"), "schema"),
    (lambda t: t.replace("dim = 1", 'dim = "one"'), "dim"),
    (lambda t: t.replace("lower = [0.0]", "lower = [0.0, 1.0]"), "vertices[0].lower"),
    (lambda t: t.replace("seed = 7", "sed = 7"), "run.sed"),
    (lambda t: t.replace('prob = "1/10"', "prob = 0.1", 1), "edges[0].prob"),
])
def test_schema_errors(tmp_path, mutate, path):
    with pytest.raises(ConfigError) as exc:
        load_config(write(tmp_path, mutate(DECIMAL + edges())))
    assert exc.value.path == path


def test_duplicate_vertex(tmp_path):
    text = DECIMAL.replace("[[vertices]]", "[[vertices]]\nid = \"I\"\nregion = \"x1 >= 0\"\n"
                           "lower = [0.0]\nupper = [1.0]\nanchor = [0.0]\n\n[[vertices]]", 1)
    with pytest.raises(ConfigError, match="duplicate"):
        load_config(write(tmp_path, text + edges()))


def test_toml_syntax_error(tmp_path):
    with pytest.raises(ConfigError, match="TOML"):
        load_config(write(tmp_path, "schema = = 1"))


def test_exactly_one_source():
    with pytest.raises(ConfigError):
        load_system()
    with pytest.raises(ConfigError, match="unknown preset"):
        load_system(preset="nope")
