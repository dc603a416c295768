import textwrap

import pytest
from hypothesis import given
from hypothesis import strategies as st

from awrascle.config import ConfigError, expand_sweep, load_config, parse_config

MINIMAL = "gamma = 2\ngrid = 64\ndt = 1e-3\nt_end = 0.5\n"


def cfg(text):
    return parse_config(textwrap.dedent(text))


def test_minimal_defaults():
    c = parse_config(MINIMAL)
    p = c.params
    assert (p.epsilon, p.delta, p.kappa) == (0.0, 0.0, 0.0)
    assert p.n_modes == 21 and p.dim == 2
    assert p.rho_floor == 1e-8 and p.picard_tol == 1e-9 and p.picard_max_iter == 50
    assert p.lp_moments == (2.0, 4.0)
    assert (c.initial, c.seed, c.cadence, c.directory, c.snapshot_every) == ("constant", 0, 1, "out", 0)
    assert c.sweep == () and not c.n_modes_explicit


def test_full_sections():
    c = cfg(
        """
        # full example
        [model]
        gamma = 1.5
        delta = 1e-2   # trailing comment
        [grid]
        grid_points = 32
        n = 8
        dim = 1
        [time]
        dt = 1e-3
        t_end = 0.1
        [initial]
        name = gaussian_blob
        width = 0.08
        velocity = (0.3,)
        seed = 4
        [output]
        directory = "runs/#1"
        cadence = 5
        lp_moments = [2, 3]
        """
    )
    assert c.params.gamma == 1.5 and c.params.n_modes == 8 and c.params.dim == 1
    assert c.initial == "gaussian_blob"
    assert c.initial_options == {"width": 0.08, "velocity": (0.3,)}
    assert c.directory == "runs/#1" and c.cadence == 5 and c.seed == 4
    assert c.params.lp_moments == (2.0, 3.0)
    assert c.n_modes_explicit


@pytest.mark.parametrize(
    "text, line, message",
    [
        ("gamma = 0.5\ngrid = 64\ndt = 1e-3\nt_end = 1\n", 1, "gamma >= 1"),
        ("gamma = 2\ngrid = 64\ndt = 1e-3\n", 4, "missing required key 't_end'"),
        ("gamma = 2\ngrid = 64.5\ndt = 1e-3\nt_end = 1\n", 2, "expects an integer"),
        ("gamma = 'two'\ngrid = 64\ndt = 1e-3\nt_end = 1\n", 1, "expects a number"),
        (MINIMAL + "colour = 3\n", 5, "unknown key 'colour'"),
        (MINIMAL + "[model]\ngamma = 3\n", 6, "duplicate key 'gamma'"),
        (MINIMAL + "[physics]\n", 5, "unknown section"),
        (MINIMAL + "just words\n", 5, "cannot parse"),
        (MINIMAL + "[time]\nwidth = 1\n", 6, "unknown key 'width' in section \\[time\\]"),
        (MINIMAL + "name = vortex\n", 5, "unknown initial condition"),
        (MINIMAL + "name = constant\nwidth = 0.1\n", 6, "does not take 'width'"),
        (MINIMAL + "n = 40\n", 5, "grid_points"),
        (MINIMAL + "delta = -1\n", 5, "delta"),
        (MINIMAL + "cadence = 0\n", 5, "cadence"),
        (MINIMAL + "[sweep]\ncolour = [1]\n", 6, "not a parameter"),
        (MINIMAL + "[sweep]\ndelta = []\n", 6, "nonempty"),
        (MINIMAL + "[sweep]\ndelta = [0.1, -1]\n", 6, "delta"),
    ],
)
def test_errors_carry_line_numbers(text, line, message):
    with pytest.raises(ConfigError, match=message) as err:
        parse_config(text)
    assert err.value.line == line
    assert str(err.value).startswith(f"line {line}:")


def test_sweep_expansion():
    c = parse_config(MINIMAL + "[sweep]\ndelta = [1e-1, 1e-2, 1e-3]\n")
    runs = expand_sweep(c)
    assert [r.params.delta for r in runs] == [1e-1, 1e-2, 1e-3]
    assert [r.label for r in runs] == ["delta=0.1", "delta=0.01", "delta=0.001"]
    assert all(r.sweep == () for r in runs)
    assert expand_sweep(parse_config(MINIMAL)) == [parse_config(MINIMAL)]


@given(st.lists(st.floats(0, 1), min_size=1, max_size=4), st.lists(st.integers(1, 5), min_size=1, max_size=3))
def test_sweep_cross_product(deltas, modes):
    text = MINIMAL + f"[sweep]\ndelta = {deltas!r}\nn_modes = {modes!r}\n"
    runs = expand_sweep(parse_config(text))
    assert len(runs) == len(deltas) * len(modes)
    assert [(r.params.delta, r.params.n_modes) for r in runs] == [(d, n) for d in deltas for n in modes]


def test_grid_sweep_resets_default_modes():
    runs = expand_sweep(parse_config(MINIMAL + "[sweep]\ngrid = [32, 64]\n"))
    assert [r.params.n_modes for r in runs] == [10, 21]
    fixed = expand_sweep(parse_config(MINIMAL + "n = 4\n[sweep]\ngrid = [32, 64]\n"))
    assert [r.params.n_modes for r in fixed] == [4, 4]


def test_load_config(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(MINIMAL, encoding="utf-8")
    assert load_config(path) == parse_config(MINIMAL)
