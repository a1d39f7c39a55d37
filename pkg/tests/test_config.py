import pytest
from hypothesis import given
from hypothesis import strategies as st

from mspac import config as cm
from mspac.config import ConfigError, RunConfig


def test_defaults():
    cfg = cm.build()
    assert cfg.loss.margin == 1.0 and cfg.loss.lam == 1.0
    assert cfg.mspac.scales == (6, 3, 1)
    assert (cfg.train.P, cfg.train.M, cfg.train.epochs) == (8, 4, 30)
    assert cfg.optim.lr0 == 0.01 and cfg.optim.momentum == 0.9 and cfg.optim.weight_decay == 5e-4


def test_dump_parse_round_trip():
    cfg = cm.build({"loss.lambda": "0.5", "mspac.scales": "3,1", "mspac.channel": "false", "train.epochs": "3"})
    again = cm.build(cm.parse_text(cfg.dumps()))
    assert again == cfg
    assert again.loss.lam == 0.5 and again.mspac.scales == (3, 1) and again.mspac.channel is False


def test_lambda_alias_spelling():
    assert "loss.lambda" in cm.known_keys() and "loss.lam" not in cm.known_keys()


def test_file_with_comments(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("# header\nloss.margin = 2   # trailing\n\ntrain.epochs=4\n")
    cfg = cm.load(p, {"train.epochs": "5"})
    assert cfg.loss.margin == 2.0 and cfg.train.epochs == 5


def test_unknown_key():
    with pytest.raises(ConfigError, match="loss.lamda"):
        cm.build({"loss.lamda": "1"})


@pytest.mark.parametrize(
    "over",
    [
        {"train.epochs": "ten"},
        {"mspac.channel": "maybe"},
        {"loss.margin": "-1"},
        {"mspac.scales": "5,1"},  # 24-row map not divisible by 5
        {"train.P": "30"},
        {"data.img_h": "40"},
    ],
)
def test_invalid_values(over):
    with pytest.raises(ConfigError):
        cm.build(over)


def test_malformed_line():
    with pytest.raises(ConfigError, match=":2:"):
        cm.parse_text("a = 1\nnot an assignment\n")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        cm.load(tmp_path / "none.txt")


def test_parse_assignments():
    assert cm.parse_assignments(["a.b=1", "c = x"]) == {"a.b": "1", "c": "x"}
    with pytest.raises(ConfigError):
        cm.parse_assignments(["oops"])


@given(st.floats(0, 10, allow_nan=False), st.integers(0, 50), st.booleans())
def test_round_trip_property(margin, epochs, spatial):
    cfg = cm.build({"loss.margin": margin, "train.epochs": epochs, "mspac.spatial": spatial})
    assert cm.build(cm.parse_text(cfg.dumps())) == cfg


def test_runconfig_default_is_valid():
    RunConfig().validate()
