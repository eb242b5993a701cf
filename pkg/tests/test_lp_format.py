import pytest

from housing_markets import ip_models, lp_format
from housing_markets.errors import LpFormatError
from housing_markets.instances import GenConfig, fixtures, generate
from housing_markets.models import Concept, Objective
from housing_markets.templating import LINE_WIDTH


@pytest.fixture
def example1():
    return fixtures()["example1"].market


def test_export_sections(example1):
    model = ip_models.build_model(example1, Concept.COMPETITIVE, objective=Objective.max_size())
    text = lp_format.export_lp(model)
    assert text.startswith("\\ Model housing_market\n\\ n: 6\n")
    assert " 1 <= p_1 <= 6" in text
    assert " 0 <= y_1_2 <= 1" in text
    assert " comp_5_6: +1 p_5 -1 p_6 +6 y_5_6 <= 6\n" in text
    assert "Binaries" in text and "Generals" in text
    assert text.rstrip().endswith("End")
    assert "\\ k:" not in text


@pytest.mark.parametrize(
    ("concept", "k", "objective"),
    [
        (Concept.STRONG_CORE, None, Objective.feasibility()),
        (Concept.COMPETITIVE, None, Objective.lexi(Objective.max_weight(), Objective.best_for(3))),
        (Concept.CORE, 3, Objective.max_size()),
    ],
)
def test_read_back_gives_the_same_model(example1, concept, k, objective):
    model = ip_models.build_model(example1, concept, k=k, objective=objective)
    assert lp_format.read_lp(lp_format.export_lp(model)) == model


def test_later_stages_are_comments(example1):
    model = ip_models.build_model(
        example1, Concept.NONE, objective=Objective.lexi(Objective.max_size(), Objective.max_weight())
    )
    text = lp_format.export_lp(model)
    assert "\\ objective.2: " in text


def test_write_and_load(example1, tmp_path):
    model = ip_models.build_model(example1, Concept.CORE, k=2)
    path = tmp_path / "model.lp"
    lp_format.write_lp(model, path)
    assert lp_format.load_lp(path) == model


@pytest.mark.parametrize(
    ("text", "message"),
    [
        ("\\ n: 2\nSubject To\n r: +1 = 1\nEnd\n", "dangling token"),
        ("\\ n: 2\nSubject To\n r: +x y_1_1 = 1\nEnd\n", "bad coefficient"),
        ("\\ n: 2\nSubject To\n r +1 y_1_1\nEnd\n", "unreadable constraint"),
        ("\\ n: 2\nMaximize\n goal: +1 y_1_1\nEnd\n", "'obj:'"),
        ("\\ n: 2\nBounds\n y_1_1 <= 1\nEnd\n", "unreadable bound"),
        ("\\ n: 2\n y_1_1\n", "outside of any section"),
        ("Maximize\n obj:\nEnd\n", "missing"),
    ],
)
def test_malformed_input(text, message):
    with pytest.raises(LpFormatError, match=message):
        lp_format.read_lp(text)


def test_long_rows_are_wrapped():
    market = generate(GenConfig(n=30, edge_probability=0.9, seed=1))
    model = ip_models.build_model(
        market, Concept.CORE, objective=Objective.lexi(Objective.max_weight(), Objective.max_size())
    )
    text = lp_format.export_lp(model)
    lines = text.splitlines()
    assert max(len(line) for line in lines) <= LINE_WIDTH + 40
    assert any(line.startswith("    +") for line in lines)
    assert any(line.startswith("\\    +") for line in lines)
    assert lp_format.read_lp(text) == model
