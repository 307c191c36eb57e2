import copy
import json

import numpy as np
import pytest

from dvqr import io as model_io
from dvqr import oracles
from dvqr.dvine import fit_quantreg, predict_quantile
from vine_builders import WORKED_SIGMA


@pytest.fixture(scope="module")
def model():
    raw = oracles.sample_mvn(oracles.MvnSpec(np.zeros(4), WORKED_SIGMA), 300, 0)
    return fit_quantreg(raw, ["y", "x1", "x2", "x3"], "y")


def test_round_trip_predictions(model):
    back = model_io.loads(model_io.dumps(model))
    x = np.random.default_rng(1).standard_normal((100, 3)) * 1.5
    a = np.random.default_rng(2).uniform(0.01, 0.99, 100)
    np.testing.assert_allclose(predict_quantile(back, a, x), predict_quantile(model, a, x), rtol=0, atol=1e-12)


def test_byte_stable(model, tmp_path):
    text = model_io.dumps(model)
    assert model_io.dumps(model_io.loads(text)) == text
    path = tmp_path / "m.json"
    model_io.save_model(model, path)
    assert path.read_text(encoding="utf-8") == text
    assert model_io.dumps(model_io.load_model(path)) == text


def test_document_layout(model):
    doc = model_io.to_document(model)
    assert doc["format"] == "dvqr-model" and doc["version"] == 1
    assert [m["column"] for m in doc["margins"]] == ["y", "x1", "x2", "x3"]
    assert doc["vine"]["order"] == list(model.vine.order)
    assert len(doc["vine"]["trees"]) == model.vine.k


def _broken(model, edit):
    doc = copy.deepcopy(model_io.to_document(model))
    edit(doc)
    return json.dumps(doc)


def test_unknown_family_named(model):
    def edit(doc):
        doc["vine"]["trees"][0][0]["family"] = "galambos"
    with pytest.raises(model_io.ModelFormatError, match="galambos") as err:
        model_io.loads(_broken(model, edit))
    assert err.value.location == "vine.trees[0][0].family"


@pytest.mark.parametrize("edit, location", [
    (lambda d: d.update(format="other"), "format"),
    (lambda d: d.update(version=2), "version"),
    (lambda d: d.pop("response"), "response"),
    (lambda d: d.update(criterion="hqc"), "criterion"),
    (lambda d: d["margins"].pop(), "margins"),
    (lambda d: d["margins"][1].update(column="zz"), "margins[1].column"),
    (lambda d: d["margins"][0]["sample"].__setitem__(0, 99.0), "margins[0].sha256"),
    (lambda d: d["margins"][0].update(n=3), "margins[0].sample"),
    (lambda d: d["margins"][2].update(bandwidth="wide"), "margins[2].bandwidth"),
    (lambda d: d["vine"]["order"].__setitem__(0, 9), "vine.order[0]"),
    (lambda d: d["vine"]["trees"][0][0].update(params=[5.0]), "vine.trees[0][0]"),
    (lambda d: d["vine"]["trees"].pop(), "vine"),
])
def test_malformed_documents(model, edit, location):
    with pytest.raises(model_io.ModelFormatError) as err:
        model_io.loads(_broken(model, edit))
    assert err.value.location == location


def test_invalid_json():
    with pytest.raises(model_io.ModelFormatError, match="line 1"):
        model_io.loads("{not json")
