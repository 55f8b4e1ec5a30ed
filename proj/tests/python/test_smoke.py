import json
import os

import numpy as np
import pytest

import vectorplus as vp

DATA = os.environ.get(
    "VECTORPLUS_DATA",
    os.path.join(os.path.dirname(__file__), "..", "..", "data"),
)
TOY = os.path.join(DATA, "fixtures", "toy_2class.csv")


def test_canonical_forms_agree_across_atom_orders():
    assert vp.canonical_smiles("OCC") == vp.canonical_smiles("CCO")
    assert vp.canonical_smiles("C1CC") is None
    assert vp.is_valid("c1ccccc1")
    assert not vp.is_valid("C(")


def test_properties_of_ethanol():
    p = vp.properties("CCO")
    assert p["mw"] == pytest.approx(46.069, abs=0.01)
    assert p["hbd"] == 1 and p["hba"] == 1


def test_tanimoto_is_one_on_identical_molecules():
    assert vp.tanimoto("CCO", "OCC") == 1.0
    assert 0.0 <= vp.tanimoto("CCO", "c1ccccc1") < 1.0


def test_featurize_shape():
    X = vp.featurize(["CCO", "CCN"], width=256)
    assert X.shape == (2, 260)
    assert set(np.unique(X[:, :256])) <= {0.0, 1.0}


def test_parse_errors_raise_library_exception():
    with pytest.raises(vp.VectorplusError) as info:
        vp.properties("C(")
    assert info.value.kind


def test_gmm_fit_recovers_two_clusters():
    rng = np.random.default_rng(0)
    Z = np.vstack([rng.normal(-3, 0.5, (100, 2)), rng.normal(3, 0.5, (100, 2))])
    r = vp.gmm_fit(Z, 2, seed=1)
    assert np.all(np.diff(r["trace"]) >= -1e-9)
    means = np.sort(r["means"][:, 0])
    assert means == pytest.approx([-3, 3], abs=0.3)
    assert sum(r["weights"]) == pytest.approx(1.0)


def test_assign_prefers_heavier_diagonal():
    phi = np.array([[1.0, 5.0], [4.0, 1.0]])
    assert vp.assign(phi) == [1, 0]


def test_metrics_counts():
    m = vp.metrics(["CCO", "OCC", "C(", "CCN"], ["CCO"])
    assert m["total"] == 4
    assert m["valid"] == 3
    assert m["unique"] == 2
    assert m["novel"] == 1


def test_gradient_checks_pass():
    out = vp.verify(grad_check_only=True)
    assert out["passed"]


def test_pipeline_round_trip(tmp_path):
    cfg = {
        "dataset": TOY,
        "schema": {"smiles_col": "smiles", "label_col": "class"},
        "seed": 3,
        "featurizer": {"fp_width": 256},
        "encoder": {"epochs": 5, "hidden_dim": 16, "latent_dim": 4},
        "gmm": {"reg_scale": 1e-3},
        "decoder": {"layers": 1, "hidden": 16, "epochs": 2},
        "generation": {"samples": 5},
    }
    out = str(tmp_path / "run")
    bundle = vp.train(cfg, output=out)
    with open(bundle) as f:
        assert json.load(f)["format"] == "vectorplus-bundle"
    g = vp.generate(cfg, cls=2, output=out)
    assert g["requested"] == 5
    assert len(g["accepted"]) <= 5
