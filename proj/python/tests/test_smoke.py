import json
import pathlib

import numpy as np
import pytest

import avatarcraft as ac

ROOT = pathlib.Path(__file__).resolve().parents[2]


def test_schema_matches_shipped_file():
    assert ac.schema() == json.loads((ROOT / "schema.json").read_text())


def test_neutral_render_matches_golden():
    img = ac.render(ac.neutral_params())
    assert img.shape == (128, 128, 3) and img.dtype == np.uint8
    golden = (ROOT / "golden" / "neutral_render.sha256").read_text().split()[0]
    assert ac.pixel_sha256(img) == golden
    assert np.array_equal(ac.decode_png(ac.encode_png(img)), img)


def test_render_is_deterministic_and_varies():
    p = ac.sample_params(5)
    assert np.array_equal(ac.render(p), ac.render(p))
    assert not np.array_equal(ac.render(p), ac.render(ac.sample_params(6)))


def test_validation_names_field():
    p = ac.neutral_params()
    p["s"][3] = 1.5
    assert [i["field"] for i in ac.validate(p)] == ["s[3]"]
    with pytest.raises(ValueError):
        ac.render(p)


def test_masked_attribute_does_not_change_render():
    p = ac.neutral_params()  # t = 0 everywhere
    mask = ac.condition_mask(p["t"])
    j = mask.index(False)
    q = json.loads(json.dumps(p))
    q["a"][j] = 0.9 if p["a"][j] < 0.5 else 0.1
    assert np.array_equal(ac.render(p), ac.render(q))


def test_composite_loss_uniform_logits():
    p = ac.sample_params(3)
    out = {"s_hat": p["s"], "a_hat": p["a"], "t_logits": [0.0] * 15}
    loss = ac.composite_loss(out, p)
    assert loss["total"] == pytest.approx(0.1 * (3 * np.log(4) + np.log(3)) / 4, abs=1e-12)


def test_frechet():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(50, 3))
    assert ac.frechet_surrogate(a, a) < 1e-6
    x = np.array([[-1.0], [1.0]] * 50) * np.sqrt(99 / 100)
    assert ac.frechet_surrogate(x, x + 3) == pytest.approx(9.0, abs=1e-6)
    with pytest.raises(ValueError):
        ac.frechet_surrogate(a[:4], a[:4])


def test_stylize_and_pairs(tmp_path):
    img = ac.render(ac.sample_params(1))
    assert ac.stylize(img, "sketch", 1).shape == img.shape
    h1 = ac.generate_pairs(4, 9, tmp_path / "a")
    h2 = ac.generate_pairs(4, 9, tmp_path / "b")
    assert h1 == h2 and len(h1) == 64


def test_api_without_model():
    api = ac.Api()
    status, ctype, body = api.handle("GET", "/v1/health", "")
    assert status == 200 and json.loads(body)["translator_loaded"] is False
    status, _, body = api.handle("POST", "/v1/render", json.dumps(ac.neutral_params()))
    assert status == 200 and body[:4] == b"\x89PNG"
    status, _, body = api.handle("POST", "/v1/predict", "{}")
    assert status in (400, 503)
