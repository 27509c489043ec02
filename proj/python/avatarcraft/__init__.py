"""Python interface to the avatarcraft engine, translator and evaluation code.

Crafting parameters are plain dicts ``{"s": [...16], "t": [...4], "a": [...12]}``
and images are ``(128, 128, 3)`` uint8 numpy arrays.
"""

import json as _json

import numpy as _np

from . import _core
from ._core import InsufficientSamples, SchemaMismatch, ValidationError

__all__ = [
    "Api",
    "Encoder",
    "InsufficientSamples",
    "SchemaMismatch",
    "Translator",
    "ValidationError",
    "composite_loss",
    "condition_mask",
    "decode_png",
    "encode_png",
    "frechet_surrogate",
    "generate_pairs",
    "neutral_params",
    "pixel_sha256",
    "render",
    "sample_params",
    "schema",
    "stylize",
    "validate",
]

Encoder = _core.Encoder
Api = _core.Api
encode_png = _core.encode_png
decode_png = _core.decode_png
pixel_sha256 = _core.pixel_sha256
condition_mask = _core.condition_mask


def _params(p):
    return _json.dumps({"s": list(p["s"]), "t": [int(v) for v in p["t"]], "a": list(p["a"])})


def schema():
    return _json.loads(_core.schema_json())


def sample_params(seed):
    return _json.loads(_core.sample_params(seed))


def neutral_params():
    return _json.loads(_core.neutral_params())


def validate(params):
    """List of {"field", "message"} issues; empty when valid."""
    return _json.loads(_core.validate(_params(params)))


def render(params):
    return _core.render(_params(params))


def stylize(image, style, seed=0):
    return _core.stylize(image, style, seed)


def composite_loss(outputs, truth, alpha=5.0, gamma=1.0, lam=0.1):
    """outputs holds s_hat (16), t_logits (15) and a_hat (12)."""
    payload = {k: [float(v) for v in outputs[k]] for k in ("s_hat", "t_logits", "a_hat")}
    return _json.loads(_core.composite_loss(_json.dumps(payload), _params(truth), alpha, gamma, lam))


def frechet_surrogate(a, b):
    return _core.frechet_surrogate(_np.asarray(a, dtype=float), _np.asarray(b, dtype=float))


def generate_pairs(n, seed, out_dir):
    """Writes a pair dataset and returns its hash."""
    return _core.generate_pairs(n, seed, str(out_dir))


class Translator:
    def __init__(self, model):
        self._model = model

    @classmethod
    def load(cls, path):
        return cls(_core.Translator.load(str(path)))

    @property
    def schema_hash(self):
        return self._model.schema_hash

    def predict(self, image):
        return _json.loads(self._model.predict(image))

    def craft(self, image):
        """(result dict, avatar image)."""
        text, avatar = self._model.craft(image)
        return _json.loads(text), avatar

    def api(self):
        return _core.Api(self._model)
