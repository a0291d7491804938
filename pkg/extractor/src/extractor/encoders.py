"""Image and prompt encoders.

Two backends:

* ``toy``: a deterministic, dependency-free encoder for tests and demos.
  Images become the L2-normalized 8x8 RGB downsample (192 dims); prompts
  map color words in the class name to an RGB anchor tiled over the grid,
  so color-named classes align with images of that color. Class names
  without a known color word get a name-seeded pseudo-random direction
  (still deterministic, but not meaningfully aligned with any image).
* any other identifier: treated as a sentence-transformers CLIP model id
  (e.g. ``clip-ViT-B-32``); weights must be available locally or cached.
"""

from __future__ import annotations

import hashlib
from typing import Sequence

import numpy as np
from PIL import Image

PROMPT_TEMPLATE = "a photo of a {}"

_TOY_GRID = 8
_TOY_COLORS = {
    "red": (1.0, 0.0, 0.0),
    "green": (0.0, 1.0, 0.0),
    "blue": (0.0, 0.0, 1.0),
    "yellow": (1.0, 1.0, 0.0),
    "cyan": (0.0, 1.0, 1.0),
    "magenta": (1.0, 0.0, 1.0),
    "white": (1.0, 1.0, 1.0),
    "orange": (1.0, 0.5, 0.0),
}


class ModelLoadError(RuntimeError):
    """The requested encoder backend could not be loaded."""


def _normalize(rows: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return rows / norms


class ToyEncoder:
    """Offline color-based stand-in for a vision-language model."""

    dim = _TOY_GRID * _TOY_GRID * 3

    def encode_images(self, images: Sequence[Image.Image]) -> np.ndarray:
        out = np.empty((len(images), self.dim), dtype=np.float64)
        for i, image in enumerate(images):
            small = image.convert("RGB").resize((_TOY_GRID, _TOY_GRID), Image.BILINEAR)
            out[i] = np.asarray(small, dtype=np.float64).reshape(-1) / 255.0
        return _normalize(out)

    def encode_texts(self, prompts: Sequence[str]) -> np.ndarray:
        out = np.empty((len(prompts), self.dim), dtype=np.float64)
        for i, prompt in enumerate(prompts):
            anchor = None
            for word, rgb in _TOY_COLORS.items():
                if word in prompt.lower():
                    anchor = np.tile(rgb, _TOY_GRID * _TOY_GRID)
                    break
            if anchor is None:
                digest = hashlib.sha256(prompt.encode()).digest()
                rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
                anchor = rng.normal(size=self.dim)
            out[i] = anchor
        return _normalize(out)


class SentenceTransformerEncoder:
    """CLIP-style encoder via sentence-transformers, loaded lazily."""

    def __init__(self, model_id: str, batch_size: int = 16):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise ModelLoadError(
                "sentence-transformers is not installed; install the 'clip' extra"
            ) from exc
        try:
            self._model = SentenceTransformer(model_id)
        except Exception as exc:
            raise ModelLoadError(f"could not load model {model_id!r}: {exc}") from exc
        self._batch_size = batch_size

    def encode_images(self, images: Sequence[Image.Image]) -> np.ndarray:
        vecs = self._model.encode(
            list(images), batch_size=self._batch_size, convert_to_numpy=True
        )
        return _normalize(np.asarray(vecs, dtype=np.float64))

    def encode_texts(self, prompts: Sequence[str]) -> np.ndarray:
        vecs = self._model.encode(
            list(prompts), batch_size=self._batch_size, convert_to_numpy=True
        )
        return _normalize(np.asarray(vecs, dtype=np.float64))


def load_encoder(model_id: str, batch_size: int = 16):
    if model_id == "toy":
        return ToyEncoder()
    return SentenceTransformerEncoder(model_id, batch_size=batch_size)
