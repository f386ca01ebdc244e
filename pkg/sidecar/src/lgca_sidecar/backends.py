"""Model backends: real CLIP checkpoints and a dependency-light fallback.

A backend exposes ``dim``, ``model_name``, ``embed_text_batch(texts)``
and ``embed_image_batch(images)`` (images as HxWx3 uint8 arrays); both
return one L2-normalized float64 row per input.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _normalize_rows(mat: np.ndarray) -> np.ndarray:
    mat = np.asarray(mat, dtype=np.float64)
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return mat / norms


class HashedBackend:
    """Deterministic stand-in encoder; no ML dependencies.

    Text hashes token-wise into stable directions; images are reduced to
    an 8x8 luminance thumbnail and pushed through a seeded random
    projection. Useful for protocol tests and offline smoke runs, not
    for semantics.
    """

    THUMB = 8

    def __init__(self, dim: int = 64, seed: int = 0):
        if dim < 2:
            raise ValueError("dim must be >= 2")
        self.dim = dim
        self.seed = seed
        self.model_name = f"hashed-{dim}"
        rng = np.random.default_rng(seed)
        self._projection = rng.standard_normal((self.THUMB * self.THUMB, dim))

    def _token_direction(self, token: str) -> np.ndarray:
        digest = hashlib.blake2b(
            token.encode("utf-8"), digest_size=8, key=self.seed.to_bytes(8, "big")
        ).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "big"))
        return rng.standard_normal(self.dim)

    def embed_text_batch(self, texts: list[str]) -> np.ndarray:
        rows = []
        for text in texts:
            tokens = [t for t in text.lower().split() if t] or [""]
            rows.append(np.sum([self._token_direction(t) for t in tokens], axis=0))
        return _normalize_rows(np.stack(rows))

    def embed_image_batch(self, images: list[np.ndarray]) -> np.ndarray:
        from PIL import Image

        rows = []
        for arr in images:
            im = Image.fromarray(arr).convert("L").resize((self.THUMB, self.THUMB))
            flat = np.asarray(im, dtype=np.float64).ravel() / 255.0
            rows.append(flat @ self._projection)
        return _normalize_rows(np.stack(rows))


class ClipBackend:
    """CLIP dual encoder behind the wire protocol.

    ``from_pretrained`` loads a checkpoint via transformers (requires the
    weights locally or a reachable hub). The constructor also accepts a
    ready model plus tokenize/preprocess callables so tests can run a
    randomly initialized CLIP without downloads.
    """

    def __init__(self, model, tokenize, preprocess, model_name: str):
        import torch

        self._torch = torch
        self.model = model.eval()
        self.tokenize = tokenize
        self.preprocess = preprocess
        self.model_name = model_name
        self.dim = int(model.config.projection_dim)

    @classmethod
    def from_pretrained(cls, name: str, device: str = "cpu") -> "ClipBackend":
        import torch
        from transformers import CLIPModel, CLIPProcessor

        model = CLIPModel.from_pretrained(name).to(device)
        processor = CLIPProcessor.from_pretrained(name)

        def tokenize(texts):
            return processor(
                text=texts, return_tensors="pt", padding=True, truncation=True
            ).to(device)

        def preprocess(images):
            return processor(images=images, return_tensors="pt").to(device)

        return cls(model, tokenize, preprocess, name)

    @staticmethod
    def _features(output):
        # transformers < 5 returns the projected tensor directly; >= 5
        # wraps it in a model output whose pooler_output is the projection
        if hasattr(output, "pooler_output"):
            return output.pooler_output
        return output

    def embed_text_batch(self, texts: list[str]) -> np.ndarray:
        with self._torch.no_grad():
            features = self._features(self.model.get_text_features(**self.tokenize(texts)))
        return _normalize_rows(features.cpu().numpy())

    def embed_image_batch(self, images: list[np.ndarray]) -> np.ndarray:
        with self._torch.no_grad():
            features = self._features(
                self.model.get_image_features(**self.preprocess(images))
            )
        return _normalize_rows(features.cpu().numpy())


def load_backend(spec: str, device: str = "cpu"):
    """Parse ``hashed:<dim>`` or ``clip:<checkpoint>`` into a backend."""
    kind, _, rest = spec.partition(":")
    if kind == "hashed":
        return HashedBackend(dim=int(rest) if rest else 64)
    if kind == "clip" and rest:
        return ClipBackend.from_pretrained(rest, device=device)
    raise ValueError(f"unknown backend spec {spec!r}")
