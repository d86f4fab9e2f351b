"""Initial node features: seeded feature hashing or externally supplied vectors."""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable, Mapping, Optional

import numpy as np

from .afg import Afg
from .errors import DimensionMismatch, FormatError, MissingEmbedding

__all__ = [
    "EmbeddingConfig",
    "ExternalProvider",
    "LexicalProvider",
    "attach_features",
    "lexical_embed",
    "make_provider",
    "text_hash",
]

PROVIDERS = ("lexical", "external")


@dataclass(frozen=True)
class EmbeddingConfig:
    dim: int = 64
    provider: str = "lexical"
    seed: int = 0

    def __post_init__(self):
        if self.dim < 8:
            raise ValueError(f"embedding dimension must be >= 8, got {self.dim}")
        if self.provider not in PROVIDERS:
            raise ValueError(f"unknown provider {self.provider!r}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")


# Delimiters separate tokens but are not tokens themselves.
_LEX_RE = re.compile(
    r'"(?:\\.|[^"\\])*"?|\'(?:\\.|[^\'\\])*\'?'
    r"|[^\W\d][\w$]*|\$[\w$]*|\d[\w.]*"
    r"|>>>=|<<=|>>=|->|::|\+\+|--|&&|\|\||[=!<>+\-*/%&|^]="
    r"|[-+*/%=<>!~?:&|^@]"
)


def lexical_tokens(text: str) -> list[str]:
    return _LEX_RE.findall(text)


def _bucket(token: str, seed: int, dim: int) -> tuple[int, float]:
    h = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=seed.to_bytes(8, "little")).digest()
    value = int.from_bytes(h, "little")
    return value % dim, (1.0 if value >> 63 else -1.0)


@lru_cache(maxsize=200_000)
def _lexical_cached(text: str, dim: int, seed: int) -> bytes:
    vec = np.zeros(dim)
    for tok in lexical_tokens(text):
        idx, sign = _bucket(tok, seed, dim)
        vec[idx] += sign
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec /= norm
    return vec.tobytes()


def lexical_embed(line_text: str, cfg: EmbeddingConfig) -> np.ndarray:
    """Signed feature hashing of the line's tokens, L2-normalised.

    Text with no tokens maps to the zero vector.
    """
    return np.frombuffer(_lexical_cached(line_text.strip(), cfg.dim, cfg.seed)).copy()


def text_hash(text: str) -> str:
    """64-bit BLAKE2b digest of the trimmed line, as 16 hex digits."""
    return hashlib.blake2b(text.strip().encode("utf-8"), digest_size=8).hexdigest()


class LexicalProvider:
    def __init__(self, cfg: EmbeddingConfig):
        self.cfg = cfg
        self.dim = cfg.dim

    def __call__(self, text: str) -> Optional[np.ndarray]:
        return lexical_embed(text, self.cfg)


class ExternalProvider:
    """Vectors looked up by :func:`text_hash` of the trimmed line text."""

    def __init__(self, table: Mapping[str, np.ndarray], dim: Optional[int] = None):
        self.table = {k: np.asarray(v, dtype=float) for k, v in table.items()}
        dims = {v.shape[0] for v in self.table.values()}
        if len(dims) > 1:
            raise DimensionMismatch(f"external vectors have mixed dimensions {sorted(dims)}")
        found = dims.pop() if dims else dim
        if dim is not None and found is not None and found != dim:
            raise DimensionMismatch(f"external vectors have dimension {found}, expected {dim}")
        self.dim = found

    @classmethod
    def from_file(cls, path, dim: Optional[int] = None) -> "ExternalProvider":
        table = {}
        with open(path, encoding="utf-8") as fh:
            for i, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    table[rec["text_hash"]] = np.asarray(rec["vector"], dtype=float)
                except (ValueError, KeyError, TypeError) as exc:
                    raise FormatError(f"{path}: bad vector record ({exc})", i) from None
        return cls(table, dim)

    def __call__(self, text: str) -> Optional[np.ndarray]:
        vec = self.table.get(text_hash(text))
        return None if vec is None else vec.copy()


def make_provider(cfg: EmbeddingConfig, vectors: Optional[str | Path] = None) -> Callable:
    if cfg.provider == "lexical":
        return LexicalProvider(cfg)
    if vectors is None:
        raise ValueError("external provider needs a vectors file")
    return ExternalProvider.from_file(vectors, cfg.dim)


def attach_features(afg: Afg, provider: Callable[[str], Optional[np.ndarray]]) -> Afg:
    """Copy of ``afg`` with a feature vector on every node."""
    out = afg.copy()
    for node in out.nodes:
        vec = provider(node.text)
        if vec is None:
            raise MissingEmbedding(afg.id, node.line)
        node.feature = vec
    return out
