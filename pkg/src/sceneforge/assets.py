"""Asset catalog with semantic-embedding retrieval.

The catalog is an immutable, in-process flat index: descriptions are embedded
into 2048-dimensional unit vectors and queries run an exhaustive cosine scan.
At catalog scales up to ~10^4 records the scan finishes well inside the
200 ms retrieval budget, so there is no approximate index to get wrong.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol

import numpy as np
import requests

from .errors import (
    ContractViolationError,
    EmptyCatalogError,
    ManifestError,
    PreconditionError,
    TransportError,
)
from .geometry import GraspAnnotation, hull_contains, hull_vertices

EMBED_DIM = 2048
DEFAULT_TOP_K = 5
#: Queries whose best candidate scores below this floor do not resolve.
SIMILARITY_FLOOR = 0.05

_TOKEN_RE = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class AssetRecord:
    """One simulation-ready object: semantics, geometry, mass, grasps."""

    asset_id: str
    category: str
    semantic_description: str
    scene_path: str
    aabb_extents: np.ndarray
    hull: np.ndarray
    mass_kg: float
    texture_variants: tuple[str, ...] = ()
    grasp_annotations: tuple[GraspAnnotation, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "aabb_extents", np.asarray(self.aabb_extents, dtype=float).reshape(3))
        object.__setattr__(self, "hull", np.asarray(self.hull, dtype=float).reshape(-1, 3))

    def validate(self) -> None:
        if not self.asset_id:
            raise ManifestError("empty asset id", asset_id=self.asset_id, field="id")
        if not np.all(self.aabb_extents > 0):
            raise ManifestError(
                f"asset {self.asset_id!r}: aabb_extents must be positive",
                asset_id=self.asset_id, field="aabb_extents",
            )
        if not self.mass_kg > 0:
            raise ManifestError(
                f"asset {self.asset_id!r}: mass_kg must be positive",
                asset_id=self.asset_id, field="mass_kg",
            )
        if self.hull.shape[0] < 4:
            raise ManifestError(
                f"asset {self.asset_id!r}: hull needs at least 4 vertices",
                asset_id=self.asset_id, field="hull_vertices",
            )
        try:
            base_z = float(self.hull[:, 2].min())
            if not hull_contains(self.hull, (0.0, 0.0, base_z), slack=1e-6):
                raise ManifestError(
                    f"asset {self.asset_id!r}: hull does not contain the origin over its base plane",
                    asset_id=self.asset_id, field="hull_vertices",
                )
        except PreconditionError as exc:
            raise ManifestError(
                f"asset {self.asset_id!r}: {exc}", asset_id=self.asset_id, field="hull_vertices"
            ) from exc
        for g in self.grasp_annotations:
            g.validate()

    def to_manifest_dict(self) -> dict:
        return {
            "id": self.asset_id,
            "category": self.category,
            "description": self.semantic_description,
            "scene_path": self.scene_path,
            "aabb_extents": [float(v) for v in self.aabb_extents],
            "hull_vertices": [[float(v) for v in row] for row in self.hull],
            "mass_kg": float(self.mass_kg),
            "texture_variants": list(self.texture_variants),
            "grasps": [g.to_dict() for g in self.grasp_annotations],
        }


@dataclass(frozen=True)
class RetrievalResult:
    asset_id: str
    similarity: float
    rank: int


class EmbeddingProvider(Protocol):
    def embed(self, text: str) -> np.ndarray: ...


class MockEmbeddingProvider:
    """Deterministic hashed bag-of-tokens embedding.

    Each token lights up two signed coordinates chosen by a keyed blake2b
    hash, so identical text always embeds identically and texts sharing
    tokens have positive cosine similarity. No model weights involved.
    """

    def __init__(self, seed: int = 0, dim: int = EMBED_DIM):
        self.dim = dim
        self._key = f"mock-embed-{seed}".encode("ascii")

    def _token_slots(self, token: str) -> Iterable[tuple[int, float]]:
        digest = hashlib.blake2b(token.encode("utf-8"), key=self._key, digest_size=16).digest()
        for probe in range(2):
            chunk = digest[probe * 8:(probe + 1) * 8]
            value = int.from_bytes(chunk, "big")
            sign = 1.0 if value & 1 else -1.0
            yield (value >> 1) % self.dim, sign

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        for token in _TOKEN_RE.findall(text.lower()):
            for slot, sign in self._token_slots(token):
                vec[slot] += sign
        if not vec.any():
            # No recognizable tokens: fall back to hashing the raw text.
            for slot, sign in self._token_slots(text):
                vec[slot] += sign
        return vec


class HttpEmbeddingProvider:
    """Client for the embedding wire contract: POST {endpoint}/v1/embed."""

    def __init__(self, endpoint: str, model: str = "default", timeout: float = 10.0,
                 session: requests.Session | None = None):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.timeout = timeout
        self._session = session or requests.Session()

    def embed(self, text: str) -> np.ndarray:
        try:
            resp = self._session.post(
                f"{self.endpoint}/v1/embed",
                json={"model": self.model, "input": text},
                timeout=self.timeout,
            )
        except (requests.ConnectionError, requests.Timeout) as exc:
            raise TransportError(f"embedding provider unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise TransportError(f"embedding provider returned HTTP {resp.status_code}")
        body = resp.json()
        if "vector" not in body:
            raise ContractViolationError("embedding response missing 'vector'")
        return np.asarray(body["vector"], dtype=float)


def embed_text(text: str, provider: EmbeddingProvider) -> np.ndarray:
    """Embed text into a normalized EMBED_DIM vector."""
    if not text:
        raise PreconditionError("text must be non-empty")
    vec = np.asarray(provider.embed(text), dtype=float)
    if vec.shape != (EMBED_DIM,):
        raise ContractViolationError(
            f"provider returned dimension {vec.shape}, expected ({EMBED_DIM},)"
        )
    if not np.all(np.isfinite(vec)):
        raise ContractViolationError("provider returned non-finite entries")
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise ContractViolationError("provider returned a zero vector")
    return vec / norm


class Catalog:
    """Validated asset records plus an optional embedding index.

    Immutable after load: indexing happens once, before serving; queries
    never mutate the catalog (verified by ``content_digest``).
    """

    def __init__(self, records: list[AssetRecord]):
        self.records = list(records)
        self._by_id = {r.asset_id: r for r in self.records}
        self._ids: list[str] = []
        self._id_rows: dict[str, int] = {}
        self._matrix: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.records)

    def __contains__(self, asset_id: str) -> bool:
        return asset_id in self._by_id

    def get(self, asset_id: str) -> AssetRecord:
        return self._by_id[asset_id]

    @property
    def categories(self) -> set[str]:
        return {r.category for r in self.records}

    @property
    def indexed(self) -> bool:
        return self._matrix is not None

    def build_index(self, provider: EmbeddingProvider) -> None:
        """Embed every record description. Single writer, run before serving."""
        vectors = [embed_text(r.semantic_description, provider) for r in self.records]
        self._ids = [r.asset_id for r in self.records]
        self._id_rows = {aid: i for i, aid in enumerate(self._ids)}
        self._matrix = np.vstack(vectors) if vectors else np.zeros((0, EMBED_DIM))
        self._provider = provider

    def stored_embedding(self, asset_id: str) -> np.ndarray:
        if self._matrix is None:
            raise PreconditionError("catalog is not indexed")
        return self._matrix[self._id_rows[asset_id]]

    def content_digest(self) -> str:
        payload = json.dumps(
            {"assets": [r.to_manifest_dict() for r in self.records]},
            sort_keys=True, separators=(",", ":"),
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _parse_record(entry: dict, index: int) -> AssetRecord:
    asset_id = entry.get("id", f"<record {index}>")
    required = ["id", "category", "description", "scene_path",
                "aabb_extents", "hull_vertices", "mass_kg"]
    for key in required:
        if key not in entry:
            raise ManifestError(
                f"asset {asset_id!r}: missing field {key!r}", asset_id=asset_id, field=key
            )
    try:
        grasps = tuple(GraspAnnotation.from_dict(g) for g in entry.get("grasps", []))
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestError(
            f"asset {asset_id!r}: malformed grasp annotation: {exc}",
            asset_id=asset_id, field="grasps",
        ) from exc
    try:
        record = AssetRecord(
            asset_id=str(entry["id"]),
            category=str(entry["category"]),
            semantic_description=str(entry["description"]),
            scene_path=str(entry["scene_path"]),
            aabb_extents=np.asarray(entry["aabb_extents"], dtype=float),
            hull=np.asarray(entry["hull_vertices"], dtype=float),
            mass_kg=float(entry["mass_kg"]),
            texture_variants=tuple(str(t) for t in entry.get("texture_variants", [])),
            grasp_annotations=grasps,
        )
    except (TypeError, ValueError) as exc:
        raise ManifestError(
            f"asset {asset_id!r}: malformed record: {exc}", asset_id=asset_id
        ) from exc
    record.validate()
    return record


def load_catalog(manifest_path: str | Path) -> Catalog:
    """Load and validate a catalog manifest (schema: {"assets": [...]})."""
    path = Path(manifest_path)
    if not path.exists():
        raise PreconditionError(f"manifest not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("assets"), list):
        raise ManifestError("manifest must be an object with an 'assets' array")
    records = []
    seen: set[str] = set()
    for i, entry in enumerate(doc["assets"]):
        record = _parse_record(entry, i)
        if record.asset_id in seen:
            raise ManifestError(
                f"duplicate asset id {record.asset_id!r}",
                asset_id=record.asset_id, field="id",
            )
        seen.add(record.asset_id)
        records.append(record)
    return Catalog(records)


def query_topk(text: str, k: int, catalog: Catalog) -> list[RetrievalResult]:
    """Top-k records by cosine similarity. Ties break by ascending asset id.

    Similarities are computed per row with np.dot rather than one BLAS
    matvec: hashed bag-of-token embeddings produce mathematically tied
    similarities between distinct records, and gemv's different accumulation
    order would flip such ties nondeterministically against any per-row
    reference scan. Row-wise dot keeps ranking exactly reproducible; the
    exhaustive pass costs ~10 ms at the 10^4-record design ceiling.
    """
    if k < 1:
        raise PreconditionError("k must be >= 1")
    if not catalog.indexed:
        raise PreconditionError("catalog is not indexed; call build_index first")
    if len(catalog) == 0:
        raise EmptyCatalogError("catalog has no records")
    query = embed_text(text, catalog._provider)
    matrix = catalog._matrix
    sims = [float(np.dot(matrix[i], query)) for i in range(len(catalog))]
    order = sorted(range(len(catalog)), key=lambda i: (-sims[i], catalog._ids[i]))
    return [
        RetrievalResult(asset_id=catalog._ids[i], similarity=sims[i], rank=rank)
        for rank, i in enumerate(order[: min(k, len(catalog))], start=1)
    ]


# --- Synthetic manifests -----------------------------------------------------

_ADJECTIVES = ["red", "blue", "green", "yellow", "black", "white", "matte", "glossy",
               "small", "large", "wooden", "plastic", "metal", "ceramic", "soft", "rigid"]
_USAGES = ["kitchen", "office", "workshop", "bathroom", "bedroom", "pantry",
           "laboratory", "garage", "dining", "storage"]


def box_hull(extents) -> np.ndarray:
    """Corner vertices of an origin-centered box with the given extents."""
    hx, hy, hz = np.asarray(extents, dtype=float) / 2.0
    return np.array([[sx * hx, sy * hy, sz * hz]
                     for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)])


def generate_synthetic_manifest(n_records: int, n_categories: int, seed: int = 0) -> dict:
    """Deterministic synthetic manifest with exactly the requested counts."""
    if n_categories > n_records:
        raise PreconditionError("cannot have more categories than records")
    rng = np.random.Generator(np.random.Philox(key=seed))
    assets = []
    for i in range(n_records):
        cat = f"category_{i % n_categories:03d}"
        extents = rng.uniform(0.03, 0.4, size=3)
        adj = _ADJECTIVES[int(rng.integers(len(_ADJECTIVES)))]
        adj2 = _ADJECTIVES[int(rng.integers(len(_ADJECTIVES)))]
        usage = _USAGES[int(rng.integers(len(_USAGES)))]
        assets.append({
            "id": f"asset_{i:05d}",
            "category": cat,
            "description": f"{adj} {adj2} {cat.replace('_', ' ')} item {i} for {usage} use",
            "scene_path": f"/assets/{cat}/asset_{i:05d}.usd",
            "aabb_extents": [float(v) for v in extents],
            "hull_vertices": [[float(v) for v in row] for row in box_hull(extents)],
            "mass_kg": float(rng.uniform(0.05, 5.0)),
            "texture_variants": [f"tex_{j}" for j in range(int(rng.integers(1, 4)))],
            "grasps": [],
        })
    return {"assets": assets}
