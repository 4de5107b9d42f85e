"""Faceted item catalog: loading, validation, synthetic generation, splits.

Items carry exactly one value per facet. The catalog is immutable after
construction and precomputes per-(facet, value) boolean masks so that
conjunctive retrieval is a handful of vectorized ANDs.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np


class CatalogError(ValueError):
    pass


@dataclass(frozen=True)
class FacetSchema:
    """Ordered facets, each with a finite ordered value vocabulary."""

    facets: tuple

    def __post_init__(self):
        names = [name for name, _ in self.facets]
        if len(set(names)) != len(names):
            raise CatalogError("facet names must be unique")
        if not self.facets:
            raise CatalogError("schema needs at least one facet")
        for name, values in self.facets:
            if not values:
                raise CatalogError(f"facet {name!r} has an empty value list")
            if len(set(values)) != len(values):
                raise CatalogError(f"facet {name!r} has duplicate values")

    @property
    def n_facets(self):
        return len(self.facets)

    @property
    def names(self):
        return [name for name, _ in self.facets]

    @property
    def sizes(self):
        return [len(values) for _, values in self.facets]

    @property
    def state_dim(self):
        """Length of the concatenated per-facet belief vector."""
        return sum(self.sizes)

    def facet_index(self, name):
        for i, (n, _) in enumerate(self.facets):
            if n == name:
                return i
        raise CatalogError(f"unknown facet {name!r}")

    def values(self, facet):
        i = facet if isinstance(facet, int) else self.facet_index(facet)
        return list(self.facets[i][1])

    def value_index(self, facet, value):
        i = facet if isinstance(facet, int) else self.facet_index(facet)
        values = self.facets[i][1]
        try:
            return values.index(value) if isinstance(values, list) else list(values).index(value)
        except ValueError:
            raise CatalogError(f"unknown value {value!r} for facet {self.facets[i][0]!r}") from None

    def to_dict(self):
        return {"facets": [{"name": n, "values": list(v)} for n, v in self.facets]}

    @classmethod
    def from_dict(cls, doc):
        return cls(tuple((f["name"], tuple(f["values"])) for f in doc["facets"]))


@dataclass(frozen=True)
class Item:
    item_id: str
    values: tuple  # one value index per facet, schema order


@dataclass(frozen=True)
class RatingEvent:
    user_id: str
    item_id: str
    rating: float


@dataclass
class Catalog:
    schema: FacetSchema
    items: list
    ratings: list
    planted: dict | None = None  # ground-truth FM of a synthetic catalog
    _value_masks: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.items = sorted(self.items, key=lambda it: it.item_id)
        ids = [it.item_id for it in self.items]
        if len(set(ids)) != len(ids):
            raise CatalogError("duplicate item_id in catalog")
        self.item_index = {it.item_id: i for i, it in enumerate(self.items)}
        self.users = sorted({r.user_id for r in self.ratings})
        self.user_index = {u: i for i, u in enumerate(self.users)}
        for r in self.ratings:
            if r.item_id not in self.item_index:
                raise CatalogError(f"rating references unknown item {r.item_id!r}")
        # boolean item masks per (facet, value)
        values = np.array([it.values for it in self.items], dtype=np.intp).reshape(len(self.items), -1)
        self._value_masks = [
            [values[:, f] == v for v in range(size)]
            for f, size in enumerate(self.schema.sizes)
        ]

    @property
    def n_items(self):
        return len(self.items)

    @property
    def n_users(self):
        return len(self.users)

    def item_one_hot_state(self, item):
        """Concatenated per-facet one-hot vector for an item (a perfect belief)."""
        vec = np.zeros(self.schema.state_dim)
        offset = 0
        for f, size in enumerate(self.schema.sizes):
            vec[offset + item.values[f]] = 1.0
            offset += size
        return vec


def matching_mask(catalog, constraints):
    """Boolean item mask for a conjunctive {facet_index: value_index} filter."""
    mask = np.ones(catalog.n_items, dtype=bool)
    for f, v in constraints.items():
        mask &= catalog._value_masks[f][v]
    return mask


def items_matching(catalog, constraints):
    """Items satisfying every (facet, value) constraint, ordered by item_id.

    ``constraints`` maps facet name (or index) to value string (or index);
    an empty mapping matches the whole catalog.
    """
    resolved = {}
    for facet, value in dict(constraints).items():
        f = facet if isinstance(facet, int) else catalog.schema.facet_index(facet)
        v = value if isinstance(value, int) else catalog.schema.value_index(f, value)
        if not 0 <= v < catalog.schema.sizes[f]:
            raise CatalogError(f"value index {v} out of range for facet {catalog.schema.names[f]!r}")
        resolved[f] = v
    mask = matching_mask(catalog, resolved)
    return [catalog.items[i] for i in np.flatnonzero(mask)]


# --------------------------------------------------------------------------- #
# Loading / saving
# --------------------------------------------------------------------------- #

def load_catalog(items_path, ratings_path, schema_path, min_count=0):
    """Parse and validate the three catalog files.

    ``min_count`` > 0 drops users and items with fewer ratings than that
    (off by default; synthetic catalogs are already dense).
    """
    with open(schema_path) as fh:
        schema = FacetSchema.from_dict(json.load(fh))

    items = []
    with open(items_path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            doc = json.loads(line)
            facets = doc.get("facets", {})
            values = []
            for f, (name, _) in enumerate(schema.facets):
                if name not in facets:
                    raise CatalogError(
                        f"{items_path}:{lineno}: item {doc.get('item_id')!r} missing facet {name!r}")
                try:
                    values.append(schema.value_index(f, facets[name]))
                except CatalogError as err:
                    raise CatalogError(f"{items_path}:{lineno}: {err}") from None
            extra = set(facets) - set(schema.names)
            if extra:
                raise CatalogError(f"{items_path}:{lineno}: unknown facets {sorted(extra)}")
            items.append(Item(str(doc["item_id"]), tuple(values)))

    item_ids = {it.item_id for it in items}
    seen = {}
    ratings = []
    with open(ratings_path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            doc = json.loads(line)
            user_id, item_id = str(doc["user_id"]), str(doc["item_id"])
            rating = float(doc["rating"])
            if not np.isfinite(rating):
                raise CatalogError(f"{ratings_path}:{lineno}: non-finite rating")
            if item_id not in item_ids:
                raise CatalogError(f"{ratings_path}:{lineno}: unknown item {item_id!r}")
            key = (user_id, item_id)
            if key in seen:
                if seen[key] != rating:
                    raise CatalogError(
                        f"{ratings_path}:{lineno}: conflicting duplicate rating for {key}")
                continue  # identical duplicate, drop
            seen[key] = rating
            ratings.append(RatingEvent(user_id, item_id, rating))

    if min_count > 0:
        user_counts, item_counts = {}, {}
        for r in ratings:
            user_counts[r.user_id] = user_counts.get(r.user_id, 0) + 1
            item_counts[r.item_id] = item_counts.get(r.item_id, 0) + 1
        ratings = [r for r in ratings
                   if user_counts[r.user_id] >= min_count and item_counts[r.item_id] >= min_count]

    return Catalog(schema=schema, items=items, ratings=ratings)


def write_catalog(catalog, out_dir):
    """Write schema.json / items.jsonl / ratings.jsonl; deterministic bytes."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "schema.json"), "w") as fh:
        json.dump(catalog.schema.to_dict(), fh, indent=2)
        fh.write("\n")
    with open(os.path.join(out_dir, "items.jsonl"), "w") as fh:
        for it in catalog.items:
            facets = {name: catalog.schema.facets[f][1][it.values[f]]
                      for f, name in enumerate(catalog.schema.names)}
            fh.write(json.dumps({"item_id": it.item_id, "facets": facets}) + "\n")
    with open(os.path.join(out_dir, "ratings.jsonl"), "w") as fh:
        for r in catalog.ratings:
            fh.write(json.dumps({"user_id": r.user_id, "item_id": r.item_id, "rating": r.rating}) + "\n")


def validate_counts(n_users, n_items, n_pairs):
    """Sanity bounds for a catalog manifest (counts only, no payload)."""
    if n_users <= 0 or n_items <= 0:
        raise CatalogError("catalog must have at least one user and one item")
    if n_pairs <= 0 or n_pairs > n_users * n_items:
        raise CatalogError("pair count outside [1, users*items]")
    return {"users": n_users, "items": n_items, "pairs": n_pairs}


# --------------------------------------------------------------------------- #
# Synthetic generation
# --------------------------------------------------------------------------- #

@dataclass
class SyntheticConfig:
    n_users: int = 50
    n_items: int = 200
    # facet_spec entries: (name, value_count) or (name, [value strings])
    facet_spec: tuple = (("cuisine", 10), ("area", 5), ("price", 8), ("vibe", 4))
    ratings_per_user: int = 40
    rating_noise: float = 0.05
    seed: int = 0


def _spec_schema(facet_spec):
    facets = []
    for name, values in facet_spec:
        if isinstance(values, int):
            values = tuple(f"{name}_{k}" for k in range(values))
        facets.append((name, tuple(values)))
    return FacetSchema(tuple(facets))


def planted_fm_params(config):
    """The ground-truth 2-way FM used to draw synthetic ratings.

    Pure function of the config, so oracle tests can reconstruct it without
    touching the generated catalog. Feature layout is
    [user one-hot | item one-hot | concatenated facet one-hots].
    """
    schema = _spec_schema(config.facet_spec)
    dim = config.n_users + config.n_items + schema.state_dim
    rng = np.random.default_rng([config.seed, 7919])
    return {
        "w0": 3.0,
        "w": rng.uniform(-0.4, 0.4, size=dim),
        "v": rng.normal(0.0, 0.15, size=(dim, 2)),
    }


def planted_score(planted, x):
    """Direct 2-way FM evaluation of the planted model on feature vector x."""
    linear = planted["w0"] + planted["w"] @ x
    vx = planted["v"].T @ x  # (2,)
    interactions = 0.5 * float(np.sum(vx * vx) - np.sum((planted["v"] ** 2).T @ (x * x)))
    return float(linear + interactions)


def generate_synthetic(config):
    """Deterministic catalog with ratings planted by a known 2-way FM."""
    if config.n_users <= 0 or config.n_items <= 0:
        raise CatalogError("need at least one user and one item")
    schema = _spec_schema(config.facet_spec)
    rng = np.random.default_rng(config.seed)

    width = max(3, len(str(config.n_items - 1)))
    items = []
    for i in range(config.n_items):
        values = tuple(int(rng.integers(size)) for size in schema.sizes)
        items.append(Item(f"item_{i:0{width}d}", values))

    planted = planted_fm_params(config)
    per_user = min(config.ratings_per_user, config.n_items)
    uwidth = max(3, len(str(config.n_users - 1)))
    ratings = []
    catalog_stub = Catalog(schema=schema, items=list(items), ratings=[])
    for u in range(config.n_users):
        user_id = f"user_{u:0{uwidth}d}"
        chosen = rng.choice(config.n_items, size=per_user, replace=False)
        for i in sorted(int(c) for c in chosen):
            item = catalog_stub.items[i]
            x = np.zeros(config.n_users + config.n_items + schema.state_dim)
            x[u] = 1.0
            x[config.n_users + i] = 1.0
            x[config.n_users + config.n_items:] = catalog_stub.item_one_hot_state(item)
            y = planted_score(planted, x) + config.rating_noise * rng.normal()
            ratings.append(RatingEvent(user_id, item.item_id, round(float(y), 6)))

    return Catalog(schema=schema, items=items, ratings=ratings, planted=planted)


# --------------------------------------------------------------------------- #
# Splitting
# --------------------------------------------------------------------------- #

@dataclass
class DatasetSplit:
    train: list
    dev: list
    test: list

    def __iter__(self):
        return iter((self.train, self.dev, self.test))


def split(catalog, ratios=(0.8, 0.1, 0.1), seed=0):
    """Shuffle ratings and cut train/dev/test at the given proportions."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise CatalogError(f"ratios must sum to 1, got {ratios}")
    if not catalog.ratings:
        raise CatalogError("cannot split an empty rating set")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(catalog.ratings))
    n = len(order)
    n_train = round(ratios[0] * n)
    n_dev = min(round(ratios[1] * n), n - n_train)
    shuffled = [catalog.ratings[i] for i in order]
    return DatasetSplit(
        train=shuffled[:n_train],
        dev=shuffled[n_train:n_train + n_dev],
        test=shuffled[n_train + n_dev:],
    )
