"""Domain types shared by every stage of the pipeline.

Countries are the only KG nodes; commodities stay as plain features of
:class:`TradeRecord`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

import numpy as np

from .errors import InvalidLabel, ShapeError, UnknownEntity


class Norm(str, Enum):
    L1 = "L1"
    L2 = "L2"


@dataclass(frozen=True, order=True)
class EntityId:
    label: str
    index: int

    def __str__(self):
        return self.label


class EntityRegistry:
    """Single-writer label -> EntityId interning table with dense indices."""

    def __init__(self, labels: Iterable[str] = ()):
        self._by_label: dict[str, EntityId] = {}
        self._ids: list[EntityId] = []
        for label in labels:
            self.intern(label)

    def intern(self, label: str) -> EntityId:
        if not isinstance(label, str) or not label:
            raise InvalidLabel(f"entity label must be a non-empty string, got {label!r}")
        eid = self._by_label.get(label)
        if eid is None:
            eid = EntityId(label, len(self._ids))
            self._by_label[label] = eid
            self._ids.append(eid)
        return eid

    def get(self, label: str) -> EntityId:
        try:
            return self._by_label[label]
        except KeyError:
            raise UnknownEntity(f"unknown entity {label!r}") from None

    def __contains__(self, label):
        return label in self._by_label

    def __len__(self):
        return len(self._ids)

    def __iter__(self):
        return iter(self._ids)

    @property
    def labels(self) -> list[str]:
        return [e.label for e in self._ids]


def intern_entity(label: str, registry: EntityRegistry) -> EntityId:
    return registry.intern(label)


def band_name(ordinal: int) -> str:
    return f"gravity_band_{ordinal}"


@dataclass(frozen=True, order=True)
class RelationLabel:
    name: str
    band_ordinal: int

    @classmethod
    def for_band(cls, ordinal: int) -> "RelationLabel":
        return cls(band_name(ordinal), ordinal)

    def __str__(self):
        return self.name


@dataclass(frozen=True, order=True)
class Triple:
    head: EntityId
    relation: RelationLabel
    tail: EntityId

    def as_labels(self) -> tuple[str, str, str]:
        return self.head.label, self.relation.name, self.tail.label


@dataclass(frozen=True)
class TradeRecord:
    """One monthly bilateral flow joined with its yearly gravity covariates.

    Validation lives in :meth:`check` rather than ``__post_init__`` because
    log-transformed copies legitimately hold non-positive covariates.
    """

    year: int
    month: int
    reporter: EntityId
    partner: EntityId
    commodity: str
    trade_value: float
    gdp_reporter: float
    gdp_partner: float
    harmonic_distance: float

    def check(self) -> None:
        from .errors import DomainError

        if not 1 <= self.month <= 12:
            raise DomainError(f"month {self.month} outside [1, 12]")
        if not self.trade_value >= 0:
            raise DomainError(f"negative trade value {self.trade_value}")
        if not (self.gdp_reporter > 0 and self.gdp_partner > 0):
            raise DomainError("GDP must be positive")
        if not self.harmonic_distance > 0:
            raise DomainError("harmonic distance must be positive")


@dataclass(frozen=True, order=True)
class GravityScore:
    year: int
    pair: tuple[EntityId, EntityId]
    score: float
    constant_G: float = 1.0


@dataclass(frozen=True)
class KnowledgeGraph:
    entities: tuple[EntityId, ...]
    relations: tuple[RelationLabel, ...]
    triples: tuple[Triple, ...]

    @classmethod
    def from_triples(cls, triples: Iterable[Triple], entities: Iterable[EntityId] = ()) -> "KnowledgeGraph":
        """Deduplicate, sort, and re-index entities densely by label."""
        triples = list(triples)
        labels = {e.label for e in entities}
        for t in triples:
            labels.add(t.head.label)
            labels.add(t.tail.label)
        registry = EntityRegistry(sorted(labels))
        rels = sorted({t.relation for t in triples}, key=lambda r: (r.band_ordinal, r.name))
        seen = set()
        out = []
        for t in triples:
            key = t.as_labels()
            if key in seen:
                continue
            seen.add(key)
            out.append(Triple(registry.get(t.head.label), t.relation, registry.get(t.tail.label)))
        out.sort(key=lambda t: (t.head.index, t.relation.band_ordinal, t.tail.index))
        return cls(tuple(registry), tuple(rels), tuple(out))

    def entity(self, label: str) -> EntityId:
        for e in self.entities:
            if e.label == label:
                return e
        raise UnknownEntity(f"unknown entity {label!r}")

    def relation(self, name: str) -> RelationLabel:
        for r in self.relations:
            if r.name == name:
                return r
        raise UnknownEntity(f"unknown relation {name!r}")

    def pairs(self) -> list[tuple[str, str]]:
        """Sorted unordered country pairs carrying at least one triple."""
        return sorted({tuple(sorted((t.head.label, t.tail.label))) for t in self.triples})

    def __len__(self):
        return len(self.triples)


def validate_triple(t: Triple, kg: KnowledgeGraph) -> bool:
    ents = {(e.label, e.index) for e in kg.entities}
    return (
        (t.head.label, t.head.index) in ents
        and (t.tail.label, t.tail.index) in ents
        and t.relation in kg.relations
        and t.head.label != t.tail.label
    )


@dataclass
class EmbeddingSpace:
    """Entity and relation vectors stored as dense matrices, keyed by label."""

    dimension: int
    entity_labels: tuple[str, ...]
    entity_matrix: np.ndarray
    relation_names: tuple[str, ...]
    relation_matrix: np.ndarray
    norm: Norm = Norm.L1
    _ent_index: dict = field(init=False, repr=False, compare=False)
    _rel_index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.norm = Norm(self.norm)
        self.entity_matrix = np.asarray(self.entity_matrix, dtype=float)
        self.relation_matrix = np.asarray(self.relation_matrix, dtype=float).reshape(-1, self.dimension)
        if self.entity_matrix.shape != (len(self.entity_labels), self.dimension):
            raise ShapeError(f"entity matrix shape {self.entity_matrix.shape} does not match labels/dimension")
        if self.relation_matrix.shape != (len(self.relation_names), self.dimension):
            raise ShapeError(f"relation matrix shape {self.relation_matrix.shape} does not match names/dimension")
        self._ent_index = {l: i for i, l in enumerate(self.entity_labels)}
        self._rel_index = {r: i for i, r in enumerate(self.relation_names)}

    def entity_index(self, entity) -> int:
        label = getattr(entity, "label", entity)
        try:
            return self._ent_index[label]
        except KeyError:
            raise UnknownEntity(f"entity {label!r} is not embedded") from None

    def relation_index(self, relation) -> int:
        name = getattr(relation, "name", relation)
        try:
            return self._rel_index[name]
        except KeyError:
            raise UnknownEntity(f"relation {name!r} is not embedded") from None

    def entity(self, entity) -> np.ndarray:
        return self.entity_matrix[self.entity_index(entity)]

    def relation(self, relation) -> np.ndarray:
        return self.relation_matrix[self.relation_index(relation)]

    @property
    def entity_vectors(self) -> dict[str, np.ndarray]:
        return dict(zip(self.entity_labels, self.entity_matrix))

    @property
    def relation_vectors(self) -> dict[str, np.ndarray]:
        return dict(zip(self.relation_names, self.relation_matrix))

    def copy(self) -> "EmbeddingSpace":
        return EmbeddingSpace(self.dimension, self.entity_labels, self.entity_matrix.copy(),
                              self.relation_names, self.relation_matrix.copy(), self.norm)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.entity_matrix).all() and np.isfinite(self.relation_matrix).all())
