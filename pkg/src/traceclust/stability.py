"""Cross-period stability of a fitted model under frozen cluster assignments.

For each comparison period the raw matrices are restricted to the reference
period's users, domains and buildings, rescaled, and turned into the global
association matrix and per-building descriptors using the reference model's
assignments unchanged. Periods are then scored pairwise: 100 times the cosine
similarity between the corresponding matrices read as vectors, so identical
behavior scores 100 and orthogonal behavior 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .cocluster import CoclusterModel, association_matrix
from .locations import (ContextDescriptor, DissimilarityMatrix, cosine_dissimilarity,
                        dissimilarity_matrix)
from .matrix import ContingencyMatrix, JointDistribution, scale_matrix


class EmptyOverlapError(ValueError):
    """A comparison period shares no users/domains with the reference."""


@dataclass
class PeriodMatrices:
    """Raw aggregation output for one period: global plus per-building."""

    global_matrix: ContingencyMatrix
    by_building: Mapping[str, ContingencyMatrix]


@dataclass
class CoverageStats:
    users_present: int
    users_total: int
    domains_present: int
    domains_total: int
    dropped_mass: float        # fraction of the period's mass outside the reference sets
    buildings_active: list[str]

    @property
    def user_fraction(self) -> float:
        return self.users_present / self.users_total if self.users_total else 0.0

    @property
    def domain_fraction(self) -> float:
        return self.domains_present / self.domains_total if self.domains_total else 0.0


@dataclass
class RecreatedPeriod:
    label: str
    association: np.ndarray
    descriptors: dict[str, np.ndarray]
    coverage: CoverageStats


@dataclass
class StabilityReport:
    reference: str
    periods: list[str]
    global_scores: dict[tuple[str, str], float]
    location_scores: dict[tuple[str, str], float]
    coverage: dict[str, CoverageStats]
    common_buildings: dict[tuple[str, str], int] = field(default_factory=dict)

    def to_json(self) -> dict:
        def pairs(scores):
            return [{"a": a, "b": b, "percent": v} for (a, b), v in sorted(scores.items())]
        return {
            "reference": self.reference,
            "periods": self.periods,
            "global_scores": pairs(self.global_scores),
            "location_scores": pairs(self.location_scores),
            "common_buildings": [{"a": a, "b": b, "count": v}
                                 for (a, b), v in sorted(self.common_buildings.items())],
            "coverage": {
                label: {
                    "users_present": c.users_present,
                    "users_total": c.users_total,
                    "domains_present": c.domains_present,
                    "domains_total": c.domains_total,
                    "dropped_mass": c.dropped_mass,
                    "buildings_active": c.buildings_active,
                } for label, c in sorted(self.coverage.items())
            },
        }


def stability_score(m_ref: np.ndarray, m_other: np.ndarray) -> float:
    """100 x cosine similarity between two same-shape matrices."""
    return 100.0 * (1.0 - cosine_dissimilarity(m_ref, m_other))


def recreate_period(label: str, matrices: PeriodMatrices, model: CoclusterModel,
                    reference_buildings: list[str]) -> RecreatedPeriod:
    """Restrict a period to the reference entity sets and recompute its
    association matrix and building descriptors under frozen assignments.

    Users/domains absent in the period contribute zero mass (the scaled
    distribution renormalizes over those present); entities outside the
    reference sets are dropped and accounted in the coverage stats.
    """
    users = list(model.row_assign)
    domains = list(model.col_assign)
    restricted, dropped = matrices.global_matrix.restricted(users, domains)
    pruned, zero_rows, zero_cols = restricted.pruned()
    if pruned.nnz == 0:
        raise EmptyOverlapError(f"period {label} shares no activity with the reference")
    association = association_matrix(scale_matrix(pruned), model)

    descriptors: dict[str, np.ndarray] = {}
    for building in reference_buildings:
        m = matrices.by_building.get(building)
        if m is None:
            continue
        b_restricted, _ = m.restricted(users, domains)
        b_pruned, _, _ = b_restricted.pruned()
        if b_pruned.nnz == 0:
            continue
        descriptors[building] = association_matrix(scale_matrix(b_pruned), model)

    coverage = CoverageStats(
        users_present=len(users) - zero_rows,
        users_total=len(users),
        domains_present=len(domains) - zero_cols,
        domains_total=len(domains),
        dropped_mass=dropped,
        buildings_active=sorted(descriptors),
    )
    return RecreatedPeriod(label, association, descriptors, coverage)


def recreate_matrices(p_other: JointDistribution, model: CoclusterModel,
                      descriptors_scope: Mapping[str, JointDistribution]
                      ) -> tuple[np.ndarray, DissimilarityMatrix]:
    """Association and location-dissimilarity matrices for another period's
    already-restricted joint distributions, with assignments frozen.

    `p_other` is the period's global joint distribution over (a subset of)
    the reference users/domains; `descriptors_scope` maps each active
    building to its own restricted joint distribution.
    """
    association = association_matrix(p_other, model)
    descriptors = [ContextDescriptor(b, association_matrix(jd, model))
                   for b, jd in sorted(descriptors_scope.items())]
    if len(descriptors) < 2:
        raise EmptyOverlapError("fewer than 2 active buildings in scope")
    return association, dissimilarity_matrix(descriptors)


def stability_report(reference: str, periods: Mapping[str, PeriodMatrices],
                     model: CoclusterModel) -> StabilityReport:
    """Pairwise global and location stability among all given periods.

    The reference period must be one of `periods`; its active building set
    defines the location scope. Location scores for a pair are computed over
    the buildings active in both periods.
    """
    if reference not in periods:
        raise ValueError(f"reference period {reference!r} not among the periods")
    before = (dict(model.row_assign), dict(model.col_assign))

    reference_buildings = sorted(
        b for b, m in periods[reference].by_building.items() if m.pruned()[0].nnz > 0)
    recreated = {label: recreate_period(label, matrices, model, reference_buildings)
                 for label, matrices in periods.items()}

    labels = sorted(periods, key=lambda p: (p != reference, p))
    global_scores: dict[tuple[str, str], float] = {}
    location_scores: dict[tuple[str, str], float] = {}
    common_counts: dict[tuple[str, str], int] = {}
    for i, a in enumerate(labels):
        for b in labels[i + 1:]:
            pair = (a, b)
            global_scores[pair] = stability_score(recreated[a].association,
                                                  recreated[b].association)
            common = sorted(set(recreated[a].descriptors) & set(recreated[b].descriptors))
            common_counts[pair] = len(common)
            if len(common) < 2:
                raise EmptyOverlapError(
                    f"periods {a} and {b} share {len(common)} active buildings")
            dis_a = dissimilarity_matrix([ContextDescriptor(x, recreated[a].descriptors[x])
                                          for x in common])
            dis_b = dissimilarity_matrix([ContextDescriptor(x, recreated[b].descriptors[x])
                                          for x in common])
            location_scores[pair] = stability_score(dis_a.values, dis_b.values)

    assert (dict(model.row_assign), dict(model.col_assign)) == before, \
        "stability must not modify the model"
    return StabilityReport(
        reference=reference, periods=labels,
        global_scores=global_scores, location_scores=location_scores,
        coverage={label: r.coverage for label, r in recreated.items()},
        common_buildings=common_counts)
