"""Mobility-aware subcarrier assignment.

Least-mobile nodes get the least widely available subcarriers; the most
mobile nodes get the subcarriers that stay white space across most of the
BS coverage area.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Sequence

from .baseband import Subcarrier


class AssignmentError(ValueError):
    pass


@dataclass(frozen=True)
class MobilityProfile:
    node_id: Hashable
    mobility_rate: float = 0.0

    def __post_init__(self):
        if self.mobility_rate < 0:
            raise AssignmentError("mobility rate must be non-negative")


@dataclass(frozen=True)
class AvailabilityScore:
    subcarrier: Subcarrier
    cell_count: int

    def __post_init__(self):
        if self.cell_count < 0:
            raise AssignmentError("cell count must be non-negative")


def order_nodes(profiles: Sequence[MobilityProfile]) -> list:
    """Stationary first; ties by node id."""
    return [p.node_id for p in sorted(profiles, key=lambda p: (p.mobility_rate, p.node_id))]


def order_subcarriers(scores: Sequence[AvailabilityScore]) -> list[Subcarrier]:
    """Least widely available first; ties by center frequency."""
    return [s.subcarrier for s in sorted(scores, key=lambda s: (s.cell_count, s.subcarrier.center_freq))]


def subcarrier_loads(n: int, m: int) -> list[int]:
    """ceil(n/m) for the first n mod m subcarriers, floor(n/m) for the rest."""
    if m == 0:
        if n:
            raise AssignmentError("no subcarriers to assign nodes to")
        return []
    q, r = divmod(n, m)
    if r == 0:
        return [q] * m
    return [q + 1] * r + [q] * (m - r)


def assign(nodes: Sequence, subcarriers: Sequence[Subcarrier]) -> dict:
    """Walk both orders in lockstep, filling each subcarrier with its share."""
    loads = subcarrier_loads(len(nodes), len(subcarriers))
    out = {}
    it = iter(nodes)
    for sc, load in zip(subcarriers, loads):
        for _ in range(load):
            out[next(it)] = sc
    return out


def mobility_aware_assignment(
    profiles: Sequence[MobilityProfile], scores: Sequence[AvailabilityScore]
) -> dict:
    return assign(order_nodes(profiles), order_subcarriers(scores))
