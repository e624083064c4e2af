"""OpenStreetMap XML parsing into an in-memory road graph."""

from __future__ import annotations

import warnings
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field


class MalformedXml(ValueError):
    """Input is not parseable OSM XML."""


class EmptyExtractWarning(UserWarning):
    """Extract contains zero nodes."""


@dataclass(frozen=True)
class OsmNode:
    id: int
    lat: float
    lon: float
    tags: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class OsmWay:
    id: int
    node_refs: tuple[int, ...]
    tags: dict[str, str] = field(default_factory=dict)


@dataclass
class ParseReport:
    n_nodes: int = 0
    n_ways: int = 0
    n_relations: int = 0
    dropped_ways: list[int] = field(default_factory=list)
    duplicate_ids: int = 0


@dataclass
class OsmGraph:
    """Parsed nodes/ways/relations plus a node -> (way, position) membership index.

    Immutable after construction; safe to share across threads. Relations are
    carried as (type, ref, role) member lists with their tags alongside;
    nothing downstream consumes them.
    """

    nodes: dict[int, OsmNode]
    ways: dict[int, OsmWay]
    relations: dict[int, list[tuple[str, int, str]]]
    way_node_index: dict[int, tuple[tuple[int, int], ...]]
    report: ParseReport
    relation_tags: dict[int, dict[str, str]] = field(default_factory=dict)

    def ways_through_node(self, node_id: int) -> tuple[tuple[int, int], ...]:
        """All (way id, position) memberships of a node, O(1)."""
        return self.way_node_index.get(node_id, ())


def _read_tags(elem: ET.Element) -> dict[str, str]:
    tags = {}
    for child in elem:
        if child.tag == "tag":
            k = child.get("k")
            v = child.get("v")
            if k is not None and v is not None:
                tags[k] = v
    return tags


def parse_osm(xml_bytes: bytes) -> OsmGraph:
    """Parse OSM XML v0.6 bytes into an OsmGraph.

    Ways referencing nodes that are absent from the extract (routine for
    bounding-box clipped files) are dropped whole and listed in the report.
    A zero-node extract raises only an EmptyExtractWarning.
    """
    try:
        root = ET.fromstring(xml_bytes)
    except ET.ParseError as exc:
        raise MalformedXml(f"unparseable OSM XML: {exc}") from exc
    if root.tag != "osm":
        raise MalformedXml(f"top-level element is <{root.tag}>, expected <osm>")

    report = ParseReport()
    nodes: dict[int, OsmNode] = {}
    ways: dict[int, OsmWay] = {}
    relations: dict[int, list[tuple[str, int, str]]] = {}
    relation_tags: dict[int, dict[str, str]] = {}

    for elem in root:
        if elem.tag == "node":
            nid = int(elem.get("id"))
            if nid in nodes:
                report.duplicate_ids += 1
            nodes[nid] = OsmNode(
                id=nid,
                lat=float(elem.get("lat")),
                lon=float(elem.get("lon")),
                tags=_read_tags(elem),
            )
        elif elem.tag == "way":
            wid = int(elem.get("id"))
            refs = tuple(int(nd.get("ref")) for nd in elem if nd.tag == "nd")
            if wid in ways:
                report.duplicate_ids += 1
            ways[wid] = OsmWay(id=wid, node_refs=refs, tags=_read_tags(elem))
        elif elem.tag == "relation":
            rid = int(elem.get("id"))
            members = [
                (m.get("type", ""), int(m.get("ref")), m.get("role", ""))
                for m in elem
                if m.tag == "member" and m.get("ref") is not None
            ]
            relations[rid] = members
            relation_tags[rid] = _read_tags(elem)

    # Drop ways with unresolvable refs or fewer than 2 nodes.
    resolved: dict[int, OsmWay] = {}
    for wid, way in ways.items():
        if len(way.node_refs) >= 2 and all(r in nodes for r in way.node_refs):
            resolved[wid] = way
        else:
            report.dropped_ways.append(wid)

    index: dict[int, list[tuple[int, int]]] = {}
    for wid, way in resolved.items():
        for pos, nid in enumerate(way.node_refs):
            index.setdefault(nid, []).append((wid, pos))
    frozen_index = {nid: tuple(sorted(ms)) for nid, ms in index.items()}

    report.n_nodes = len(nodes)
    report.n_ways = len(resolved)
    report.n_relations = len(relations)

    if not nodes:
        warnings.warn("OSM extract contains zero nodes", EmptyExtractWarning)

    return OsmGraph(
        nodes=nodes,
        ways=resolved,
        relations=relations,
        way_node_index=frozen_index,
        report=report,
        relation_tags=relation_tags,
    )


def highway_ways(graph: OsmGraph) -> list[int]:
    """Ids of ways carrying a `highway` tag, ascending."""
    return sorted(w.id for w in graph.ways.values() if "highway" in w.tags)
