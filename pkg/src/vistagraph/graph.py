"""Heterogeneous visibility graph over street viewpoints and landmarks.

Node kinds:
  - svi: a street-view capture point, snapped onto the road network.
  - virtual: a connectivity placeholder -- road intersections, plus midpoints
    of road edges that carry no panoramas. Walkable, never terminal.
  - landmark: a named target.

Edge kinds:
  - proximity: undirected, between consecutive nodes along a road edge;
    carries length in meters and a stable edge_id.
  - landmark_proximity: undirected svi-landmark adjacency within a radius.
  - visibility: directed svi -> landmark, carrying the detection score.

The graph is frozen after construction in practice: all analyses here are
read-only, and walk rounds draw from per-round RNG streams so results are
independent of execution order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .detect import DetectionRecord
from .errors import EmptyDomainError, InvalidArgumentError
from .fsutil import atomic_write_text
from .geo import Landmark, PanoramaMeta

NODE_SVI = "svi"
NODE_VIRTUAL = "virtual"
NODE_LANDMARK = "landmark"

DEFAULT_SNAP_RADIUS_M = 25.0
DEFAULT_LANDMARK_RADIUS_M = 50.0
DEFAULT_WALK_ROUNDS = 2000
DEFAULT_MAX_STEPS = 80
TURN_POLICIES = ("no_backtrack", "angle_weighted")


@dataclass(frozen=True)
class Node:
    node_id: str
    kind: str
    x: float
    y: float

    @property
    def location(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass
class RoadNetwork:
    """Planar road graph: intersection nodes plus undirected edges."""

    nodes: dict[str, tuple[float, float]]
    edges: list[tuple[str, str, str]]  # (edge_id, u, v)

    def __post_init__(self) -> None:
        seen = set()
        for edge_id, u, v in self.edges:
            if edge_id in seen:
                raise InvalidArgumentError(f"duplicate road edge id {edge_id!r}")
            seen.add(edge_id)
            for n in (u, v):
                if n not in self.nodes:
                    raise InvalidArgumentError(f"road edge {edge_id!r} references unknown node {n!r}")


def proximity_edge_id(u: str, v: str) -> str:
    a, b = sorted((u, v))
    return f"{a}--{b}"


class VisibilityGraph:
    def __init__(self) -> None:
        self.nodes: dict[str, Node] = {}
        self.proximity: dict[str, dict[str, float]] = {}
        self.landmark_proximity: dict[str, dict[str, float]] = {}  # landmark -> {svi: distance}
        self.visibility: dict[str, dict[str, float]] = {}  # svi -> {landmark: score}
        self.proximity_radius: float | None = None
        self.unsnapped: list[str] = []

    # -- construction ----------------------------------------------------

    def add_node(self, node: Node) -> None:
        if node.node_id in self.nodes:
            existing = self.nodes[node.node_id]
            if existing != node:
                raise InvalidArgumentError(f"node id collision: {node.node_id!r}")
            return
        if node.kind not in (NODE_SVI, NODE_VIRTUAL, NODE_LANDMARK):
            raise InvalidArgumentError(f"unknown node kind {node.kind!r}")
        self.nodes[node.node_id] = node
        if node.kind in (NODE_SVI, NODE_VIRTUAL):
            self.proximity.setdefault(node.node_id, {})

    def add_proximity_edge(self, u: str, v: str, length: float | None = None) -> None:
        if u == v:
            raise InvalidArgumentError(f"self-loop on {u!r}")
        for n in (u, v):
            if n not in self.nodes or self.nodes[n].kind == NODE_LANDMARK:
                raise InvalidArgumentError(f"proximity edge endpoint {n!r} is not a walkable node")
        if length is None:
            length = math.dist(self.nodes[u].location, self.nodes[v].location)
        self.proximity[u][v] = length
        self.proximity[v][u] = length

    # -- views -----------------------------------------------------------

    def svi_nodes(self) -> list[Node]:
        return [n for n in self.nodes.values() if n.kind == NODE_SVI]

    def landmark_nodes(self) -> list[Node]:
        return [n for n in self.nodes.values() if n.kind == NODE_LANDMARK]

    def proximity_edges(self) -> list[tuple[str, str, str, float]]:
        """(edge_id, u, v, length) with u < v, sorted by edge_id."""
        out = []
        for u, nbrs in self.proximity.items():
            for v, length in nbrs.items():
                if u < v:
                    out.append((proximity_edge_id(u, v), u, v, length))
        return sorted(out)

    def visible_landmarks(self, node_id: str) -> list[str]:
        return sorted(self.visibility.get(node_id, {}))

    def nodes_seeing(self, landmark_id: str) -> list[str]:
        return sorted(s for s, seen in self.visibility.items() if landmark_id in seen)

    def component_count(self) -> int:
        seen: set[str] = set()
        count = 0
        for node_id in self.proximity:
            if node_id in seen:
                continue
            count += 1
            stack = [node_id]
            while stack:
                cur = stack.pop()
                if cur in seen:
                    continue
                seen.add(cur)
                stack.extend(self.proximity[cur])
        return count

    # -- persistence -------------------------------------------------------

    def to_json_obj(self) -> dict:
        return {
            "proximity_radius": self.proximity_radius,
            "unsnapped": sorted(self.unsnapped),
            "nodes": [
                {"id": n.node_id, "kind": n.kind, "x": n.x, "y": n.y}
                for n in sorted(self.nodes.values(), key=lambda n: (n.kind, n.node_id))
            ],
            "edges": {
                "proximity": [
                    {"edge_id": e, "u": u, "v": v, "length_m": l}
                    for e, u, v, l in self.proximity_edges()
                ],
                "landmark_proximity": [
                    {"landmark": lm, "svi": s, "distance_m": d}
                    for lm in sorted(self.landmark_proximity)
                    for s, d in sorted(self.landmark_proximity[lm].items())
                ],
                "visibility": [
                    {"svi": s, "landmark": lm, "score": score}
                    for s in sorted(self.visibility)
                    for lm, score in sorted(self.visibility[s].items())
                ],
            },
        }

    def save(self, path: str | Path, meta: dict | None = None) -> None:
        doc = {"meta": meta or {}, **self.to_json_obj()}
        atomic_write_text(path, json.dumps(doc, sort_keys=True, indent=1) + "\n")

    @classmethod
    def from_json_obj(cls, doc: dict) -> "VisibilityGraph":
        g = cls()
        for n in doc["nodes"]:
            g.add_node(Node(node_id=n["id"], kind=n["kind"], x=float(n["x"]), y=float(n["y"])))
        for e in doc["edges"]["proximity"]:
            g.add_proximity_edge(e["u"], e["v"], float(e["length_m"]))
        for e in doc["edges"]["landmark_proximity"]:
            g.landmark_proximity.setdefault(e["landmark"], {})[e["svi"]] = float(e["distance_m"])
        for e in doc["edges"]["visibility"]:
            g.visibility.setdefault(e["svi"], {})[e["landmark"]] = float(e["score"])
        g.proximity_radius = doc.get("proximity_radius")
        g.unsnapped = list(doc.get("unsnapped", []))
        return g

    @classmethod
    def load(cls, path: str | Path) -> "VisibilityGraph":
        return cls.from_json_obj(json.loads(Path(path).read_text(encoding="utf-8")))


def _project_to_segment(
    p: tuple[float, float], a: tuple[float, float], b: tuple[float, float]
) -> tuple[float, float]:
    """(distance to segment, arc parameter t in [0, 1])."""
    ax, ay = a
    bx, by = b
    px, py = p
    dx, dy = bx - ax, by - ay
    denom = dx * dx + dy * dy
    if denom == 0:
        return math.dist(p, a), 0.0
    t = max(0.0, min(1.0, ((px - ax) * dx + (py - ay) * dy) / denom))
    q = (ax + t * dx, ay + t * dy)
    return math.dist(p, q), t


def build_svi_graph(
    roads: RoadNetwork,
    panos: list[PanoramaMeta],
    snap_radius: float = DEFAULT_SNAP_RADIUS_M,
) -> VisibilityGraph:
    """Snap panoramas onto the road network and chain them with proximity edges.

    Panoramas on the same road edge are ordered by projected arc length and
    chained; chain ends connect to the edge's intersection nodes (virtual).
    Edges with no panoramas get a virtual midpoint node so connectivity
    survives coverage gaps. Panoramas farther than snap_radius from every
    edge are recorded in graph.unsnapped and excluded. Nearest-edge ties go
    to the lowest edge_id.
    """
    g = VisibilityGraph()
    for node_id, (x, y) in roads.nodes.items():
        g.add_node(Node(node_id=f"virtual:node:{node_id}", kind=NODE_VIRTUAL, x=x, y=y))

    by_edge: dict[str, list[tuple[float, str]]] = {e_id: [] for e_id, _, _ in roads.edges}
    pano_by_id: dict[str, PanoramaMeta] = {}
    for pano in panos:
        if pano.pano_id in pano_by_id:
            raise InvalidArgumentError(f"duplicate pano_id {pano.pano_id!r}")
        pano_by_id[pano.pano_id] = pano
        best: tuple[float, str, float] | None = None  # (distance, edge_id, t)
        for edge_id, u, v in sorted(roads.edges):
            dist, t = _project_to_segment(pano.location, roads.nodes[u], roads.nodes[v])
            if best is None or dist < best[0]:
                best = (dist, edge_id, t)
        if best is None or best[0] > snap_radius:
            g.unsnapped.append(pano.pano_id)
            continue
        by_edge[best[1]].append((best[2], pano.pano_id))

    for edge_id, u, v in sorted(roads.edges):
        end_u = f"virtual:node:{u}"
        end_v = f"virtual:node:{v}"
        if u == v:
            continue  # degenerate self-loop edge
        chain = sorted(by_edge[edge_id], key=lambda item: (item[0], item[1]))
        if not chain:
            (ux, uy), (vx, vy) = roads.nodes[u], roads.nodes[v]
            mid_id = f"virtual:edge:{edge_id}"
            g.add_node(Node(node_id=mid_id, kind=NODE_VIRTUAL, x=(ux + vx) / 2, y=(uy + vy) / 2))
            g.add_proximity_edge(end_u, mid_id)
            g.add_proximity_edge(mid_id, end_v)
            continue
        previous = end_u
        for _, pano_id in chain:
            pano = pano_by_id[pano_id]
            g.add_node(Node(node_id=pano_id, kind=NODE_SVI, x=pano.x, y=pano.y))
            g.add_proximity_edge(previous, pano_id)
            previous = pano_id
        g.add_proximity_edge(previous, end_v)
    return g


def add_landmarks(
    graph: VisibilityGraph,
    landmarks: list[Landmark],
    radius: float = DEFAULT_LANDMARK_RADIUS_M,
) -> VisibilityGraph:
    """Insert landmark nodes and landmark-proximity edges within `radius`."""
    if radius <= 0:
        raise InvalidArgumentError(f"radius must be > 0, got {radius}")
    for lm in landmarks:
        graph.add_node(Node(node_id=lm.landmark_id, kind=NODE_LANDMARK, x=lm.x, y=lm.y))
        near = {}
        for svi in graph.svi_nodes():
            d = math.dist(svi.location, lm.location)
            if d <= radius:
                near[svi.node_id] = d
        graph.landmark_proximity[lm.landmark_id] = near
    graph.proximity_radius = radius
    return graph


def add_visibility(graph: VisibilityGraph, records: list[DetectionRecord]) -> VisibilityGraph:
    """One visibility edge per visible record; idempotent on re-ingestion."""
    for rec in records:
        if not rec.visible:
            continue
        node = graph.nodes.get(rec.pano_id)
        if node is None or node.kind != NODE_SVI:
            raise InvalidArgumentError(f"detection references unknown SVI node {rec.pano_id!r}")
        lm_node = graph.nodes.get(rec.landmark_id)
        if lm_node is None or lm_node.kind != NODE_LANDMARK:
            raise InvalidArgumentError(
                f"detection references unknown landmark node {rec.landmark_id!r}"
            )
        existing = graph.visibility.setdefault(rec.pano_id, {})
        existing[rec.landmark_id] = max(existing.get(rec.landmark_id, 0.0), rec.score)
    return graph


@dataclass(frozen=True)
class IntervisibilityResult:
    landmark_ids: tuple[str, ...]
    weights: dict[tuple[str, str], int]  # (observing landmark, seen landmark) -> count

    def weight(self, observing: str, seen: str) -> int:
        return self.weights.get((observing, seen), 0)

    def matrix(self) -> np.ndarray:
        n = len(self.landmark_ids)
        out = np.zeros((n, n), dtype=int)
        index = {lm: i for i, lm in enumerate(self.landmark_ids)}
        for (b, a), w in self.weights.items():
            out[index[b], index[a]] = w
        return out

    def intervisible_pairs(self) -> list[tuple[str, str]]:
        pairs = []
        for i, a in enumerate(self.landmark_ids):
            for b in self.landmark_ids[i + 1:]:
                if self.weight(a, b) > 0 and self.weight(b, a) > 0:
                    pairs.append((a, b))
        return pairs


def intervisibility(
    graph: VisibilityGraph,
    radius: float | None = None,
) -> IntervisibilityResult:
    """weight(B -> A): SVI nodes within `radius` of landmark B that see A.

    With radius None the landmark-proximity edges already on the graph are
    used; passing a radius recomputes neighborhoods from node locations.
    """
    landmark_ids = tuple(sorted(n.node_id for n in graph.landmark_nodes()))
    weights: dict[tuple[str, str], int] = {}
    for b in landmark_ids:
        if radius is None:
            near = graph.landmark_proximity.get(b, {})
        else:
            b_node = graph.nodes[b]
            near = {
                s.node_id: math.dist(s.location, b_node.location)
                for s in graph.svi_nodes()
                if math.dist(s.location, b_node.location) <= radius
            }
        for svi_id in near:
            for a in graph.visibility.get(svi_id, {}):
                if a == b:
                    continue
                weights[(b, a)] = weights.get((b, a), 0) + 1
    return IntervisibilityResult(landmark_ids=landmark_ids, weights=weights)


@dataclass(frozen=True)
class CoexistenceHyperedge:
    landmark_ids: tuple[str, ...]  # sorted, size >= 2
    count: int


def coexistence(graph: VisibilityGraph, count_subsets: bool = False) -> list[CoexistenceHyperedge]:
    """Landmark sets jointly visible from single SVI nodes, with frequencies.

    By default each node contributes its exact visible set once; with
    count_subsets every size->=2 subset of the node's set is rolled up too.
    Output sorts by count descending, then lexicographically.
    """
    from itertools import combinations

    counts: dict[tuple[str, ...], int] = {}
    for svi in graph.svi_nodes():
        seen = sorted(graph.visibility.get(svi.node_id, {}))
        if len(seen) < 2:
            continue
        if count_subsets:
            for size in range(2, len(seen) + 1):
                for combo in combinations(seen, size):
                    counts[combo] = counts.get(combo, 0) + 1
        else:
            key = tuple(seen)
            counts[key] = counts.get(key, 0) + 1
    edges = [CoexistenceHyperedge(landmark_ids=k, count=c) for k, c in counts.items()]
    return sorted(edges, key=lambda e: (-e.count, e.landmark_ids))


@dataclass(frozen=True)
class VavPath:
    origin_landmark: str
    destination_landmark: str | None
    nodes: tuple[str, ...]
    valid: bool
    round_index: int

    @property
    def step_count(self) -> int:
        return len(self.nodes) - 1

    def to_json_obj(self) -> dict:
        return {
            "round": self.round_index,
            "origin": self.origin_landmark,
            "destination": self.destination_landmark,
            "valid": self.valid,
            "nodes": list(self.nodes),
        }


def _terminal_landmark(graph: VisibilityGraph, node_id: str, origin: str) -> str | None:
    others = [lm for lm in graph.visibility.get(node_id, {}) if lm != origin]
    return min(others) if others else None


def _turn_weights(
    graph: VisibilityGraph, prev: str | None, curr: str, neighbors: list[str]
) -> np.ndarray:
    """Weight forward motion by cos^2(theta/2) of the turn angle."""
    if prev is None:
        return np.ones(len(neighbors))
    px, py = graph.nodes[prev].location
    cx, cy = graph.nodes[curr].location
    vin = (cx - px, cy - py)
    norm_in = math.hypot(*vin)
    weights = np.zeros(len(neighbors))
    for i, n in enumerate(neighbors):
        nx, ny = graph.nodes[n].location
        vout = (nx - cx, ny - cy)
        norm_out = math.hypot(*vout)
        if norm_in == 0 or norm_out == 0:
            weights[i] = 0.5
            continue
        cos_theta = (vin[0] * vout[0] + vin[1] * vout[1]) / (norm_in * norm_out)
        cos_theta = max(-1.0, min(1.0, cos_theta))
        weights[i] = (1.0 + cos_theta) / 2.0  # cos^2(theta/2)
    return weights


def vav_walk(
    graph: VisibilityGraph,
    origin_landmark: str,
    rounds: int = DEFAULT_WALK_ROUNDS,
    max_steps: int = DEFAULT_MAX_STEPS,
    seed: int = 0,
    turn_policy: str = "no_backtrack",
) -> list[VavPath]:
    """Random-walk search for paths from an origin landmark's viewpoints to
    any other landmark's viewpoints.

    Each round starts at a uniformly random SVI node visible to the origin
    and walks proximity edges under the turn policy until it reaches a node
    visible to a different landmark (success, step 0 allowed) or exhausts
    max_steps. One RNG stream per round keeps output independent of
    execution order; a fixed seed reproduces paths exactly.
    """
    if turn_policy not in TURN_POLICIES:
        raise InvalidArgumentError(f"unknown turn policy {turn_policy!r}; use one of {TURN_POLICIES}")
    if rounds < 1:
        raise InvalidArgumentError(f"rounds must be >= 1, got {rounds}")
    if max_steps < 0:
        raise InvalidArgumentError(f"max_steps must be >= 0, got {max_steps}")
    starts = graph.nodes_seeing(origin_landmark)
    if not starts:
        raise EmptyDomainError(f"no SVI node is visible to landmark {origin_landmark!r}")

    paths = []
    for round_index in range(rounds):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(round_index,)))
        curr = starts[int(rng.integers(len(starts)))]
        nodes = [curr]
        prev: str | None = None
        dest = _terminal_landmark(graph, curr, origin_landmark)
        while dest is None and len(nodes) - 1 < max_steps:
            neighbors = sorted(graph.proximity.get(curr, {}))
            if not neighbors:
                break
            if turn_policy == "no_backtrack":
                candidates = [n for n in neighbors if n != prev] or [prev]
                nxt = candidates[int(rng.integers(len(candidates)))]
            else:
                weights = _turn_weights(graph, prev, curr, neighbors)
                total = weights.sum()
                if total <= 0:
                    nxt = neighbors[int(rng.integers(len(neighbors)))]
                else:
                    nxt = neighbors[int(rng.choice(len(neighbors), p=weights / total))]
            prev, curr = curr, nxt
            nodes.append(curr)
            dest = _terminal_landmark(graph, curr, origin_landmark)
        paths.append(
            VavPath(
                origin_landmark=origin_landmark,
                destination_landmark=dest,
                nodes=tuple(nodes),
                valid=dest is not None,
                round_index=round_index,
            )
        )
    return paths


@dataclass(frozen=True)
class LinkingStrength:
    directional: dict[tuple[str, str], float]  # (origin, destination) -> strength
    symmetric: dict[tuple[str, str], float]  # sorted pair -> mean of both directions

    def strength(self, origin: str, destination: str) -> float:
        return self.directional.get((origin, destination), 0.0)


def linking_strength(paths: list[VavPath], rounds: int) -> LinkingStrength:
    """Valid-path counts normalized by the rounds launched per origin."""
    if rounds <= 0:
        raise InvalidArgumentError(f"rounds must be > 0, got {rounds}")
    counts: dict[tuple[str, str], int] = {}
    for p in paths:
        if p.valid and p.destination_landmark is not None:
            key = (p.origin_landmark, p.destination_landmark)
            counts[key] = counts.get(key, 0) + 1
    directional = {k: c / rounds for k, c in counts.items()}
    pairs = {tuple(sorted((o, d))) for o, d in directional}
    symmetric = {
        pair: (directional.get((pair[0], pair[1]), 0.0) + directional.get((pair[1], pair[0]), 0.0)) / 2
        for pair in pairs
    }
    return LinkingStrength(directional=directional, symmetric=symmetric)


def path_edge_ids(path: VavPath) -> set[str]:
    return {proximity_edge_id(u, v) for u, v in zip(path.nodes, path.nodes[1:])}


@dataclass(frozen=True)
class CorridorStat:
    tag: str
    path_count: int
    share: float


def corridor_stats(paths: list[VavPath], edge_tags: dict[str, str]) -> list[CorridorStat]:
    """Count valid paths traversing at least one edge of each tag.

    Shares are relative to the number of valid paths.
    """
    valid = [p for p in paths if p.valid]
    tags = sorted(set(edge_tags.values()))
    by_tag: dict[str, set[str]] = {t: set() for t in tags}
    for edge_id, tag in edge_tags.items():
        by_tag[tag].add(edge_id)
    out = []
    for tag in tags:
        count = sum(1 for p in valid if path_edge_ids(p) & by_tag[tag])
        share = count / len(valid) if valid else 0.0
        out.append(CorridorStat(tag=tag, path_count=count, share=share))
    return out


def removal_impact(
    graph: VisibilityGraph,
    paths: list[VavPath],
    edge_ids: set[str],
) -> float:
    """Share of formerly valid paths severed when the given edges are deleted.

    Each recorded path is replayed against the pruned adjacency; a path is
    cut iff one of its steps used a removed edge.
    """
    valid = [p for p in paths if p.valid]
    if not valid:
        return 0.0
    pruned: dict[str, set[str]] = {u: set(nbrs) for u, nbrs in graph.proximity.items()}
    for e, u, v, _ in graph.proximity_edges():
        if e in edge_ids:
            pruned[u].discard(v)
            pruned[v].discard(u)
    cut = 0
    for p in valid:
        for u, v in zip(p.nodes, p.nodes[1:]):
            if v not in pruned.get(u, set()):
                cut += 1
                break
    return cut / len(valid)


def write_paths(path: str | Path, paths: list[VavPath], meta: dict | None = None) -> None:
    header = {"header": {"schema": "vistagraph-vavpaths/1", **(meta or {})}}
    lines = [json.dumps(header, sort_keys=True)]
    lines.extend(json.dumps(p.to_json_obj(), sort_keys=True) for p in paths)
    atomic_write_text(path, "\n".join(lines) + "\n")


__all__ = [
    "CoexistenceHyperedge",
    "CorridorStat",
    "DEFAULT_LANDMARK_RADIUS_M",
    "DEFAULT_MAX_STEPS",
    "DEFAULT_SNAP_RADIUS_M",
    "DEFAULT_WALK_ROUNDS",
    "IntervisibilityResult",
    "LinkingStrength",
    "Node",
    "RoadNetwork",
    "TURN_POLICIES",
    "VavPath",
    "VisibilityGraph",
    "add_landmarks",
    "add_visibility",
    "build_svi_graph",
    "coexistence",
    "corridor_stats",
    "intervisibility",
    "linking_strength",
    "path_edge_ids",
    "proximity_edge_id",
    "removal_impact",
    "vav_walk",
    "write_paths",
]
