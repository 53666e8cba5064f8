"""Directed pipe graphs with per-edge physical parameters.

A network is a finite, connected, directed graph. Every edge carries a pipe
of positive length together with constant coefficients a (compressibility),
b (inertia) and d (damping). Vertices of degree one are ports where input
and output happen; all other vertices are interior junctions. All matrix
orderings downstream derive from the vertex and edge order given here.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

__all__ = [
    "Edge",
    "Network",
    "incidence_sign",
    "classify_vertices",
    "builtin_scenario",
    "builtin_scenarios",
    "network_from_dict",
]


@dataclass(frozen=True)
class Edge:
    """Directed pipe from vertex ``tail`` to vertex ``head``.

    Parameters
    ----------
    id : int
        Edge index (position in the network's edge list).
    tail, head : int
        Vertex indices. The orientation sign n_e(v) is -1 at the tail and
        +1 at the head.
    length : float
        Pipe length, positive.
    a, b, d : float
        Compressibility, inertia and damping coefficients, positive and
        constant along the pipe.
    """

    id: int
    tail: int
    head: int
    length: float
    a: float
    b: float
    d: float

    def __post_init__(self) -> None:
        if self.tail == self.head:
            raise ValueError(f"edge {self.id}: self-loops are not allowed")
        for name in ("length", "a", "b", "d"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"edge {self.id}: {name} must be positive, got {value}")


@dataclass(frozen=True)
class Network:
    """Connected directed graph of pipes.

    ``vertices`` is an ordered list of string identifiers, ``edges`` an
    ordered list of :class:`Edge` referring to vertex indices. Instances are
    immutable and safe to share across concurrent runs.
    """

    vertices: tuple[str, ...]
    edges: tuple[Edge, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "vertices", tuple(self.vertices))
        object.__setattr__(self, "edges", tuple(self.edges))
        nv = len(self.vertices)
        if nv == 0 or len(self.edges) == 0:
            raise ValueError("network needs at least one vertex and one edge")
        if len(set(self.vertices)) != nv:
            raise ValueError("duplicate vertex identifiers")
        for e in self.edges:
            if not (0 <= e.tail < nv and 0 <= e.head < nv):
                raise ValueError(f"edge {e.id} references unknown vertex")
        degrees = self._degrees()
        if any(deg == 0 for deg in degrees):
            isolated = [self.vertices[i] for i, deg in enumerate(degrees) if deg == 0]
            raise ValueError(f"isolated vertices: {isolated}")
        if not self._connected():
            raise ValueError("network graph is not connected")

    def _degrees(self) -> list[int]:
        deg = [0] * len(self.vertices)
        for e in self.edges:
            deg[e.tail] += 1
            deg[e.head] += 1
        return deg

    def _connected(self) -> bool:
        adj: dict[int, list[int]] = {i: [] for i in range(len(self.vertices))}
        for e in self.edges:
            adj[e.tail].append(e.head)
            adj[e.head].append(e.tail)
        seen = {0}
        stack = [0]
        while stack:
            v = stack.pop()
            for w in adj[v]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == len(self.vertices)

    def degree(self, v: int) -> int:
        return self._degrees()[v]

    def incident_edges(self, v: int) -> tuple[Edge, ...]:
        return tuple(e for e in self.edges if v in (e.tail, e.head))

    @cached_property
    def interior_vertices(self) -> tuple[int, ...]:
        return classify_vertices(self)[0]

    @cached_property
    def boundary_vertices(self) -> tuple[int, ...]:
        return classify_vertices(self)[1]


def incidence_sign(network: Network, e: int, v: int) -> int:
    """Orientation sign n_e(v): -1 if pipe e starts at v, +1 if it ends there."""
    edge = network.edges[e]
    if v == edge.tail:
        return -1
    if v == edge.head:
        return +1
    raise ValueError(f"vertex {v} is not an endpoint of edge {e}")


def classify_vertices(network: Network) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Split vertex indices into (interior, boundary) in vertex order.

    Boundary vertices (ports) are exactly the vertices of degree one;
    everything else is an interior junction.
    """
    deg = network._degrees()
    interior = tuple(i for i, d in enumerate(deg) if d >= 2)
    boundary = tuple(i for i, d in enumerate(deg) if d == 1)
    return interior, boundary


def _unit_edge(eid: int, tail: int, head: int, a=1.0, b=1.0, d=1.0) -> Edge:
    return Edge(id=eid, tail=tail, head=head, length=1.0, a=a, b=b, d=d)


def builtin_scenario(name: str, d0: float = 1.0) -> Network:
    """Return one of the built-in test networks.

    ``tp1`` is a single pipe of unit length with a = b = 1, ``tp2`` the same
    pipe split into two parts at an interior junction, and ``net7`` a
    seven-pipe diamond network with two ports. The factor ``d0`` scales the
    damping of every pipe in the scenario.
    """
    key = name.lower()
    if not d0 > 0:
        raise ValueError(f"d0 must be positive, got {d0}")
    if key == "tp1":
        return Network(("v1", "v2"), (_unit_edge(0, 0, 1, d=d0),))
    if key == "tp2":
        # vertices (v1, v2, v3); the junction v3 sits between e1 = v1->v3
        # and e2 = v3->v2 so that the port order stays (v1, v2)
        return Network(
            ("v1", "v2", "v3"),
            (_unit_edge(0, 0, 2, d=d0), _unit_edge(1, 2, 1, d=d0)),
        )
    if key in ("tp3", "net7"):
        vertices = ("v1", "v2", "v3", "v4", "v5", "v6")
        idx = {v: i for i, v in enumerate(vertices)}
        topo = [
            ("v1", "v3"), ("v3", "v4"), ("v3", "v5"), ("v4", "v5"),
            ("v4", "v6"), ("v5", "v6"), ("v6", "v2"),
        ]
        a = [4.0, 4.0, 1.0, 1.0, 1.0, 4.0, 4.0]
        b = [0.25, 0.25, 1.0, 1.0, 1.0, 0.25, 0.25]
        d = [d0 * x for x in (0.125, 0.125, 1.0, 1.0, 1.0, 0.125, 0.125)]
        edges = tuple(
            Edge(id=i, tail=idx[t], head=idx[h], length=1.0, a=a[i], b=b[i], d=d[i])
            for i, (t, h) in enumerate(topo)
        )
        return Network(vertices, edges)
    raise ValueError(f"unknown scenario {name!r}; expected tp1, tp2 or net7")


def builtin_scenarios(d0: float = 1.0) -> dict[str, Network]:
    """Catalog of the built-in test networks."""
    return {name: builtin_scenario(name, d0=d0) for name in ("tp1", "tp2", "net7")}


def network_from_dict(doc: dict) -> Network:
    """Build a network from a JSON-style document.

    Expected keys: ``vertices`` (list of string ids) and ``edges`` (list of
    objects with ``from``, ``to``, ``length``, ``a``, ``b``, ``d``).
    Raises ValueError on any schema violation.
    """
    if not isinstance(doc, dict):
        raise ValueError("network document must be an object")
    try:
        vertices = list(doc["vertices"])
        raw_edges = list(doc["edges"])
    except (KeyError, TypeError) as exc:
        raise ValueError("network document needs 'vertices' and 'edges' lists") from exc
    if not all(isinstance(v, str) for v in vertices):
        raise ValueError("vertex identifiers must be strings")
    index = {v: i for i, v in enumerate(vertices)}
    edges = []
    for i, item in enumerate(raw_edges):
        if not isinstance(item, dict):
            raise ValueError(f"edge {i} must be an object")
        try:
            tail = index[item["from"]]
            head = index[item["to"]]
        except KeyError as exc:
            raise ValueError(f"edge {i} references unknown vertex or misses from/to") from exc
        try:
            edges.append(
                Edge(
                    id=i,
                    tail=tail,
                    head=head,
                    length=float(item["length"]),
                    a=float(item["a"]),
                    b=float(item["b"]),
                    d=float(item["d"]),
                )
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"edge {i} misses or mistypes length/a/b/d") from exc
    return Network(tuple(vertices), tuple(edges))
