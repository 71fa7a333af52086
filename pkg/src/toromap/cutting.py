"""Cut graphs for genus-one meshes and cutting a torus mesh into a disk.

A cut graph is a pair of simple edge loops through a shared base vertex
whose homology classes generate the torus; cutting along both yields a
topological disk whose boundary runs each loop twice.  Vertices on the
loops are duplicated (the base vertex is quadrupled) and the resulting
copy pairs form the seam correspondence used by the planar solvers.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as _csgraph_dijkstra

from .mesh import MeshError, TriangleMesh, edge_face_incidence, euler_genus, mesh_edges
from .torus import TorusSpec, inverse_project

__all__ = [
    "CutGraph",
    "SeamCorrespondence",
    "compute_cut_graph",
    "cut_along",
    "glue_cut",
]


@dataclass(frozen=True)
class CutGraph:
    """Two simple loops through ``base_vertex`` meeting only there.

    ``loop_a`` and ``loop_b`` are ordered vertex cycles (first entry is the
    base vertex; the closing edge back to it is implicit).  Cutting along
    ``loop_a`` separates the seam family whose copies differ by the v
    period; ``loop_b`` separates the u-period family.
    """

    loop_a: np.ndarray
    loop_b: np.ndarray
    base_vertex: int

    def __post_init__(self):
        object.__setattr__(self, "loop_a", np.asarray(self.loop_a, dtype=np.int64))
        object.__setattr__(self, "loop_b", np.asarray(self.loop_b, dtype=np.int64))


@dataclass(frozen=True)
class SeamCorrespondence:
    """Copy pairs produced by cutting, plus the copy-to-source map.

    ``pairs_tb[k] = (bottom, top)`` and ``pairs_lr[k] = (left, right)`` hold
    cut-mesh vertex indices; the four corner copies of the base vertex
    appear in both families.  ``source_vertex[c]`` is the original vertex a
    cut-mesh vertex ``c`` was copied from.  Pair orientation (which copy is
    bottom/left) is normalized once planar coordinates exist.
    """

    pairs_tb: np.ndarray
    pairs_lr: np.ndarray
    corner_ids: np.ndarray
    source_vertex: np.ndarray


def _validate_cut_graph(mesh: TriangleMesh, cut: CutGraph) -> None:
    edge_set = {tuple(e) for e in np.sort(mesh_edges(mesh.faces)[0], axis=1).tolist()}
    for name, loop in (("loop_a", cut.loop_a), ("loop_b", cut.loop_b)):
        if len(loop) < 3:
            raise MeshError(f"{name} must have at least 3 vertices")
        if len(set(loop.tolist())) != len(loop):
            raise MeshError(f"{name} repeats a vertex")
        if loop[0] != cut.base_vertex:
            raise MeshError(f"{name} must start at the base vertex")
        for p, q in zip(loop, np.roll(loop, -1)):
            key = (int(p), int(q)) if p < q else (int(q), int(p))
            if key not in edge_set:
                raise MeshError(f"{name} uses non-edge ({int(p)}, {int(q)})")
    shared = set(cut.loop_a.tolist()) & set(cut.loop_b.tolist())
    if shared != {int(cut.base_vertex)}:
        raise MeshError(f"cut loops must intersect only at the base vertex, got {sorted(shared)}")


def _rotate_loop(loop: list[int], start: int) -> np.ndarray:
    i = loop.index(start)
    return np.asarray(loop[i:] + loop[:i], dtype=np.int64)


def _edge_lengths(mesh: TriangleMesh, edges: np.ndarray) -> np.ndarray:
    d = mesh.vertices[edges[:, 0]] - mesh.vertices[edges[:, 1]]
    return np.linalg.norm(d, axis=1)


class _DSU:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[max(ra, rb)] = min(ra, rb)
        return True


# ---------------------------------------------------------------------------
# Cut-graph construction


def compute_cut_graph(
    mesh: TriangleMesh, base_vertex: int = 0, torus: TorusSpec | None = None
) -> CutGraph:
    """Two homology-generator loops through ``base_vertex``.

    Without ``torus``, loops are seeded by a tree-cotree decomposition
    (shortest-path tree from the base, dual spanning cotree, two leftover
    edges) and then rebuilt as shortest cycles so that they are simple and
    meet only at the base.  With ``torus`` given and the mesh lying on that
    torus, the loops are the shortest cycles through the base winding once
    toroidally (loop_a) and once poloidally (loop_b), so the planar seams
    of the cut line up with the coordinate axes.
    """
    if euler_genus(mesh) != 1:
        raise MeshError(f"cut graph requires a genus-one mesh, got genus {euler_genus(mesh)}")
    if not 0 <= base_vertex < mesh.n_vertices:
        raise MeshError(f"base vertex {base_vertex} out of range")
    if torus is not None:
        cut = _torus_cut_graph(mesh, base_vertex, torus)
    else:
        cut = _tree_cotree_cut_graph(mesh, base_vertex)
    _validate_cut_graph(mesh, cut)
    return cut


def _adjacency(mesh: TriangleMesh) -> tuple[dict[int, list[int]], dict[tuple[int, int], float]]:
    edges = mesh_edges(mesh.faces)[0]
    lengths = _edge_lengths(mesh, edges)
    adj: dict[int, list[int]] = {}
    length_of: dict[tuple[int, int], float] = {}
    for (a, b), w in zip(edges.tolist(), lengths.tolist()):
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
        length_of[(a, b)] = w
        length_of[(b, a)] = w
    for v in adj:
        adj[v].sort()
    return adj, length_of


def _torus_cut_graph(mesh: TriangleMesh, base: int, torus: TorusSpec) -> CutGraph:
    uv = inverse_project(mesh.vertices, torus)
    adj, length_of = _adjacency(mesh)
    periods = torus.periods

    # Per directed edge, the coordinate wrap incurred by traversing it.
    def winding(p: int, q: int) -> tuple[int, int]:
        d = uv[q] - uv[p]
        k = np.round(d / periods)
        return int(-k[0]), int(-k[1])

    loop_a = _shortest_winding_cycle(adj, length_of, winding, base, (1, 0), frozenset())
    forbidden = frozenset(int(v) for v in loop_a if v != base)
    loop_b = _shortest_winding_cycle(adj, length_of, winding, base, (0, 1), forbidden)
    return CutGraph(np.asarray(loop_a), np.asarray(loop_b), base)


def _shortest_winding_cycle(adj, length_of, winding, base, target, forbidden, max_tries=6):
    """Shortest simple cycle through ``base`` with the given winding class."""
    banned = set(forbidden)
    for _ in range(max_tries):
        path = _winding_dijkstra(adj, length_of, winding, base, target, banned)
        if path is None:
            raise MeshError(f"no cycle of winding class {target} through vertex {base}")
        cycle = path[:-1]
        seen: dict[int, int] = {}
        dup = None
        for v in cycle:
            if v in seen:
                dup = v
                break
            seen[v] = 1
        if dup is None:
            return cycle
        banned.add(dup)  # self-crossing lift; forbid the repeated vertex and retry
    raise MeshError(f"could not find a simple cycle of winding class {target}")


def _winding_dijkstra(adj, length_of, winding, base, target, banned):
    # States are (vertex, wrap_u, wrap_v); the base vertex may only appear
    # as the start state or as the target state.
    lo, hi = -1, 2
    start = (base, 0, 0)
    goal = (base, target[0], target[1])
    dist = {start: 0.0}
    prev: dict[tuple[int, int, int], tuple[int, int, int]] = {}
    heap = [(0.0, start)]
    while heap:
        d, state = heapq.heappop(heap)
        if d > dist.get(state, np.inf):
            continue
        if state == goal:
            path = [state]
            while path[-1] != start:
                path.append(prev[path[-1]])
            return [s[0] for s in reversed(path)]
        v, a, b = state
        for w in adj[v]:
            if w in banned:
                continue
            ku, kv = winding(v, w)
            na, nb = a + ku, b + kv
            if not (lo <= na <= hi and lo <= nb <= hi):
                continue
            nstate = (w, na, nb)
            if w == base and nstate != goal:
                continue
            nd = d + length_of[(v, w)]
            if nd < dist.get(nstate, np.inf):
                dist[nstate] = nd
                prev[nstate] = state
                heapq.heappush(heap, (nd, nstate))
    return None


def _tree_cotree_cut_graph(mesh: TriangleMesh, base: int) -> CutGraph:
    edges = mesh_edges(mesh.faces)[0]
    lengths = _edge_lengths(mesh, edges)
    n = mesh.n_vertices
    graph = csr_matrix(
        (np.concatenate([lengths, lengths]),
         (np.concatenate([edges[:, 0], edges[:, 1]]),
          np.concatenate([edges[:, 1], edges[:, 0]]))),
        shape=(n, n),
    )
    dist, pred = _csgraph_dijkstra(graph, indices=base, return_predecessors=True)
    if not np.isfinite(dist).all():
        raise MeshError("mesh is not connected")

    tree = {tuple(sorted((int(v), int(pred[v])))) for v in range(n) if v != base}
    incidence = edge_face_incidence(mesh.faces)
    dsu = _DSU(mesh.n_faces)
    leftovers: list[tuple[int, int]] = []
    for (a, b), w in sorted(zip(map(tuple, edges.tolist()), lengths.tolist())):
        if (a, b) in tree:
            continue
        fs = incidence[(a, b)]
        if len(fs) != 2 or not dsu.union(fs[0], fs[1]):
            leftovers.append((a, b))
    if len(leftovers) != 2:
        raise MeshError(f"tree-cotree found {len(leftovers)} leftover edges, expected 2")

    def tree_path(v: int) -> list[int]:
        path = [v]
        while path[-1] != base:
            path.append(int(pred[path[-1]]))
        return path

    def fundamental_cycle(a: int, b: int) -> list[int]:
        pa, pb = tree_path(a), tree_path(b)
        in_pa = {v: i for i, v in enumerate(pa)}
        j = next(i for i, v in enumerate(pb) if v in in_pa)  # meet point
        lca = pb[j]
        return pa[: in_pa[lca] + 1] + pb[:j][::-1]

    def cycle_length(cycle: list[int]) -> float:
        p = mesh.vertices[np.asarray(cycle + [cycle[0]])]
        return float(np.linalg.norm(np.diff(p, axis=0), axis=1).sum())

    cycles = [fundamental_cycle(a, b) for a, b in leftovers]
    c1 = min(cycles, key=cycle_length)

    if base in c1:
        loop_a = _rotate_loop(c1, base)
    else:
        loop_a = _reroute_through_base(mesh, c1, base)
    loop_b = _second_loop(mesh, loop_a, base)
    return CutGraph(np.asarray(loop_a), np.asarray(loop_b), base)


def _boundary_cycles(faces: np.ndarray) -> list[list[int]]:
    edges, counts = mesh_edges(faces)
    boundary = edges[counts == 1]
    nbr: dict[int, list[int]] = {}
    for a, b in boundary.tolist():
        nbr.setdefault(a, []).append(b)
        nbr.setdefault(b, []).append(a)
    for v in nbr:
        if len(nbr[v]) != 2:
            raise MeshError(f"boundary vertex {v} has {len(nbr[v])} boundary edges")
        nbr[v].sort()
    cycles = []
    visited: set[int] = set()
    for start in sorted(nbr):
        if start in visited:
            continue
        cycle = [start]
        visited.add(start)
        cur, prev = start, -1
        while True:
            nxt = [w for w in nbr[cur] if w != prev]
            nxt = nxt[0] if nxt else prev
            if nxt == start:
                break
            cycle.append(nxt)
            visited.add(nxt)
            prev, cur = cur, nxt
        cycles.append(cycle)
    return cycles


def _cut_dijkstra(faces, positions, start, targets, forbidden):
    """Shortest path in a cut mesh from start to any target vertex."""
    edges = mesh_edges(faces)[0]
    adj: dict[int, list[tuple[int, float]]] = {}
    for a, b in edges.tolist():
        w = float(np.linalg.norm(positions[a] - positions[b]))
        adj.setdefault(a, []).append((b, w))
        adj.setdefault(b, []).append((a, w))
    for v in adj:
        adj[v].sort()
    target_set = set(targets)
    banned = set(forbidden) - {start}
    dist = {start: 0.0}
    prev: dict[int, int] = {}
    heap = [(0.0, start)]
    while heap:
        d, v = heapq.heappop(heap)
        if d > dist.get(v, np.inf):
            continue
        if v in target_set and v != start:
            path = [v]
            while path[-1] != start:
                path.append(prev[path[-1]])
            return path[::-1]
        for w, length in adj.get(v, []):
            if w in banned:
                continue
            nd = d + length
            if nd < dist.get(w, np.inf):
                dist[w] = nd
                prev[w] = v
                heapq.heappush(heap, (nd, w))
    return None


def _reroute_through_base(mesh: TriangleMesh, cycle: list[int], base: int) -> np.ndarray:
    """Simple non-separating cycle through ``base`` crossing ``cycle`` once."""
    faces2, source, positions2 = _cut_vertices(mesh, [np.asarray(cycle)])
    bounds = _boundary_cycles(faces2)
    if len(bounds) != 2:
        raise MeshError(f"cutting a non-separating cycle should leave 2 boundaries, got {len(bounds)}")
    side_a, side_b = bounds
    p1 = _cut_dijkstra(faces2, positions2, base, side_a + side_b, forbidden=())
    if p1 is None:
        raise MeshError("base vertex cannot reach the cut cycle")
    first_side = side_a if p1[-1] in set(side_a) else side_b
    other_side = side_b if first_side is side_a else side_a
    p2 = _cut_dijkstra(
        faces2, positions2, base, other_side,
        forbidden=set(first_side) | set(p1[1:]),
    )
    if p2 is None:
        raise MeshError("cut cylinder is too thin to reroute the loop through the base")
    walk = [int(source[c]) for c in p1[::-1]] + [int(source[c]) for c in p2[1:]]
    x0, y0 = walk[0], walk[-1]
    if x0 == y0:
        return _rotate_loop(walk[:-1], base)
    # Close the walk along the shorter arc of the original cycle.
    i, j = cycle.index(y0), cycle.index(x0)
    arc1 = cycle[i:j + 1] if i <= j else cycle[i:] + cycle[: j + 1]
    arc2 = cycle[j:i + 1] if j <= i else cycle[j:] + cycle[: i + 1]
    arc2 = arc2[::-1]

    def arc_len(arc):
        p = mesh.vertices[np.asarray(arc)]
        return float(np.linalg.norm(np.diff(p, axis=0), axis=1).sum())

    arc = min((arc1, arc2), key=arc_len)
    return _rotate_loop(walk + arc[1:-1], base)


def _second_loop(mesh: TriangleMesh, loop_a: np.ndarray, base: int) -> np.ndarray:
    """Simple cycle through ``base`` meeting loop_a only there."""
    faces2, source, positions2 = _cut_vertices(mesh, [np.asarray(loop_a)])
    copies = np.flatnonzero(source == base)
    if len(copies) != 2:
        raise MeshError(f"base vertex should have 2 copies on the cut cylinder, got {len(copies)}")
    s, t = (int(c) for c in copies)
    boundary = {v for cyc in _boundary_cycles(faces2) for v in cyc}
    path = _cut_dijkstra(faces2, positions2, s, [t], forbidden=boundary - {s, t})
    if path is None:
        raise MeshError("no second loop avoids the first; mesh too coarse near the base vertex")
    return np.asarray([int(source[c]) for c in path[:-1]], dtype=np.int64)


# ---------------------------------------------------------------------------
# Cutting


def _cut_vertices(
    mesh: TriangleMesh, loops: list[np.ndarray]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Duplicate the vertices along the given edge loops.

    Faces around each cut vertex are grouped into wedges separated by cut
    edges; each wedge gets its own vertex copy (the first wedge keeps the
    original index).  Returns (new_faces, source_vertex, new_positions).
    """
    cut_edges: set[tuple[int, int]] = set()
    for loop in loops:
        loop = [int(v) for v in loop]
        for p, q in zip(loop, loop[1:] + loop[:1]):
            cut_edges.add((p, q) if p < q else (q, p))
    cut_vertices = sorted({v for e in cut_edges for v in e})

    incidence = edge_face_incidence(mesh.faces)
    vertex_faces: dict[int, list[int]] = {v: [] for v in cut_vertices}
    marks = np.isin(mesh.faces, np.asarray(cut_vertices))
    for f in np.flatnonzero(marks.any(axis=1)):
        for v in mesh.faces[f]:
            if int(v) in vertex_faces:
                vertex_faces[int(v)].append(int(f))

    new_faces = mesh.faces.copy()
    source = list(range(mesh.n_vertices))
    extra_positions: list[np.ndarray] = []
    next_id = mesh.n_vertices

    for v in cut_vertices:
        fs = vertex_faces[v]
        index_of = {f: i for i, f in enumerate(fs)}
        dsu = _DSU(len(fs))
        for f in fs:
            a, b, c = (int(x) for x in mesh.faces[f])
            for p, q in ((a, b), (b, c), (c, a)):
                if v not in (p, q):
                    continue
                key = (p, q) if p < q else (q, p)
                if key in cut_edges:
                    continue
                for g in incidence[key]:
                    if g != f:
                        dsu.union(index_of[f], index_of[g])
        n_cut_edges = sum(1 for key in cut_edges if v in key)
        groups: dict[int, list[int]] = {}
        for f in fs:
            groups.setdefault(dsu.find(index_of[f]), []).append(f)
        wedges = sorted(groups.values(), key=min)
        if len(wedges) != n_cut_edges:
            raise MeshError(
                f"cut vertex {v}: {len(wedges)} wedges for {n_cut_edges} cut edges; "
                "cut loops are tangent or the mesh is irregular here"
            )
        for k, wedge in enumerate(wedges):
            if k == 0:
                continue  # first wedge keeps the original index
            for f in wedge:
                slots = np.flatnonzero(mesh.faces[f] == v)
                new_faces[f, slots] = next_id
            source.append(v)
            extra_positions.append(mesh.vertices[v])
            next_id += 1

    positions = mesh.vertices
    if extra_positions:
        positions = np.vstack([mesh.vertices, np.asarray(extra_positions)])
    return new_faces, np.asarray(source, dtype=np.int64), positions


def cut_along(mesh: TriangleMesh, cut: CutGraph) -> tuple[TriangleMesh, SeamCorrespondence]:
    """Cut a genus-one mesh along a cut graph into a topological disk.

    The cut mesh keeps the face order of the input; vertices on the loops
    are duplicated per wedge (quadrupled at the base).  The returned seam
    correspondence pairs the two copies of every loop vertex: copies of
    ``loop_a`` form the tb family and copies of ``loop_b`` the lr family.
    """
    _validate_cut_graph(mesh, cut)
    new_faces, source, positions = _cut_vertices(mesh, [cut.loop_a, cut.loop_b])

    cycles = _boundary_cycles(new_faces)
    if len(cycles) != 1:
        raise MeshError(f"cut mesh has {len(cycles)} boundary loops, expected 1")
    cycle = cycles[0]
    expected = 2 * (len(cut.loop_a) + len(cut.loop_b))
    if len(cycle) != expected:
        raise MeshError(f"cut boundary has {len(cycle)} vertices, expected {expected}")

    corner_pos = [i for i, c in enumerate(cycle) if source[c] == cut.base_vertex]
    if len(corner_pos) != 4:
        raise MeshError(f"expected 4 base copies on the boundary, got {len(corner_pos)}")
    p0, p1, p2, p3 = corner_pos
    arcs = [
        cycle[p0 : p1 + 1],
        cycle[p1 : p2 + 1],
        cycle[p2 : p3 + 1],
        cycle[p3:] + cycle[: p0 + 1],
    ]

    set_a = set(int(v) for v in cut.loop_a)
    set_b = set(int(v) for v in cut.loop_b)

    def arc_sources(arc):
        return set(int(source[c]) for c in arc)

    if arc_sources(arcs[0]) == set_a:
        arcs_a, arcs_b = (arcs[0], arcs[2]), (arcs[1], arcs[3])
    elif arc_sources(arcs[0]) == set_b:
        arcs_a, arcs_b = (arcs[1], arcs[3]), (arcs[0], arcs[2])
    else:
        raise MeshError("cut boundary arcs do not match the cut loops")
    if arc_sources(arcs_a[0]) != set_a or arc_sources(arcs_a[1]) != set_a \
            or arc_sources(arcs_b[0]) != set_b or arc_sources(arcs_b[1]) != set_b:
        raise MeshError("cut boundary does not traverse the loops in the expected pattern")

    def pair_arcs(fwd, bwd):
        if len(fwd) != len(bwd):
            raise MeshError("opposite boundary arcs have different lengths")
        pairs = []
        for c1, c2 in zip(fwd, bwd[::-1]):
            if source[c1] != source[c2]:
                raise MeshError("opposite boundary arcs disagree; cut graph is not a valid system")
            pairs.append((int(c1), int(c2)))
        return pairs

    pairs_tb = pair_arcs(*arcs_a)
    pairs_lr = pair_arcs(*arcs_b)
    corners = np.asarray(sorted(cycle[p] for p in corner_pos), dtype=np.int64)

    seams = SeamCorrespondence(
        pairs_tb=np.asarray(pairs_tb, dtype=np.int64),
        pairs_lr=np.asarray(pairs_lr, dtype=np.int64),
        corner_ids=corners,
        source_vertex=source,
    )
    cut_mesh = TriangleMesh(positions, new_faces)
    # Disk topology: V - E + F must be 1 for the open cut mesh.
    v = cut_mesh.n_vertices
    e = len(mesh_edges(new_faces)[0])
    chi = v - e + cut_mesh.n_faces
    if chi != 1:
        raise MeshError(f"cut mesh has Euler characteristic {chi}, expected 1 (disk)")
    return cut_mesh, seams


def glue_cut(cut_mesh: TriangleMesh, seams: SeamCorrespondence) -> np.ndarray:
    """Faces of the cut mesh rewritten in source-vertex indices (undo the cut)."""
    return seams.source_vertex[cut_mesh.faces]
