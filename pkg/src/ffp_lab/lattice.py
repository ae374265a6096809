"""Finite lattice topologies, configurations and cluster computations.

Three kinds of topology are supported:

* ``torus``  -- the box of radius k with hypercubic edges plus one wrap
  edge per axis joining opposite boundary faces, i.e. a discrete torus
  with (2k+1)^d sites.
* ``window`` -- the box of radius k with only the hypercubic edges whose
  endpoints both lie inside the box; everything outside is implicitly
  and permanently vacant.
* ``explicit`` -- an arbitrary finite graph given as an edge list, used
  mainly for small hand-checkable oracles.

Sites are handled through dense integer indices; coordinates are stored
in lexicographic order so that index order is the canonical site order
used for every serialized output.
"""

from itertools import product

from .errors import InvalidParameterError, InvalidSiteError

Coord = tuple[int, ...]

TORUS = "torus"
WINDOW = "window"
EXPLICIT = "explicit"


def box_coords(d: int, k: int) -> list[Coord]:
    """All sites with sup-norm at most k, lexicographically sorted."""
    return [tuple(c) for c in product(range(-k, k + 1), repeat=d)]


class Topology:
    """Immutable finite graph with a canonical site ordering.

    Attributes
    ----------
    dimension : int
    radius : int or None
        Box radius for torus/window mode, None for explicit graphs.
    mode : str
        One of "torus", "window", "explicit".
    coords : list of tuple
        Site coordinates, lexicographically sorted; index order is the
        canonical order.
    adjacency : list of list of int
        Sorted neighbor indices per site; symmetric, no self loops.
    degree_bound : int
        Upper bound on the vertex degree (3d for the torus including the
        abstract exterior sites, 2d for windows, the max degree for
        explicit graphs).
    """

    def __init__(self, dimension, radius, mode, coords, adjacency, degree_bound):
        self.dimension = dimension
        self.radius = radius
        self.mode = mode
        self.coords = coords
        self.adjacency = adjacency
        self.degree_bound = degree_bound
        self.index_of = {c: i for i, c in enumerate(coords)}
        if len(self.index_of) != len(coords):
            raise InvalidParameterError("duplicate site coordinates")

    @property
    def n_sites(self) -> int:
        return len(self.coords)

    def site_index(self, site) -> int:
        """Accept either a dense index or a coordinate tuple."""
        if isinstance(site, tuple):
            try:
                return self.index_of[site]
            except KeyError:
                raise InvalidSiteError(f"unknown site {site!r}") from None
        i = int(site)
        if not 0 <= i < self.n_sites:
            raise InvalidSiteError(f"site index {i} out of range")
        return i

    def descriptor(self) -> dict:
        return {"d": self.dimension, "k": self.radius, "mode": self.mode}

    def __repr__(self):
        return (f"Topology(mode={self.mode!r}, d={self.dimension}, "
                f"k={self.radius}, sites={self.n_sites})")


def build_topology(d: int, k: int, mode: str) -> Topology:
    """Build a torus or window box topology of radius k in dimension d."""
    if d < 1:
        raise InvalidParameterError("dimension must be at least 1")
    if k < 0:
        raise InvalidParameterError("radius must be nonnegative")
    if mode not in (TORUS, WINDOW):
        raise InvalidParameterError(f"unknown mode {mode!r}")

    coords = box_coords(d, k)
    index_of = {c: i for i, c in enumerate(coords)}
    adjacency = [set() for _ in coords]

    def link(i, j):
        adjacency[i].add(j)
        adjacency[j].add(i)

    for i, c in enumerate(coords):
        for axis in range(d):
            if c[axis] + 1 <= k:
                nb = c[:axis] + (c[axis] + 1,) + c[axis + 1:]
                link(i, index_of[nb])

    if mode == TORUS and k > 0:
        # One wrap edge per axis joining the coordinate-k face to the
        # coordinate-(-k) face, other coordinates unchanged.
        for i, c in enumerate(coords):
            for axis in range(d):
                if c[axis] == k:
                    opp = c[:axis] + (-k,) + c[axis + 1:]
                    link(i, index_of[opp])

    degree_bound = 3 * d if mode == TORUS else 2 * d
    return Topology(d, k, mode, coords,
                    [sorted(s) for s in adjacency], degree_bound)


def explicit_topology(n_sites: int, edges) -> Topology:
    """Arbitrary graph on sites 0..n_sites-1; coordinates are (i,)."""
    if n_sites < 1:
        raise InvalidParameterError("explicit topology needs at least one site")
    adjacency = [set() for _ in range(n_sites)]
    for i, j in edges:
        i, j = int(i), int(j)
        if i == j:
            raise InvalidParameterError("self loops are not allowed")
        if not (0 <= i < n_sites and 0 <= j < n_sites):
            raise InvalidSiteError(f"edge ({i},{j}) out of range")
        adjacency[i].add(j)
        adjacency[j].add(i)
    coords = [(i,) for i in range(n_sites)]
    degree = max((len(s) for s in adjacency), default=0)
    return Topology(1, None, EXPLICIT, coords,
                    [sorted(s) for s in adjacency], max(degree, 1))


def read_edge_list(path) -> Topology:
    """Read an explicit graph from a text file, one "i j" pair per line."""
    edges = []
    n = 0
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            a, b = line.split()
            i, j = int(a), int(b)
            edges.append((i, j))
            n = max(n, i + 1, j + 1)
    return explicit_topology(n, edges)


def write_edge_list(topology: Topology, path) -> None:
    with open(path, "w") as fh:
        for i, nbs in enumerate(topology.adjacency):
            for j in nbs:
                if i < j:
                    fh.write(f"{i} {j}\n")


def neighbors(topology: Topology, site) -> frozenset[int]:
    """Neighbor set of a site, as dense indices."""
    i = topology.site_index(site)
    return frozenset(topology.adjacency[i])


def neighbor_coords(topology: Topology, site) -> set[Coord]:
    return {topology.coords[j] for j in neighbors(topology, site)}


def site_boundary(topology: Topology, sites) -> frozenset[int]:
    """Exterior neighbor set N(S) of a set of site indices."""
    s = {topology.site_index(x) for x in sites}
    out = set()
    for i in s:
        for j in topology.adjacency[i]:
            if j not in s:
                out.add(j)
    return frozenset(out)


def closed_set(topology: Topology, sites) -> frozenset[int]:
    """S together with its boundary N(S)."""
    s = frozenset(topology.site_index(x) for x in sites)
    return s | site_boundary(topology, s)


def cluster_of(config, topology: Topology, site) -> frozenset[int]:
    """Maximal connected occupied set containing the site.

    A vacant site has no open path, so its cluster is empty.
    """
    x = topology.site_index(site)
    if not config[x]:
        return frozenset()
    adj = topology.adjacency
    seen = {x}
    stack = [x]
    while stack:
        i = stack.pop()
        for j in adj[i]:
            if config[j] and j not in seen:
                seen.add(j)
                stack.append(j)
    return frozenset(seen)


def cluster_union(config, topology: Topology, sites) -> frozenset[int]:
    """Union of the clusters of the given sites; vacant sites add nothing."""
    out: set[int] = set()
    for x in sites:
        i = topology.site_index(x)
        if config[i] and i not in out:
            out |= cluster_of(config, topology, i)
    return frozenset(out)


def all_vacant(topology: Topology) -> list[int]:
    return [0] * topology.n_sites


def bernoulli_config(topology: Topology, p: float, rng) -> list[int]:
    if not 0.0 <= p <= 1.0:
        raise InvalidParameterError("occupation probability must lie in [0, 1]")
    return [int(u < p) for u in rng.random(topology.n_sites)]


def config_to_string(config) -> str:
    """One 0/1 character per site in canonical order."""
    return "".join("1" if v else "0" for v in config)


def config_from_string(text: str) -> list[int]:
    return [1 if ch == "1" else 0 for ch in text.strip()]


def translate_permutation(topology: Topology, vec) -> list[int]:
    """Site permutation induced by a torus translation.

    Coordinates are shifted by ``vec`` modulo the opposite-face
    identification; this is a graph automorphism of the torus.
    """
    if topology.mode != TORUS:
        raise InvalidParameterError("translations are defined on torus topologies")
    k = topology.radius
    span = 2 * k + 1
    perm = []
    for c in topology.coords:
        shifted = tuple((ci + vi + k) % span - k for ci, vi in zip(c, vec))
        perm.append(topology.index_of[shifted])
    return perm
