"""Exact event-driven simulation of the forest-fire process.

The dynamics follow the classical rules: every site carries a growth
clock of rate 1 and an ignition clock of rate lambda.  A growth attempt
occupies a vacant site (and does nothing on an occupied one); an
ignition attempt on an occupied site instantly vacates its whole
occupied cluster (and does nothing on a vacant one).

Events are sampled by superposition: with N sites the next event time is
exponential with rate N*(1+lambda), the site is uniform and the kind is
growth with probability 1/(1+lambda).  Attempts on wrong-state sites are
kept as no-ops, which makes the sampling exact regardless of the current
configuration.

Cluster membership is maintained incrementally with a union-find over
the occupied sites.  Fires always remove whole clusters, so a burn can
simply reset the parent pointers of the retired members; no fully
dynamic connectivity structure is needed.
"""

from typing import NamedTuple

from .errors import (EventOrderError, InvalidParameterError, InvalidSiteError,
                     InvalidStateError)
from .lattice import Topology

GROWTH = "growth"
IGNITION = "ignition"

_CHUNK = 4096


class Event(NamedTuple):
    time: float
    site: int
    kind: str


class EngineParams(NamedTuple):
    """Ignition rate; the growth rate is fixed at 1."""
    lam: float


class _EventSampler:
    """Buffered sampler for (holding time, site, kind) triples.

    Draws are buffered in fixed-size chunks, so the random stream
    consumed depends only on the number of events drawn; the buffering
    is invisible to reproducibility.
    """

    def __init__(self, rng, n_sites, lam):
        self.rng = rng
        self.n = n_sites
        self.scale = 1.0 / (n_sites * (1.0 + lam))
        self.p_growth = 1.0 / (1.0 + lam)
        self._i = _CHUNK

    def draw(self):
        i = self._i
        if i == _CHUNK:
            rng = self.rng
            self._dt = rng.exponential(self.scale, _CHUNK)
            self._site = rng.integers(0, self.n, _CHUNK)
            self._u = rng.random(_CHUNK)
            i = 0
        self._i = i + 1
        kind = GROWTH if self._u[i] < self.p_growth else IGNITION
        return float(self._dt[i]), int(self._site[i]), kind


class ForestFireEngine:
    """One forest-fire trajectory on a finite topology.

    An engine owns its configuration, clock, cluster index and random
    stream; it is single-threaded but cheap to replicate with
    independent streams.
    """

    def __init__(self, topology: Topology, lam: float, rng, init_config=None):
        if lam <= 0:
            raise InvalidParameterError("lambda must be positive")
        self.topology = topology
        self.lam = float(lam)
        self.rng = rng
        self.clock = 0.0
        n = topology.n_sites
        self.occ = [0] * n if init_config is None else [int(v) for v in init_config]
        if len(self.occ) != n:
            raise InvalidParameterError("initial configuration length mismatch")
        self.counts = {GROWTH: 0, IGNITION: 0}
        self.effective = {GROWTH: 0, "burn": 0}
        self._sampler = _EventSampler(rng, n, self.lam) if n else None

        # Union-find over occupied sites; members lists live at roots.
        self._parent = list(range(n))
        self._members = {i: [i] for i in range(n) if self.occ[i]}
        adj = topology.adjacency
        for i in range(n):
            if self.occ[i]:
                for j in adj[i]:
                    if j > i and self.occ[j]:
                        self._union(i, j)

    # ---- cluster index ----

    def _find(self, i):
        parent = self._parent
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    def _union(self, a, b):
        ra, rb = self._find(a), self._find(b)
        if ra == rb:
            return
        ma, mb = self._members[ra], self._members[rb]
        if len(ma) < len(mb):
            ra, rb = rb, ra
            ma, mb = mb, ma
        self._parent[rb] = ra
        ma.extend(mb)
        del self._members[rb]

    def cluster_members(self, site) -> list[int]:
        """Members of the occupied cluster of a site ([] if vacant)."""
        i = self.topology.site_index(site)
        if not self.occ[i]:
            return []
        return self._members[self._find(i)]

    def cluster_size(self, site) -> int:
        return len(self.cluster_members(site))

    # ---- dynamics ----

    def next_event(self) -> Event:
        """Sample the next event and advance the clock to it."""
        if self._sampler is None:
            raise InvalidStateError("engine has no sites")
        dt, site, kind = self._sampler.draw()
        self.clock += dt
        return Event(self.clock, site, kind)

    def apply_event(self, event: Event) -> list[int]:
        """Apply one event; returns the list of sites whose state flipped."""
        if event.time < self.clock:
            raise EventOrderError(
                f"event at {event.time} is older than clock {self.clock}")
        site = event.site
        if not 0 <= site < self.topology.n_sites:
            raise InvalidSiteError(f"site index {site} out of range")
        self.clock = event.time
        self.counts[event.kind] += 1
        if event.kind == GROWTH:
            if self.occ[site]:
                return []
            self._occupy(site)
            self.effective[GROWTH] += 1
            return [site]
        if event.kind == IGNITION:
            if not self.occ[site]:
                return []
            return self.burn_cluster(site)
        raise InvalidParameterError(f"unknown event kind {event.kind!r}")

    def _occupy(self, site):
        self.occ[site] = 1
        self._parent[site] = site
        self._members[site] = [site]
        occ = self.occ
        for j in self.topology.adjacency[site]:
            if occ[j]:
                self._union(site, j)

    def burn_cluster(self, site) -> list[int]:
        """Vacate the whole occupied cluster of an occupied site."""
        i = self.topology.site_index(site)
        if not self.occ[i]:
            raise InvalidStateError("cannot burn the cluster of a vacant site")
        members = self._members.pop(self._find(i))
        occ, parent = self.occ, self._parent
        for m in members:
            occ[m] = 0
            parent[m] = m
        self.effective["burn"] += 1
        return members

    def run_until(self, T, observers=(), listeners=()):
        """Advance the trajectory to time T.

        Observers accumulate their functionals weighted by the exact
        holding time of each piecewise-constant stretch (including the
        final partial interval); listeners are notified after each
        applied event.  The event sampled past T is discarded, which is
        exact by memorylessness of the exponential clocks.
        """
        if T < self.clock:
            raise InvalidParameterError("horizon lies in the past")
        if T == self.clock:
            for ob in observers:
                ob.accumulate(self, 0.0)
            return self
        if self._sampler is None:
            raise InvalidStateError("engine has no sites")
        draw = self._sampler.draw
        apply_event = self.apply_event
        while True:
            dt, site, kind = draw()
            t_next = self.clock + dt
            if t_next > T:
                hold = T - self.clock
                for ob in observers:
                    ob.accumulate(self, hold)
                self.clock = T
                return self
            for ob in observers:
                ob.accumulate(self, dt)
            event = Event(t_next, site, kind)
            changed = apply_event(event)
            for li in listeners:
                li.on_event(self, event, changed)

    def snapshot(self) -> tuple[int, ...]:
        """Value copy of the current occupancy in canonical site order."""
        return tuple(self.occ)


class TrajectoryRecorder:
    """Listener writing one "time site kind" line per applied event."""

    def __init__(self, fh, effective_only=False):
        self.fh = fh
        self.effective_only = effective_only

    def on_event(self, engine, event, changed):
        if self.effective_only and not changed:
            return
        self.fh.write(f"{event.time!r} {event.site} {event.kind}\n")
