"""Configuration samplers: stationary snapshot banks and replica runs.

A SnapshotBank runs one long chain and keeps spaced snapshots; spacing
of at least one expected relaxation interval keeps autocorrelation low.
Replica samplers run an independent chain to a fixed time for every
draw.  Both are consumed by the cluster-size checks, the stationarity
check and the coupled experiments.
"""

from collections import defaultdict

from .engine import ForestFireEngine
from .errors import InvalidParameterError
from .lattice import Topology, all_vacant, bernoulli_config
from .measure import canonical_window, measure_from_snapshots, window_pattern
from .rng import make_rng


class SnapshotBank:
    """Spaced snapshots of one long stationary run."""

    def __init__(self, topology: Topology, lam, n_snapshots, spacing, burn_in,
                 seed, init_config=None, stream=(0,)):
        if n_snapshots < 1:
            raise InvalidParameterError("need at least one snapshot")
        if spacing <= 0:
            raise InvalidParameterError("snapshot spacing must be positive")
        self.topology = topology
        self.lam = lam
        self.spacing = spacing
        self.burn_in = burn_in
        self.seed = seed
        self.mode = "stationary-bank"
        engine = ForestFireEngine(topology, lam, make_rng(seed, *stream),
                                  init_config)
        engine.run_until(burn_in)
        self.configs = []
        for i in range(n_snapshots):
            engine.run_until(burn_in + (i + 1) * spacing)
            self.configs.append(engine.snapshot())

    def __len__(self):
        return len(self.configs)

    def sample(self, rng):
        return self.configs[int(rng.integers(len(self.configs)))]

    def marginal(self, window):
        return measure_from_snapshots(
            self.topology, window, self.configs,
            provenance={"seed": self.seed, "spacing": self.spacing,
                        "burn_in": self.burn_in, "mode": "snapshot-bank"})

    def buckets(self, window):
        """Snapshot indices grouped by their window pattern."""
        window = canonical_window(self.topology, window)
        out = defaultdict(list)
        for i, cfg in enumerate(self.configs):
            out[window_pattern(cfg, self.topology, window)].append(i)
        return dict(out)

    def sample_with_pattern(self, window_buckets, code, rng):
        """Uniform snapshot among those showing the given window pattern."""
        idx = window_buckets[code]
        return self.configs[idx[int(rng.integers(len(idx)))]]


class VacantSampler:
    """Always returns the all-vacant configuration."""

    def __init__(self, topology: Topology):
        self.topology = topology
        self.mode = "vacant"

    def sample(self, rng):
        return tuple(all_vacant(self.topology))


class BernoulliSampler:
    """Independent Bernoulli(p) occupancy per site."""

    def __init__(self, topology: Topology, p):
        self.topology = topology
        self.p = p
        self.mode = f"bernoulli({p})"

    def sample(self, rng):
        return tuple(bernoulli_config(self.topology, self.p, rng))


class ReplicaSampler:
    """Independent chains run to a fixed observation time.

    Each draw builds a fresh engine from the init sampler and runs it to
    time s; draws are independent across calls.
    """

    def __init__(self, topology: Topology, lam, s, init_sampler=None):
        if s < 0:
            raise InvalidParameterError("observation time must be nonnegative")
        self.topology = topology
        self.lam = lam
        self.s = s
        self.init_sampler = init_sampler or VacantSampler(topology)
        self.mode = f"replica(s={s}, init={self.init_sampler.mode})"

    def sample(self, rng):
        init = self.init_sampler.sample(rng)
        if self.s == 0:
            return tuple(init)
        engine = ForestFireEngine(self.topology, self.lam, rng, init)
        engine.run_until(self.s)
        return engine.snapshot()


def make_init_sampler(topology: Topology, lam, spec: dict, seed, stream=(5,)):
    """Build an initial-configuration sampler from a config dict.

    Kinds: {"kind": "vacant"}, {"kind": "bernoulli", "p": ...},
    {"kind": "stationary", "snapshots": n, "spacing": dt, "burn_in": t}.
    """
    kind = spec.get("kind", "vacant")
    if kind == "vacant":
        return VacantSampler(topology)
    if kind == "bernoulli":
        return BernoulliSampler(topology, float(spec.get("p", 0.5)))
    if kind == "stationary":
        return SnapshotBank(topology, lam,
                            int(spec.get("snapshots", 1000)),
                            float(spec.get("spacing", 2.0)),
                            float(spec.get("burn_in", 10.0 * topology.n_sites)),
                            seed, stream=stream)
    raise InvalidParameterError(f"unknown init kind {kind!r}")
