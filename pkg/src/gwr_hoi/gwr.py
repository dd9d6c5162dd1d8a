"""Grow-When-Required self-organizing network.

The network keeps a set of prototype neurons linked by aged edges. Each
input pulls its best-matching unit (and, more weakly, that unit's graph
neighbours) towards it; when the best match responds weakly *and* has
already habituated, a new neuron is inserted halfway between them.

Missing input components are supported throughout: every distance and every
weight update is restricted to the observed coordinates of the input.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import _kernels

logger = logging.getLogger(__name__)

_INITIAL_CAPACITY = 64


@dataclass(frozen=True)
class GwrParams:
    """Learning constants of one network.

    Defaults are the values used for the pose and object layers of the
    architecture; the integration layer lowers ``insertion_threshold``
    to 0.9.
    """

    insertion_threshold: float = 0.98
    firing_threshold: float = 0.1
    learn_rate_bmu: float = 0.1
    learn_rate_neighbor: float = 0.01
    tau_bmu: float = 0.3
    tau_neighbor: float = 0.1
    kappa: float = 1.05
    max_edge_age: int = 100
    epochs: int = 300
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.insertion_threshold <= 1.0:
            raise ValueError("insertion_threshold must lie in (0, 1]")
        if not 0.0 < self.firing_threshold < 1.0:
            raise ValueError("firing_threshold must lie in (0, 1)")
        if not 0.0 < self.learn_rate_neighbor <= self.learn_rate_bmu < 1.0:
            raise ValueError("need 0 < learn_rate_neighbor <= learn_rate_bmu < 1")
        if not 0.0 < self.tau_neighbor <= self.tau_bmu:
            raise ValueError("need 0 < tau_neighbor <= tau_bmu")
        if not self.kappa > 1.0:
            raise ValueError("kappa must be > 1")
        if int(self.max_edge_age) != self.max_edge_age or self.max_edge_age < 1:
            raise ValueError("max_edge_age must be a positive integer")
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise ValueError("epochs must be a positive integer")
        if self.firing_threshold <= self.habituation_fixed_point:
            warnings.warn(
                f"firing_threshold={self.firing_threshold} is not above the "
                f"habituation fixed point {self.habituation_fixed_point:.6f}; "
                "the network will never insert neurons",
                RuntimeWarning,
                stacklevel=3,
            )

    @property
    def habituation_fixed_point(self) -> float:
        return 1.0 - 1.0 / self.kappa

    def packed(self) -> np.ndarray:
        return np.array(
            [
                self.insertion_threshold,
                self.firing_threshold,
                self.learn_rate_bmu,
                self.learn_rate_neighbor,
                self.tau_bmu,
                self.tau_neighbor,
                self.kappa,
                float(self.max_edge_age),
            ]
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GwrParams":
        return cls(**d)


class StepReport(NamedTuple):
    inserted: bool
    bmu_id: int
    activity: float
    bmu_habituation: float


class BmuMatch(NamedTuple):
    bmu_id: int
    second_bmu_id: int
    distance: float


def activation(distance):
    """Network activity ``exp(-distance)`` for a non-negative distance."""
    d = np.asarray(distance, dtype=float)
    if np.any(d < 0) or np.any(np.isnan(d)):
        raise ValueError("distance must be non-negative")
    out = np.exp(-d)
    return float(out) if out.ndim == 0 else out


def habituate(h: float, tau: float, kappa: float) -> float:
    """Apply one habituation decrement, clamped to [0, 1]."""
    if not 0.0 <= h <= 1.0:
        raise ValueError("habituation must lie in [0, 1]")
    return float(_kernels.habituate(float(h), float(tau), float(kappa)))


def _as_observation(x, mask, dim):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != dim:
        raise ValueError(f"expected a vector of dimension {dim}, got shape {x.shape}")
    if mask is None:
        mask = ~np.isnan(x)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != x.shape:
            raise ValueError("mask shape does not match input")
        mask = mask & ~np.isnan(x)
    if not mask.any():
        raise ValueError("input has no observed components")
    return np.where(mask, x, 0.0), mask


def _as_observations(X, masks, dim):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {X.shape}")
    if X.shape[0] == 0:
        raise ValueError("empty data")
    if X.shape[1] != dim:
        raise ValueError(f"expected dimension {dim}, got {X.shape[1]}")
    if masks is None:
        M = ~np.isnan(X)
    else:
        M = np.asarray(masks, dtype=bool)
        if M.shape != X.shape:
            raise ValueError("mask shape does not match data")
        M = M & ~np.isnan(X)
    empty = ~M.any(axis=1)
    if empty.any():
        raise ValueError(f"row {int(np.flatnonzero(empty)[0])} has no observed components")
    return np.ascontiguousarray(np.where(M, X, 0.0)), np.ascontiguousarray(M)


class GwrNetwork:
    """Mutable network state: neurons, habituation counters and edges.

    Live neurons are stored contiguously and ordered by their creation id,
    so positional index order and id order agree.
    """

    def __init__(self, input_dim: int, params: GwrParams | None = None, capacity: int = _INITIAL_CAPACITY):
        if input_dim < 1:
            raise ValueError("input_dim must be positive")
        self.input_dim = int(input_dim)
        self.params = params or GwrParams()
        capacity = max(int(capacity), 2)
        self._W = np.zeros((capacity, self.input_dim))
        self._H = np.ones(capacity)
        self._ids = np.zeros(capacity, dtype=np.int64)
        self._A = np.full((capacity, capacity), -1, dtype=np.int64)
        self._n = 0
        self._next_id = 0

    # -- construction -----------------------------------------------------

    @classmethod
    def from_weights(cls, weights, params=None, habituation=None, edges=None) -> "GwrNetwork":
        """Build a network with the given neurons (ids 0..n-1, in row order).

        ``edges`` maps ``(i, j)`` id pairs to ages.
        """
        weights = np.atleast_2d(np.asarray(weights, dtype=np.float64))
        n, dim = weights.shape
        if n < 2:
            raise ValueError("a network needs at least two neurons")
        net = cls(dim, params, capacity=max(_INITIAL_CAPACITY, 2 * n))
        net._W[:n] = weights
        net._H[:n] = 1.0 if habituation is None else np.asarray(habituation, dtype=np.float64)
        if np.any(net._H[:n] < 0) or np.any(net._H[:n] > 1):
            raise ValueError("habituation must lie in [0, 1]")
        net._ids[:n] = np.arange(n)
        net._n = n
        net._next_id = n
        for (i, j), age in (edges or {}).items():
            if i == j or not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"invalid edge {(i, j)}")
            net._A[i, j] = net._A[j, i] = int(age)
        return net

    @classmethod
    def from_state(cls, params, weights, habituation, ids, edges, next_id) -> "GwrNetwork":
        """Rebuild a network exactly from its serialized state."""
        weights = np.atleast_2d(np.asarray(weights, dtype=np.float64))
        ids = np.asarray(ids, dtype=np.int64)
        n = weights.shape[0]
        if np.any(np.diff(ids) <= 0):
            raise ValueError("neuron ids must be strictly increasing")
        net = cls(weights.shape[1], params, capacity=max(_INITIAL_CAPACITY, 2 * n))
        net._W[:n] = weights
        net._H[:n] = np.asarray(habituation, dtype=np.float64)
        net._ids[:n] = ids
        net._n = n
        net._next_id = int(next_id)
        pos = {int(i): k for k, i in enumerate(ids)}
        for i, j, age in edges:
            a, b = pos[int(i)], pos[int(j)]
            net._A[a, b] = net._A[b, a] = int(age)
        return net

    @classmethod
    def seeded(cls, X, params: GwrParams | None = None, masks=None, rng=None) -> "GwrNetwork":
        """Start a network from two distinct samples drawn from ``X``.

        Fully observed rows are preferred as seeds; if none exist, missing
        seed components are filled with the column mean of observed values.
        """
        params = params or GwrParams()
        X, M = _as_observations(X, masks, np.asarray(X).shape[1])
        rng = np.random.default_rng(params.rng_seed) if rng is None else rng
        complete = np.flatnonzero(M.all(axis=1))
        pool = complete if complete.size else np.arange(X.shape[0])
        order = pool[rng.permutation(pool.size)]
        first = order[0]
        second = next((k for k in order[1:] if not np.array_equal(X[k], X[first])), None)
        if second is None:
            second = order[1] if order.size > 1 else first
        seeds = X[[first, second]].copy()
        if not complete.size:
            col_mean = np.where(M, X, 0.0).sum(0) / np.maximum(M.sum(0), 1)
            seeds = np.where(M[[first, second]], seeds, col_mean)
        return cls.from_weights(seeds, params)

    # -- views ------------------------------------------------------------

    @property
    def n_neurons(self) -> int:
        return self._n

    @property
    def weights(self) -> np.ndarray:
        return self._W[: self._n].copy()

    @property
    def habituation(self) -> np.ndarray:
        return self._H[: self._n].copy()

    @property
    def ids(self) -> np.ndarray:
        return self._ids[: self._n].copy()

    @property
    def next_id(self) -> int:
        return self._next_id

    @property
    def edges(self) -> dict[tuple[int, int], int]:
        """Edge ages keyed by ``(low_id, high_id)``."""
        n = self._n
        rows, cols = np.nonzero(np.triu(self._A[:n, :n] >= 0, k=1))
        return {(int(self._ids[r]), int(self._ids[c])): int(self._A[r, c]) for r, c in zip(rows, cols)}

    def index_of(self, neuron_id: int) -> int:
        k = int(np.searchsorted(self._ids[: self._n], neuron_id))
        if k >= self._n or self._ids[k] != neuron_id:
            raise KeyError(neuron_id)
        return k

    def weight_of(self, neuron_id: int) -> np.ndarray:
        return self._W[self.index_of(neuron_id)].copy()

    def neighbors(self, neuron_id: int) -> list[int]:
        k = self.index_of(neuron_id)
        return [int(self._ids[j]) for j in np.flatnonzero(self._A[k, : self._n] >= 0)]

    def copy(self) -> "GwrNetwork":
        other = GwrNetwork(self.input_dim, self.params, capacity=self._W.shape[0])
        other._W = self._W.copy()
        other._H = self._H.copy()
        other._ids = self._ids.copy()
        other._A = self._A.copy()
        other._n = self._n
        other._next_id = self._next_id
        return other

    def state_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "params": self.params.to_dict(),
            "weights": self.weights.tolist(),
            "habituation": self.habituation.tolist(),
            "ids": self.ids.tolist(),
            "edges": [[i, j, age] for (i, j), age in sorted(self.edges.items())],
            "next_id": self._next_id,
        }

    @classmethod
    def from_state_dict(cls, d: dict) -> "GwrNetwork":
        net = cls.from_state(
            GwrParams.from_dict(d["params"]),
            np.asarray(d["weights"], dtype=np.float64).reshape(len(d["ids"]), d["input_dim"]),
            d["habituation"],
            d["ids"],
            d["edges"],
            d["next_id"],
        )
        return net

    def check_invariants(self) -> None:
        """Raise AssertionError if the structural invariants are violated."""
        n = self._n
        A = self._A[:n, :n]
        assert n >= 2, "fewer than two neurons"
        assert np.array_equal(A, A.T), "edge matrix not symmetric"
        assert np.all(np.diag(A) < 0), "self-loop present"
        assert np.all(A <= self.params.max_edge_age), "edge older than max_edge_age"
        assert np.all((self._H[:n] >= 0) & (self._H[:n] <= 1)), "habituation out of range"
        assert np.all(np.diff(self._ids[:n]) > 0), "ids not increasing"
        if n > 2:
            assert np.all((A >= 0).any(axis=1)), "isolated neuron"

    def _ensure_capacity(self, needed: int) -> None:
        cap = self._W.shape[0]
        if needed <= cap:
            return
        new_cap = max(needed, 2 * cap)
        W = np.zeros((new_cap, self.input_dim))
        W[:cap] = self._W
        H = np.ones(new_cap)
        H[:cap] = self._H
        ids = np.zeros(new_cap, dtype=np.int64)
        ids[:cap] = self._ids
        A = np.full((new_cap, new_cap), -1, dtype=np.int64)
        A[:cap, :cap] = self._A
        self._W, self._H, self._ids, self._A = W, H, ids, A

    def __repr__(self) -> str:
        return f"GwrNetwork(input_dim={self.input_dim}, neurons={self._n}, edges={len(self.edges)})"


def find_bmus(net: GwrNetwork, x, mask=None) -> BmuMatch:
    """Best and second-best matching neurons for ``x`` (ties to lower id)."""
    x, m = _as_observation(x, mask, net.input_dim)
    if net.n_neurons < 2:
        raise ValueError("network needs at least two neurons")
    d = _kernels.masked_distances(net._W, net._n, x, m)
    b, s = _kernels.two_nearest(d, net._n)
    return BmuMatch(int(net._ids[b]), int(net._ids[s]), float(d[b]))


def train_step(net: GwrNetwork, x, mask=None) -> StepReport:
    """Present one input to the network, mutating it in place."""
    x, m = _as_observation(x, mask, net.input_dim)
    net._ensure_capacity(net._n + 1)
    n, next_id, inserted, bmu_id, act, hb = _kernels.step(
        net._W, net._H, net._ids, net._A, net._n, net._next_id, x, m, net.params.packed()
    )
    net._n, net._next_id = int(n), int(next_id)
    if inserted:
        assert act < net.params.insertion_threshold and hb < net.params.firing_threshold
        logger.debug("inserted neuron %d (activity %.4f, bmu h %.4f)", next_id - 1, act, hb)
    return StepReport(bool(inserted), int(bmu_id), float(act), float(hb))


def train_network(net: GwrNetwork, X, masks=None, epochs: int | None = None, rng=None) -> GwrNetwork:
    """Train for ``epochs`` passes over ``X`` in seeded shuffled order.

    Mutates and returns ``net``. Rows may carry NaN for missing components,
    or an explicit boolean ``masks`` array may be given.
    """
    X, M = _as_observations(X, masks, net.input_dim)
    epochs = net.params.epochs if epochs is None else int(epochs)
    rng = np.random.default_rng(net.params.rng_seed) if rng is None else rng
    p = net.params.packed()
    total_insertions = 0
    for _ in range(epochs):
        order = rng.permutation(X.shape[0])
        pos = 0
        while pos < order.size:
            net._ensure_capacity(net._n + 1)
            n, next_id, pos, ins = _kernels.run_epoch(
                net._W, net._H, net._ids, net._A, net._n, net._next_id, X, M, order, pos, p
            )
            net._n, net._next_id = int(n), int(next_id)
            total_insertions += int(ins)
    logger.debug("trained %d epochs: %d neurons, %d insertions", epochs, net._n, total_insertions)
    return net


def bmu_indices(net: GwrNetwork, X, masks=None):
    """Vectorised bmu lookup: positional indices and distances per row."""
    X, M = _as_observations(X, masks, net.input_dim)
    best, second, dist = _kernels.bmu_batch(net._W, net._n, X, M)
    return best, second, dist


def quantization_error(net: GwrNetwork, X, masks=None) -> float:
    """Mean distance from each sample to its best-matching neuron."""
    _, _, dist = bmu_indices(net, X, masks)
    return float(dist.mean())


class GrowWhenRequired(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :class:`GwrNetwork`.

    ``fit`` seeds the network from two data samples and trains it;
    ``predict`` returns best-matching neuron ids and ``transform`` returns
    the corresponding prototype weights. NaN entries in ``X`` are treated as
    missing components.

    Examples
    --------
    >>> import numpy as np
    >>> X = np.random.default_rng(0).normal(size=(200, 2))
    >>> gwr = GrowWhenRequired(insertion_threshold=0.85, epochs=20).fit(X)
    >>> gwr.predict(X[:3]).shape
    (3,)
    """

    def __init__(
        self,
        insertion_threshold=0.98,
        firing_threshold=0.1,
        learn_rate_bmu=0.1,
        learn_rate_neighbor=0.01,
        tau_bmu=0.3,
        tau_neighbor=0.1,
        kappa=1.05,
        max_edge_age=100,
        epochs=300,
        random_state=0,
    ):
        self.insertion_threshold = insertion_threshold
        self.firing_threshold = firing_threshold
        self.learn_rate_bmu = learn_rate_bmu
        self.learn_rate_neighbor = learn_rate_neighbor
        self.tau_bmu = tau_bmu
        self.tau_neighbor = tau_neighbor
        self.kappa = kappa
        self.max_edge_age = max_edge_age
        self.epochs = epochs
        self.random_state = random_state

    def _params(self) -> GwrParams:
        return GwrParams(
            insertion_threshold=self.insertion_threshold,
            firing_threshold=self.firing_threshold,
            learn_rate_bmu=self.learn_rate_bmu,
            learn_rate_neighbor=self.learn_rate_neighbor,
            tau_bmu=self.tau_bmu,
            tau_neighbor=self.tau_neighbor,
            kappa=self.kappa,
            max_edge_age=self.max_edge_age,
            epochs=self.epochs,
            rng_seed=self.random_state,
        )

    @classmethod
    def from_params(cls, params: GwrParams) -> "GrowWhenRequired":
        return cls(
            insertion_threshold=params.insertion_threshold,
            firing_threshold=params.firing_threshold,
            learn_rate_bmu=params.learn_rate_bmu,
            learn_rate_neighbor=params.learn_rate_neighbor,
            tau_bmu=params.tau_bmu,
            tau_neighbor=params.tau_neighbor,
            kappa=params.kappa,
            max_edge_age=params.max_edge_age,
            epochs=params.epochs,
            random_state=params.rng_seed,
        )

    def fit(self, X, y=None, mask=None):
        params = self._params()
        rng = np.random.default_rng(params.rng_seed)
        X = np.asarray(X, dtype=np.float64)
        net = GwrNetwork.seeded(X, params, masks=mask, rng=rng)
        self.network_ = train_network(net, X, masks=mask, rng=rng)
        self.n_features_in_ = net.input_dim
        return self

    def predict(self, X, mask=None) -> np.ndarray:
        """Id of the best-matching neuron for each row."""
        check_is_fitted(self, "network_")
        best, _, _ = bmu_indices(self.network_, X, mask)
        return self.network_._ids[best].copy()

    def transform(self, X, mask=None) -> np.ndarray:
        """Prototype weight of the best-matching neuron for each row."""
        check_is_fitted(self, "network_")
        best, _, _ = bmu_indices(self.network_, X, mask)
        return self.network_._W[best].copy()

    def activations(self, X, mask=None) -> np.ndarray:
        check_is_fitted(self, "network_")
        _, _, dist = bmu_indices(self.network_, X, mask)
        return np.exp(-dist)

    def score(self, X, y=None, mask=None) -> float:
        """Negative quantization error (higher is better)."""
        check_is_fitted(self, "network_")
        return -quantization_error(self.network_, X, mask)


def habituation_trajectory(h0: float, tau: float, kappa: float, steps: int) -> np.ndarray:
    out = np.empty(steps + 1)
    out[0] = h = h0
    for t in range(1, steps + 1):
        h = habituate(h, tau, kappa)
        out[t] = h
    return out

