"""Desk-scale federated objectives with known ground truth.

Two task families carry all the checkable properties: quadratics with a
controlled diagonal spectrum (exact gradients, exact curvature, so estimator
bias/variance and the preconditioner diagnostics are verifiable against
closed forms) and synthetic regularized logistic regression with a Dirichlet
non-IID shard assignment (a real stochastic-batch loss surface, still small
enough to evaluate globally in milliseconds).
"""

from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import ConfigError, InvalidDimensionError


def make_lognormal_spectrum(dim: int, variance: float, seed: int) -> np.ndarray:
    """Eigenvalue vector exp(g) with g ~ N(0, variance), deterministic in seed.

    The long right tail (a handful of large eigenvalues over a near-flat bulk)
    is the low-effective-rank regime the preconditioner targets.
    """
    if dim < 1:
        raise InvalidDimensionError(f"dim must be >= 1, got {dim}")
    if not variance > 0:
        raise ConfigError(f"variance must be positive, got {variance}", field="variance")
    g = rng.gaussian_vector(rng.mix(seed, rng.DOMAIN_TASK, 0), dim)
    return np.exp(g * np.sqrt(variance))


@dataclass(frozen=True)
class QuadraticTask:
    """Federation of quadratics sharing a spectrum, with per-client centers.

    Client i's loss is 0.5 * (x - c_i)^T A (x - c_i) where A = Diag(spectrum)
    (optionally conjugated by a random rotation). Centers are a common shift
    plus zero-mean per-client offsets, so the global optimum sits exactly at
    the shift and the offset scale is a clean heterogeneity knob.

    Deterministic per client: the batch handle is accepted and ignored.
    """

    spectrum: np.ndarray
    centers: np.ndarray          # (M, d)
    x0: np.ndarray
    rotation: np.ndarray = None  # optional orthogonal map (d, d)

    @classmethod
    def build(cls, dim, num_clients, seed, spectrum_variance=3.0,
              offset_scale=0.0, shift=0.0, x0_scale=1.0, x0_mode="uniform",
              rotate=False):
        spectrum = make_lognormal_spectrum(dim, spectrum_variance, seed)
        offsets = np.stack([
            rng.gaussian_vector(rng.mix(seed, rng.DOMAIN_TASK, 1, i), dim)
            for i in range(num_clients)
        ])
        offsets -= offsets.mean(axis=0)  # exact zero mean: optimum stays at the shift
        rotation = None
        if rotate:
            raw = rng.gaussian_vector(rng.mix(seed, rng.DOMAIN_TASK, 2), dim * dim)
            rotation, _ = np.linalg.qr(raw.reshape(dim, dim))
        if x0_mode == "uniform":
            x0 = x0_scale * np.ones(dim)
        elif x0_mode == "mode_energy":
            # equal loss contribution per eigenmode: x0_i = s / sqrt(sigma_i),
            # the spread-out displacement a fine-tuning start resembles
            # (otherwise the few largest eigenvalues own the entire objective)
            x0 = x0_scale / np.sqrt(spectrum)
        else:
            raise ConfigError(f"unknown x0_mode {x0_mode!r}", field="x0_mode")
        return cls(
            spectrum=spectrum,
            centers=shift + offset_scale * offsets,
            x0=x0,
            rotation=rotation,
        )

    @property
    def dim(self) -> int:
        return self.spectrum.shape[0]

    @property
    def num_clients(self) -> int:
        return self.centers.shape[0]

    def _apply_A(self, v):
        if self.rotation is None:
            return self.spectrum * v
        return self.rotation.T @ (self.spectrum * (self.rotation @ v))

    def draw_batch(self, client, r, k, schedule):
        return None

    def client_loss(self, client: int, x: np.ndarray, batch=None) -> float:
        d = x - self.centers[client]
        return 0.5 * float(d @ self._apply_A(d))

    def client_grad(self, client: int, x: np.ndarray) -> np.ndarray:
        """Analytic gradient; oracle only, never consumed by the optimizer."""
        return self._apply_A(x - self.centers[client])

    def global_loss(self, x: np.ndarray) -> float:
        return float(np.mean([self.client_loss(i, x) for i in range(self.num_clients)]))

    def global_grad(self, x: np.ndarray) -> np.ndarray:
        return self._apply_A(x - self.centers.mean(axis=0))

    def hessian_diag(self) -> np.ndarray:
        if self.rotation is None:
            return self.spectrum.copy()
        return np.einsum("ij,j,ij->i", self.rotation.T, self.spectrum, self.rotation.T)

    def curvature_truth(self):
        """(diagonal Sigma, L) for the preconditioner diagnostics; only
        meaningful without rotation, where the Hessian is exactly diagonal."""
        sigma = self.hessian_diag()
        return sigma, float(self.spectrum.max())


@dataclass(frozen=True)
class DirichletPartition:
    """Sample-to-client assignment with Dirichlet(alpha) class proportions."""

    alpha: float
    num_clients: int
    assignment: np.ndarray  # (n_samples,) client index per sample

    def shard(self, client: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == client)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.num_clients)


def partition_dirichlet(labels, num_clients: int, alpha: float, seed: int,
                        max_tries: int = 100) -> DirichletPartition:
    """Non-IID shard assignment: per-class proportions drawn from
    Dirichlet(alpha * 1_M), resampled until no client is empty."""
    labels = np.asarray(labels)
    if num_clients < 1:
        raise ConfigError(f"num_clients must be >= 1, got {num_clients}", field="M")
    if not alpha > 0:
        raise ConfigError(f"alpha must be positive, got {alpha}", field="alpha")
    if labels.shape[0] < num_clients:
        raise ConfigError(
            f"{labels.shape[0]} samples cannot cover {num_clients} clients", field="M"
        )
    classes = np.unique(labels)
    for attempt in range(max_tries):
        gen = np.random.Generator(
            np.random.Philox(key=rng.mix(seed, rng.DOMAIN_TASK, 3, attempt))
        )
        assignment = np.empty(labels.shape[0], dtype=np.int64)
        for cls in classes:
            idx = np.flatnonzero(labels == cls)
            gen.shuffle(idx)
            proportions = gen.dirichlet(np.full(num_clients, alpha))
            cuts = (np.cumsum(proportions)[:-1] * idx.size).astype(int)
            for client, chunk in enumerate(np.split(idx, cuts)):
                assignment[chunk] = client
        if np.all(np.bincount(assignment, minlength=num_clients) > 0):
            return DirichletPartition(alpha=alpha, num_clients=num_clients,
                                      assignment=assignment)
    raise ConfigError(
        f"could not produce a partition with no empty client in {max_tries} tries",
        field="alpha",
    )


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True)
class LogisticTask:
    """L2-regularized logistic regression on synthetic Gaussian class blobs,
    sharded non-IID across clients."""

    features: np.ndarray   # (n, d)
    labels: np.ndarray     # (n,) in {0, 1}
    partition: DirichletPartition
    l2: float = 0.0
    batch_size: int = 32
    _shards: tuple = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(
            self, "_shards",
            tuple(self.partition.shard(i) for i in range(self.partition.num_clients)),
        )

    @classmethod
    def build(cls, dim, num_clients, seed, n_samples=2000, alpha=1.0,
              separation=2.0, l2=1e-3, batch_size=32):
        if n_samples > 10_000 or dim > 512:
            raise ConfigError("synthetic logistic tasks are desk-scale: n <= 10000, d <= 512")
        gen = np.random.Generator(np.random.Philox(key=rng.mix(seed, rng.DOMAIN_TASK, 4)))
        labels = (np.arange(n_samples) % 2).astype(np.int64)
        direction = gen.normal(size=dim)
        direction /= np.linalg.norm(direction)
        features = gen.normal(size=(n_samples, dim))
        features += np.where(labels[:, None] == 1, 1.0, -1.0) * (separation / 2) * direction
        partition = partition_dirichlet(labels, num_clients, alpha, seed)
        return cls(features=features, labels=labels, partition=partition,
                   l2=l2, batch_size=batch_size)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_clients(self) -> int:
        return self.partition.num_clients

    def draw_batch(self, client, r, k, schedule) -> np.ndarray:
        """Batch of sample indices from the client's shard, keyed purely by
        (client, round, step) so replays and oracles see identical data."""
        shard = self._shards[client]
        pick = rng.uniform_indices(schedule.batch_seed(client, r, k),
                                   min(self.batch_size, shard.size), shard.size)
        return shard[pick]

    def _loss_on(self, idx, x):
        phi = self.features[idx]
        y = 2.0 * self.labels[idx] - 1.0
        margins = -y * (phi @ x)
        # log(1 + exp(m)) with the large-margin branch kept linear for stability
        losses = np.where(margins > 30, margins, np.log1p(np.exp(np.minimum(margins, 30))))
        return float(losses.mean() + 0.5 * self.l2 * (x @ x))

    def client_loss(self, client: int, x: np.ndarray, batch=None) -> float:
        idx = self._shards[client] if batch is None else batch
        return self._loss_on(idx, x)

    def client_grad(self, client: int, x: np.ndarray, batch=None) -> np.ndarray:
        idx = self._shards[client] if batch is None else batch
        phi = self.features[idx]
        y = 2.0 * self.labels[idx] - 1.0
        s = _sigmoid(-y * (phi @ x))
        return -(phi * (s * y)[:, None]).mean(axis=0) + self.l2 * x

    def global_loss(self, x: np.ndarray) -> float:
        return self._loss_on(np.arange(self.labels.shape[0]), x)

    def global_grad(self, x: np.ndarray) -> np.ndarray:
        phi = self.features
        y = 2.0 * self.labels - 1.0
        s = _sigmoid(-y * (phi @ x))
        return -(phi * (s * y)[:, None]).mean(axis=0) + self.l2 * x

    def hessian_diag(self, x: np.ndarray = None) -> np.ndarray:
        """Gauss-Newton diagonal: mean of s(1-s) * phi_j^2 plus the ridge."""
        x = np.zeros(self.dim) if x is None else x
        p = _sigmoid(self.features @ x)
        w = p * (1.0 - p)
        return (self.features**2 * w[:, None]).mean(axis=0) + self.l2


def heterogeneity_sigma(task, probes) -> float:
    """Observable for the bounded-heterogeneity constant: the largest
    client-vs-global gradient gap over a set of probe points."""
    worst = 0.0
    for x in probes:
        g = task.global_grad(x)
        for i in range(task.num_clients):
            worst = max(worst, float(np.linalg.norm(task.client_grad(i, x) - g)))
    return worst
