"""Round orchestration for the scalar-only federated protocol.

One round: the server samples clients; each sampled client replays the
global scalar history it missed (Rebuild), bringing its model and curvature
replica bitwise equal to the server state; it then runs tau local steps along
shared seed-derived directions, collecting tau x P LOCAL gradient scalars,
and resets its model to the round-start value; the server averages the
scalar matrices, reconstructs the global per-step deltas, advances the
model and the curvature EMA, and appends the round log to the ledger.

Everything that must agree across parties goes through shared helpers
(scale_direction, multi_perturbation_delta, ema_update) with fixed fold
orders: ascending client id, ascending local step, ascending perturbation.
That discipline is what makes replay, rebuild and the full-vector oracle
agree to the last bit, not merely to rounding error.
"""

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .curvature import DiagHessian, diagnostics, ema_update, inv_sqrt
from .errors import ConfigError, EstimatorFailureError, ProtocolOrderError
from .ledger import CommMeter, Ledger, RoundLog, WireCostModel, fetch_since, meter_round, record_round
from .rng import SeedSchedule, gaussian_vector, sample_without_replacement
from .tasks import QuadraticTask
from .zo import multi_perturbation_delta, scale_direction


@dataclass(frozen=True)
class RoundConfig:
    """Everything a run needs besides the task itself."""

    num_clients: int
    sampled_per_round: int
    rounds: int
    eta: float
    tau: int = 1
    perturbations: int = 1
    mu: float = 1e-3
    nu: float = 0.05
    epsilon: float = 1e-8
    beta_lower: float = 1e-6
    beta_upper: float = 1e6
    root_seed: int = 0
    sampling_seed: int = 1
    algorithm: str = "hiso"           # "hiso" | "decomfl" (forces nu = 0)
    quantize_wire: bool = False
    cost_model: WireCostModel = field(default_factory=WireCostModel)

    def validate(self):
        if self.num_clients < 1:
            raise ConfigError(f"num_clients must be >= 1, got {self.num_clients}", field="M")
        if not 1 <= self.sampled_per_round <= self.num_clients:
            raise ConfigError(
                f"sampled_per_round must lie in [1, {self.num_clients}], got {self.sampled_per_round}",
                field="m",
            )
        if self.tau < 1:
            raise ConfigError(f"tau must be >= 1, got {self.tau}", field="tau")
        if self.perturbations < 1:
            raise ConfigError(f"perturbations must be >= 1, got {self.perturbations}", field="P")
        if not self.eta > 0:
            raise ConfigError(f"eta must be positive, got {self.eta}", field="eta")
        if not self.mu > 0:
            raise ConfigError(f"mu must be positive, got {self.mu}", field="mu")
        if self.rounds < 1:
            raise ConfigError(f"rounds must be >= 1, got {self.rounds}", field="R")
        if self.algorithm not in ("hiso", "decomfl"):
            raise ConfigError(f"unknown algorithm {self.algorithm!r}", field="algorithm")
        schedule = self.schedule()
        schedule.validate_grid(self.rounds, self.tau, self.perturbations)
        return self

    def schedule(self) -> SeedSchedule:
        return SeedSchedule(root=self.root_seed)

    @property
    def effective_nu(self) -> float:
        # The baseline protocol is exactly this algorithm with the curvature
        # EMA switched off and an identity start.
        return 0.0 if self.algorithm == "decomfl" else self.nu

    def initial_hessian(self, dim: int) -> DiagHessian:
        return DiagHessian.identity(
            dim,
            nu=self.effective_nu,
            epsilon=self.epsilon,
            beta_lower=self.beta_lower,
            beta_upper=self.beta_upper,
        )


class DirectionProvider:
    """Cached seed -> raw Gaussian direction lookup shared by all parties.

    Purely an optimization: u(r, k, p) is a pure function of the schedule, so
    server, clients and oracles may share one cache without coupling.
    """

    def __init__(self, schedule: SeedSchedule, dim: int):
        self.schedule = schedule
        self.dim = dim
        self._cache = {}

    def u(self, r: int, k: int, p: int) -> np.ndarray:
        key = (r, k, p)
        got = self._cache.get(key)
        if got is None:
            got = gaussian_vector(self.schedule.perturbation_seed(r, k, p), self.dim)
            self._cache[key] = got
        return got


@dataclass
class ClientState:
    """A client's replica: model, curvature estimate, last participation."""

    id: int
    model: np.ndarray
    hessian: DiagHessian
    last_round: int = 0


@dataclass
class ServerState:
    model: np.ndarray
    hessian: DiagHessian
    ledger: Ledger
    meter: CommMeter


def sample_clients(num_clients: int, m: int, r: int, sampling_seed: int) -> np.ndarray:
    """Uniform m-subset for round r, ascending ids, independent of the
    perturbation streams (changing M or m never perturbs directions)."""
    seed = SeedSchedule(root=sampling_seed).sampling_seed(r)
    return sample_without_replacement(seed, num_clients, m)


def _quantize(a: np.ndarray) -> np.ndarray:
    return a.astype(np.float32).astype(np.float64)


def _apply_round(model, hessian, scalars, r, provider, eta):
    """Advance (model, H) through one recorded round of global scalars.

    The single code path for this recursion: the server runs it at
    aggregation time, every rebuilding client runs it at replay time, and
    the vector oracle runs it in fixed-order mode. Directions use the
    round-start curvature (frozen within the round); the EMA advances once
    per local step and only becomes visible to the next round.
    """
    isH = inv_sqrt(hessian)
    tau, P = scalars.shape
    for k in range(tau):
        zs = [scale_direction(provider.u(r, k, p), isH) for p in range(P)]
        delta = multi_perturbation_delta(scalars[k], zs)
        model = model - eta * delta
        hessian = ema_update(hessian, delta)
    return model, hessian


def client_rebuild(client: ClientState, missed, eta: float,
                   provider: DirectionProvider) -> ClientState:
    """Replay missed rounds' global scalars to resynchronize with the server.

    After the replay the client's model and curvature replica are bitwise
    equal to the server values for the current round: replay runs the exact
    arithmetic the server ran, on the exact values the ledger stored.
    """
    expected = client.last_round
    model, hessian = client.model, client.hessian
    for log in missed:
        if log.round != expected:
            raise ProtocolOrderError(
                f"rebuild feed has round {log.round}, expected {expected}"
            )
        model, hessian = _apply_round(model, hessian, log.scalars, log.round, provider, eta)
        expected += 1
    return replace(client, model=model, hessian=hessian, last_round=expected)


def client_local_update(client: ClientState, r: int, config: RoundConfig,
                        task, provider: DirectionProvider) -> np.ndarray:
    """Run tau local steps and return the (tau, P) LOCAL scalar matrix.

    The trajectory uses the client's own scalars; the model is reset to its
    round-start value afterwards (the caller's ClientState is untouched), so
    all durable state flows exclusively through the global scalars.
    """
    x = client.model
    isH = inv_sqrt(client.hessian)
    mu = config.mu
    scalars = np.empty((config.tau, config.perturbations))
    for k in range(config.tau):
        batch = task.draw_batch(client.id, r, k, provider.schedule)
        base = task.client_loss(client.id, x, batch)
        if not np.isfinite(base):
            raise EstimatorFailureError(
                f"client {client.id} base loss diverged at round {r}, step {k}",
                which="base", coords=(r, k, None),
            )
        zs = []
        for p in range(config.perturbations):
            z = scale_direction(provider.u(r, k, p), isH)
            zs.append(z)
            perturbed = task.client_loss(client.id, x + mu * z, batch)
            if not np.isfinite(perturbed):
                raise EstimatorFailureError(
                    f"client {client.id} perturbed loss diverged at round {r}, "
                    f"step {k}, perturbation {p}",
                    which="perturbed", coords=(r, k, p),
                )
            scalars[k, p] = (perturbed - base) / mu
        x = x - config.eta * multi_perturbation_delta(scalars[k], zs)
    return scalars


def aggregate_scalars(matrices, quantize: bool = False) -> np.ndarray:
    """Per-(step, perturbation) mean over clients, folded in ascending client
    order. Optionally models the 32-bit wire by rounding each uploaded matrix
    and the aggregated result."""
    acc = _quantize(matrices[0]) if quantize else matrices[0].copy()
    for mat in matrices[1:]:
        acc = acc + (_quantize(mat) if quantize else mat)
    acc = acc / len(matrices)
    return _quantize(acc) if quantize else acc


def server_aggregate(server: ServerState, matrices, r: int, config: RoundConfig,
                     provider: DirectionProvider):
    """Average the clients' scalar matrices and advance the global state."""
    if len(matrices) != config.sampled_per_round:
        raise ProtocolOrderError(
            f"expected {config.sampled_per_round} scalar matrices, got {len(matrices)}"
        )
    shape = (config.tau, config.perturbations)
    for mat in matrices:
        if mat.shape != shape:
            raise ProtocolOrderError(f"scalar matrix shape {mat.shape} != {shape}")
    global_scalars = aggregate_scalars(matrices, quantize=config.quantize_wire)
    log = RoundLog(round=r, scalars=global_scalars)
    model, hessian = _apply_round(
        server.model, server.hessian, global_scalars, r, provider, config.eta
    )
    return log, model, hessian


@dataclass
class RunResult:
    trace: list
    server: ServerState
    clients: list
    config: RoundConfig
    models: list = None  # per-round post-update server models, if requested

    def losses(self) -> np.ndarray:
        return np.array([rec["loss"] for rec in self.trace])


def _trace_record(r, loss, meter, prev_meter, hessian, evals, started, task):
    rec = {
        "round": r,
        "loss": loss,
        "uplink_bytes": meter.uplink_bytes - prev_meter.uplink_bytes,
        "downlink_bytes": meter.downlink_bytes - prev_meter.downlink_bytes,
        "cum_uplink_bytes": meter.uplink_bytes,
        "cum_downlink_bytes": meter.downlink_bytes,
        "h_min": float(hessian.diag.min()),
        "h_median": float(np.median(hessian.diag)),
        "h_max": float(hessian.diag.max()),
        "client_fn_evals": evals,
        "wall_time_s": time.perf_counter() - started,
    }
    if isinstance(task, QuadraticTask) and task.rotation is None:
        sigma, L = task.curvature_truth()
        diag = diagnostics(hessian, sigma, L)
        rec["kappa"] = diag.effective_rank_kappa
        rec["zeta"] = diag.whitening_rank_zeta
        rec["spectral_term"] = diag.spectral_term
    return rec


def run_training(config: RoundConfig, task, keep_models: bool = False) -> RunResult:
    """Execute R rounds of the scalar-only protocol."""
    config.validate()
    if task.num_clients != config.num_clients:
        raise ConfigError(
            f"task has {task.num_clients} clients, config says {config.num_clients}",
            field="M",
        )
    dim = task.dim
    provider = DirectionProvider(config.schedule(), dim)
    x0 = np.asarray(task.x0, dtype=np.float64) if hasattr(task, "x0") else np.zeros(dim)
    server = ServerState(
        model=x0.copy(),
        hessian=config.initial_hessian(dim),
        ledger=Ledger(num_clients=config.num_clients),
        meter=CommMeter(cost=config.cost_model),
    )
    clients = [
        ClientState(id=i, model=x0.copy(), hessian=config.initial_hessian(dim))
        for i in range(config.num_clients)
    ]
    trace = []
    models = [] if keep_models else None
    evals = 0
    started = time.perf_counter()
    for r in range(config.rounds):
        sampled = sample_clients(
            config.num_clients, config.sampled_per_round, r, config.sampling_seed
        )
        missed_counts = []
        matrices = []
        for cid in sampled:
            cid = int(cid)
            client = clients[cid]
            missed = fetch_since(server.ledger, client.last_round)
            missed_counts.append(len(missed))
            client = client_rebuild(client, missed, config.eta, provider)
            matrices.append(client_local_update(client, r, config, task, provider))
            evals += config.tau * (config.perturbations + 1)
            clients[cid] = replace(client, last_round=r)
        log, model, hessian = server_aggregate(server, matrices, r, config, provider)
        prev_meter = server.meter
        server = ServerState(
            model=model,
            hessian=hessian,
            ledger=record_round(server.ledger, log, [int(c) for c in sampled]),
            meter=meter_round(
                server.meter, config.sampled_per_round, config.tau,
                config.perturbations, missed_counts,
            ),
        )
        if keep_models:
            models.append(model.copy())
        trace.append(
            _trace_record(r, task.global_loss(model), server.meter, prev_meter,
                          hessian, evals, started, task)
        )
    return RunResult(trace=trace, server=server, clients=clients, config=config,
                     models=models)


def vector_oracle_run(config: RoundConfig, task, fixed_order: bool = True,
                      keep_models: bool = False) -> RunResult:
    """The same algorithm with state moved by value instead of by replay.

    Clients receive (model, curvature) directly from the server each round --
    no ledger, no reset-replay, no rebuild -- and the server advances global
    state from their uploads. With fixed_order=True the global deltas are
    reconstructed from the aggregated scalars through the very same reduction
    the scalar protocol uses, so the two runs must agree bitwise; any
    difference convicts the ledger/rebuild/reset machinery. With
    fixed_order=False the server instead averages the clients' per-step
    delta vectors (the natural model-averaging form), which is mathematically
    identical but floating-point distinct; agreement is then only expected to
    rounding accumulation.
    """
    config.validate()
    dim = task.dim
    provider = DirectionProvider(config.schedule(), dim)
    x0 = np.asarray(task.x0, dtype=np.float64) if hasattr(task, "x0") else np.zeros(dim)
    model = x0.copy()
    hessian = config.initial_hessian(dim)
    trace = []
    models = [] if keep_models else None
    evals = 0
    started = time.perf_counter()
    for r in range(config.rounds):
        sampled = sample_clients(
            config.num_clients, config.sampled_per_round, r, config.sampling_seed
        )
        matrices = []
        for cid in sampled:
            handed = ClientState(id=int(cid), model=model, hessian=hessian)
            matrices.append(client_local_update(handed, r, config, task, provider))
            evals += config.tau * (config.perturbations + 1)
        if fixed_order:
            global_scalars = aggregate_scalars(matrices, quantize=False)
            model, hessian = _apply_round(model, hessian, global_scalars, r,
                                          provider, config.eta)
        else:
            isH = inv_sqrt(hessian)
            for k in range(config.tau):
                zs = [scale_direction(provider.u(r, k, p), isH)
                      for p in range(config.perturbations)]
                client_deltas = [multi_perturbation_delta(mat[k], zs) for mat in matrices]
                delta = client_deltas[0].copy()
                for extra in client_deltas[1:]:
                    delta = delta + extra
                delta = delta / len(client_deltas)
                model = model - config.eta * delta
                hessian = ema_update(hessian, delta)
        if keep_models:
            models.append(model.copy())
        trace.append({"round": r, "loss": task.global_loss(model)})
    server = ServerState(model=model, hessian=hessian,
                         ledger=Ledger(num_clients=config.num_clients),
                         meter=CommMeter(cost=config.cost_model))
    return RunResult(trace=trace, server=server, clients=[], config=config,
                     models=models)
