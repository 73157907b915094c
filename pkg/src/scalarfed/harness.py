"""Experiment harness: run specs, verification suites, accounting, sweeps.

Every entry point is deterministic given its arguments, including the Monte
Carlo verifications (explicit seeds); a verification report re-run with its
own embedded seeds reproduces its measured values exactly.
"""

import csv
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import rng
from .curvature import fourth_moment_weighted
from .errors import ConfigError
from .fedsim import RoundConfig, run_training, vector_oracle_run
from .ledger import (CommMeter, WireCostModel, format_bytes, full_vector_bytes,
                     meter_round, per_client_scalar_bytes)
from .tasks import LogisticTask, QuadraticTask


# --- run specs ----------------------------------------------------------------

_ROUND_FIELDS = {
    "M": "num_clients", "m": "sampled_per_round", "R": "rounds", "eta": "eta",
    "tau": "tau", "P": "perturbations", "mu": "mu", "nu": "nu",
    "epsilon": "epsilon", "beta_lower": "beta_lower", "beta_upper": "beta_upper",
    "root_seed": "root_seed", "sampling_seed": "sampling_seed",
    "algorithm": "algorithm", "quantize_wire": "quantize_wire",
}


def build_task(task_spec: dict):
    spec = dict(task_spec)
    kind = spec.pop("kind", None)
    try:
        if kind == "quadratic":
            return QuadraticTask.build(**spec)
        if kind == "logistic":
            return LogisticTask.build(**spec)
    except TypeError as exc:
        raise ConfigError(f"bad task parameters: {exc}", field="task") from exc
    raise ConfigError(f"unknown task kind {kind!r}", field="task.kind")


def build_round_config(round_spec: dict) -> RoundConfig:
    spec = dict(round_spec)
    cost = WireCostModel(
        bytes_per_scalar=spec.pop("bytes_per_scalar", 4),
        bytes_per_seed=spec.pop("bytes_per_seed", 0),
    )
    kwargs = {"cost_model": cost}
    for key, value in spec.items():
        if key not in _ROUND_FIELDS:
            raise ConfigError(f"unknown round field {key!r}", field=key)
        kwargs[_ROUND_FIELDS[key]] = value
    config = RoundConfig(**kwargs)
    config.validate()
    return config


def load_spec(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def run_spec(spec: dict, output_dir=None):
    """Execute a declarative spec: build the task, run training, emit files."""
    if "task" not in spec or "round" not in spec:
        raise ConfigError("spec needs 'task' and 'round' sections", field="spec")
    task = build_task(spec["task"])
    config = build_round_config(spec["round"])
    if task.num_clients != config.num_clients:
        raise ConfigError("task client count != round M", field="M")
    result = run_training(config, task, keep_models=bool(spec.get("keep_models", False)))
    if output_dir is not None:
        write_trace(result.trace, output_dir)
        if spec.get("dump_hessian", False):
            import os

            path = os.path.join(output_dir, "hessian_diag.f64")
            result.server.hessian.diag.astype("<f8").tofile(path)
    return result


def write_trace(trace, output_dir):
    import os

    os.makedirs(output_dir, exist_ok=True)
    jsonl = os.path.join(output_dir, "trace.jsonl")
    with open(jsonl, "w") as fh:
        for rec in trace:
            fh.write(json.dumps(rec) + "\n")
    csv_path = os.path.join(output_dir, "summary.csv")
    keys = list(trace[0].keys())
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        for rec in trace:
            writer.writerow({k: rec.get(k, "") for k in keys})
    return jsonl, csv_path


# --- verification reports -------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    tolerance: float
    samples: int
    runtime_s: float
    detail: str = ""


@dataclass
class VerificationReport:
    seed: int
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, *args, **kwargs):
        self.checks.append(CheckResult(*args, **kwargs))

    def to_dict(self) -> dict:
        return {"seed": self.seed, "passed": self.passed,
                "checks": [asdict(c) for c in self.checks]}

    def lines(self):
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            yield (f"[{status}] {c.name}: measured={c.measured:.3e} "
                   f"tol={c.tolerance:.3e} n={c.samples} ({c.runtime_s:.2f}s)"
                   + (f" {c.detail}" if c.detail else ""))


def _uniform(seed: int, n: int, lo: float, hi: float) -> np.ndarray:
    u = (rng.raw_uint64(seed, n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
    return lo + (hi - lo) * u


def _random_moment_pair(seed: int, dim: int):
    """(Lambda, W) with every closed-form target entry bounded away from zero,
    so the 3% entrywise relative gate measures Monte Carlo noise, not division
    by a vanishing target. W is drawn directly as a symmetric matrix (mirrored
    upper triangle) with |W_ij| in [0.5, 1.5] and a positive diagonal, which
    keeps both the off-diagonal targets and Tr(W Lam) away from zero."""
    lam = _uniform(rng.mix(seed, 1), dim, 0.8, 1.6)
    mags = _uniform(rng.mix(seed, 2), dim * dim, 1.0, 1.5).reshape(dim, dim)
    signs = np.where(rng.raw_uint64(rng.mix(seed, 3), dim * dim) % np.uint64(2) == 0,
                     1.0, -1.0).reshape(dim, dim)
    W = np.triu(mags * signs)
    W = W + np.triu(W, 1).T
    np.fill_diagonal(W, np.abs(np.diagonal(W)))
    return lam, W


def _empirical_fourth_moment(lam: np.ndarray, W: np.ndarray, n: int, seed: int) -> np.ndarray:
    dim = lam.shape[0]
    Z = rng.gaussian_vector(seed, n * dim).reshape(n, dim) * np.sqrt(lam)
    q = np.einsum("ni,ij,nj->n", Z, W, Z)
    return (Z * q[:, None]).T @ Z / n


def verify_lemmas(dim: int = 6, samples: int = 10**6, seed: int = 0,
                  pairs: int = 5) -> VerificationReport:
    """Monte Carlo checks of the two Gaussian identities the analysis rests on.

    (a) fourth moment, weighted: E[z z^T W z z^T] = Tr(W L) L + 2 L W L for
        z ~ N(0, L), diagonal L, symmetric W -- entrywise 3% at 1e6 draws;
    (b) the standard-normal specialization Tr(W) I + 2W;
    (c) forward-difference unbiasedness: on a quadratic the estimator's mean
        equals the true gradient exactly (odd moments vanish), tested to
        three standard errors per coordinate.
    """
    if dim > 6:
        raise ConfigError("fourth-moment checks are sized for dim <= 6", field="dim")
    report = VerificationReport(seed=seed)
    # 3% absorbs the Monte Carlo noise of fourth moments at 1e6 draws; the
    # gate scales as 1/sqrt(N) when run with a different budget
    tol = 0.03 * float(np.sqrt(10**6 / samples))

    for i in range(pairs):
        t0 = time.perf_counter()
        lam, W = _random_moment_pair(rng.mix(seed, 10, i), dim)
        target = fourth_moment_weighted(lam, W)
        est = _empirical_fourth_moment(lam, W, samples, rng.mix(seed, 11, i))
        rel = float(np.max(np.abs(est - target) / np.abs(target)))
        report.add(f"fourth-moment weighted pair {i}", rel <= tol, rel, tol,
                   samples, time.perf_counter() - t0)

    t0 = time.perf_counter()
    lam = np.ones(dim)
    _, W = _random_moment_pair(rng.mix(seed, 12), dim)
    target = float(np.trace(W)) * np.eye(dim) + 2.0 * W
    est = _empirical_fourth_moment(lam, W, samples, rng.mix(seed, 13))
    rel = float(np.max(np.abs(est - target) / np.abs(target)))
    report.add("fourth-moment standard normal", rel <= tol, rel, tol,
               samples, time.perf_counter() - t0)

    # Pinned hand cases: identity pair gives (d + 2) I; diag cases by arithmetic.
    t0 = time.perf_counter()
    hand = fourth_moment_weighted(np.ones(3), np.eye(3))
    ok_hand = np.allclose(hand, 5.0 * np.eye(3), rtol=0, atol=0)
    hand2 = fourth_moment_weighted(np.array([1.0, 4.0]), np.diag([2.0, 0.0]))
    ok_hand = ok_hand and np.allclose(hand2, np.diag([6.0, 8.0]), rtol=0, atol=0)
    report.add("fourth-moment closed-form hand cases", bool(ok_hand),
               0.0, 0.0, 0, time.perf_counter() - t0)

    # (c) estimator mean on a quadratic: A = diag(1, 3), x = (1, 1), grad (1, 3).
    t0 = time.perf_counter()
    n = 10**5
    a = np.array([1.0, 3.0])
    x = np.array([1.0, 1.0])
    mu = 1e-5
    U = rng.gaussian_vector(rng.mix(seed, 14), n * 2).reshape(n, 2)
    f0 = 0.5 * float(a @ (x * x))
    fp = 0.5 * ((x + mu * U) ** 2 @ a)
    g = (fp - f0) / mu
    est_grad = (U * g[:, None]).mean(axis=0)
    se = (U * g[:, None]).std(axis=0) / np.sqrt(n)
    dev = float(np.max(np.abs(est_grad - a * x) / (3.0 * se)))
    report.add("forward-difference unbiasedness (quadratic)", dev <= 1.0, dev,
               1.0, n, time.perf_counter() - t0,
               detail=f"mean={est_grad.round(4).tolist()} target={ (a*x).tolist() }")
    return report


# --- scalar-vs-vector equivalence ----------------------------------------------


def fuzz_config(seed: int, index: int):
    """One fuzzed (config, task) pair; quadratics mostly, logistic every 4th."""
    s = rng.mix(seed, 20, index)

    def draw(lo, hi, salt):
        return lo + int(rng.raw_uint64(rng.mix(s, salt), 1)[0] % np.uint64(hi - lo + 1))

    dim = draw(4, 128, 1)
    M = draw(2, 16, 2)
    m = draw(1, M, 3)
    tau = draw(1, 4, 4)
    P = draw(1, 8, 5)
    R = draw(3, 30, 6)
    config = RoundConfig(
        num_clients=M, sampled_per_round=m, rounds=R, eta=0.01, tau=tau,
        perturbations=P, mu=1e-4, nu=0.1, root_seed=rng.mix(s, 7),
        sampling_seed=rng.mix(s, 8),
    )
    if index % 4 == 3:
        task = LogisticTask.build(dim=min(dim, 48), num_clients=M,
                                  seed=rng.mix(s, 9), n_samples=240, batch_size=16)
    else:
        task = QuadraticTask.build(dim=dim, num_clients=M, seed=rng.mix(s, 9),
                                   spectrum_variance=1.0, offset_scale=0.1,
                                   x0_scale=0.5)
    return config, task


def verify_equivalence(fuzz_count: int = 20, seed: int = 0,
                       fixed_order: bool = True) -> VerificationReport:
    """Scalar-only protocol vs full-vector oracle on fuzzed configurations.

    In fixed-order mode the per-round server models must agree bitwise: the
    scalar-protocol machinery (ledger, rebuild, reset) is the only thing that
    can break the equality. In natural-order mode agreement is to 1e-9.
    """
    report = VerificationReport(seed=seed)
    for i in range(fuzz_count):
        t0 = time.perf_counter()
        config, task = fuzz_config(seed, i)
        scalar = run_training(config, task, keep_models=True)
        oracle = vector_oracle_run(config, task, fixed_order=fixed_order,
                                   keep_models=True)
        gaps = [float(np.max(np.abs(a - b)))
                for a, b in zip(scalar.models, oracle.models)]
        worst = max(gaps)
        divergent = next((r for r, g in enumerate(gaps) if g > 0), None)
        tol = 0.0 if fixed_order else 1e-9
        name = (f"scalar==vector config {i} (d={task.dim}, M={config.num_clients}, "
                f"m={config.sampled_per_round}, tau={config.tau}, "
                f"P={config.perturbations}, R={config.rounds})")
        report.add(name, worst <= tol, worst, tol, config.rounds,
                   time.perf_counter() - t0,
                   detail="" if divergent is None else f"first divergent round {divergent}")
    return report


# --- communication accounting ---------------------------------------------------


def account(rounds: int, m: int = 2, tau: int = 1, perturbations: int = 5,
            dim: int = None, cost: WireCostModel = WireCostModel()) -> dict:
    """Byte accounting for one run length: metered scalar protocol vs the
    full-vector formula, per client. dim=None omits the full-vector rows."""
    if rounds < 1:
        raise ConfigError(f"rounds must be >= 1, got {rounds}", field="rounds")
    if dim is not None and dim < 1:
        raise ConfigError(f"dim must be >= 1, got {dim}", field="dim")
    meter = CommMeter(cost=cost)
    for r in range(rounds):
        # Always-sampled steady state: each client replays exactly one round,
        # except at round 0 where there is no history yet.
        missed = [0] * m if r == 0 else [1] * m
        meter = meter_round(meter, m, tau, perturbations, missed)
    total = meter.uplink_bytes + meter.downlink_bytes
    out = {
        "rounds": rounds, "m": m, "tau": tau, "perturbations": perturbations,
        "metered_uplink_bytes": meter.uplink_bytes,
        "metered_downlink_bytes": meter.downlink_bytes,
        "metered_total_bytes": total,
        "per_client_bytes": total / m,
        "per_client_formula_bytes": per_client_scalar_bytes(rounds, tau, perturbations, cost),
    }
    if dim is not None:
        vec_one = full_vector_bytes(dim)
        out["full_vector_bytes_per_direction"] = vec_one
        out["full_vector_bytes_per_round_per_client"] = 2 * vec_one
        scalar_round = 2 * tau * perturbations * cost.bytes_per_scalar
        out["savings_ratio_single_direction"] = vec_one / scalar_round
        out["full_vector_total_per_client"] = 2 * vec_one * rounds
        out["savings_ratio_total"] = (2 * vec_one * rounds) / max(out["per_client_bytes"], 1)
    return out


def account_lines(row: dict):
    yield (f"scalar protocol, {row['rounds']} rounds (m={row['m']}, tau={row['tau']}, "
           f"P={row['perturbations']}):")
    yield f"  metered uplink   {format_bytes(row['metered_uplink_bytes'])}"
    yield f"  metered downlink {format_bytes(row['metered_downlink_bytes'])}"
    yield f"  per client       {format_bytes(int(row['per_client_bytes']))}"
    if "full_vector_bytes_per_direction" in row:
        yield (f"full-vector baseline: {format_bytes(row['full_vector_bytes_per_direction'])} "
               f"per direction per round per client")
        yield (f"  savings ratio (one full-vector direction vs one scalar round): "
               f"{row['savings_ratio_single_direction']:.3e}")
        yield (f"  savings ratio over {row['rounds']} rounds: "
               f"{row['savings_ratio_total']:.3e}")


# --- sweeps ---------------------------------------------------------------------


def rounds_to_threshold(losses, threshold: float):
    for r, loss in enumerate(losses):
        if loss <= threshold:
            return r
    return None


def sweep(spec: dict, nu_list=None, tau_list=None, p_list=None, eta_list=None,
          loss_factor: float = 10.0, max_runs: int = 64):
    """Cross-product ablation runs; one summary row per combination.

    rounds_to_threshold is measured against the initial loss divided by
    loss_factor; None means the budget R never reached it.
    """
    task = build_task(spec["task"])
    base = build_round_config(spec["round"])
    # None means "hold at the base value"; an explicitly empty list is an
    # empty grid and yields an empty table
    nu_list = [base.nu] if nu_list is None else list(nu_list)
    tau_list = [base.tau] if tau_list is None else list(tau_list)
    p_list = [base.perturbations] if p_list is None else list(p_list)
    eta_list = [base.eta] if eta_list is None else list(eta_list)
    combos = [(nu, tau, P, eta) for nu in nu_list for tau in tau_list
              for P in p_list for eta in eta_list]
    if len(combos) > max_runs:
        raise ConfigError(
            f"sweep grid of {len(combos)} runs exceeds budget {max_runs}", field="grid"
        )
    initial = task.global_loss(np.asarray(task.x0, dtype=np.float64))
    rows = []
    for nu, tau, P, eta in combos:
        from dataclasses import replace as dc_replace

        config = dc_replace(base, nu=nu, tau=tau, perturbations=P, eta=eta)
        result = run_training(config, task)
        losses = result.losses()
        rows.append({
            "nu": nu, "tau": tau, "P": P, "eta": eta,
            "algorithm": config.algorithm,
            "final_loss": float(losses[-1]),
            "best_loss": float(losses.min()),
            "rounds_to_threshold": rounds_to_threshold(losses, initial / loss_factor),
            "uplink_bytes": result.server.meter.uplink_bytes,
            "downlink_bytes": result.server.meter.downlink_bytes,
        })
    return rows


def write_sweep_csv(rows, path):
    fields = ["nu", "tau", "P", "eta", "algorithm", "final_loss", "best_loss",
              "rounds_to_threshold", "uplink_bytes", "downlink_bytes"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    return path
