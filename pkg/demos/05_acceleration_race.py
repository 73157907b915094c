#!/usr/bin/env python3
"""Race the preconditioned method against its identity-curvature baseline.

Same protocol, same wire cost per round; the only difference is whether the
curvature EMA is on (nu > 0) or off (the baseline special case, H = I
forever). On a long-tailed quadratic the preconditioned run reaches the
baseline's 10x-reduction loss level in roughly half the rounds. Both methods
get the same 5-point learning-rate grid and run their own best.
"""

import numpy as np

import scalarfed as sf

print(__doc__)

GRID = (0.00025, 0.0005, 0.001, 0.002, 0.004)

task = sf.QuadraticTask.build(dim=200, num_clients=8, seed=212,
                              spectrum_variance=3.0, offset_scale=0.0002,
                              x0_scale=0.01)
sigma = task.spectrum
print(f"task: d=200 log-normal spectrum, kappa = {sigma.sum()/sigma.max():.1f} "
      f"(strongly low effective rank), M=8 clients, 4 sampled, tau=1, P=5")
L0 = task.global_loss(task.x0)
print(f"initial loss {L0:.4f}, 10x target {L0/10:.4f}\n")


def run(eta, nu, rounds, algorithm):
    cfg = sf.RoundConfig(num_clients=8, sampled_per_round=4, rounds=rounds, eta=eta,
                         tau=1, perturbations=5, mu=1e-5, nu=nu,
                         root_seed=1234, sampling_seed=77, algorithm=algorithm)
    return sf.run_training(cfg, task).losses()


def first_below(losses, threshold):
    hit = np.nonzero(losses <= threshold)[0]
    return int(hit[0]) if hit.size else None


print("baseline grid (identity curvature):")
best = None
for eta in GRID:
    rt = first_below(run(eta, 0.0, 700, "decomfl"), L0 / 10)
    print(f"  eta={eta}: reaches 10x at round {rt}")
    if rt is not None and (best is None or rt < best[1]):
        best = (eta, rt)
eta_b, R = best
threshold = float(run(eta_b, 0.0, R + 1, "decomfl")[R])
print(f"baseline best: eta={eta_b}, R={R}, loss at R = {threshold:.5f}\n")

print("preconditioned grid (curvature EMA on, nu=0.05):")
hbest = None
for eta in GRID:
    rt = first_below(run(eta, 0.05, R + 1, "hiso"), threshold)
    print(f"  eta={eta}: reaches the baseline's round-{R} loss at round {rt}")
    if rt is not None and (hbest is None or rt < hbest[1]):
        hbest = (eta, rt)

eta_h, reached = hbest
print(f"\npreconditioned best: eta={eta_h}, crossed at round {reached}")
print(f"speedup in rounds (and therefore in bytes): {R / reached:.2f}x")
print("the wire cost per round is identical, so the byte savings equal the round savings")
