"""Reproduce the calibration table behind the packaged micro-lab defaults.

Runs every experiment arm the directional claims rest on, at the packaged
defaults, and prints the measured quantities next to the thresholds the
test suite asserts.  Expect a few minutes of runtime.

Usage: python3 scripts/calibrate.py [--seeds N]
"""

from __future__ import annotations

import argparse
from dataclasses import replace

import numpy as np

from diffsift.curator import CurationVariant
from diffsift.lab.experiment import LabConfig, run_experiment, sign_test

HARD_RATIOS = (0.0, 0.05, 0.135, 0.25)


def ood(reports) -> np.ndarray:
    return np.array([r.final_ood_acc for r in reports])


def idacc(reports) -> np.ndarray:
    return np.array([r.final_id_acc for r in reports])


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=20)
    args = parser.parse_args()

    base = replace(LabConfig(), n_seeds=args.seeds)
    arms: dict[str, list] = {}
    arms.update(run_experiment(replace(base, variant=CurationVariant.BUCKET_ONLY)))
    arms.update(run_experiment(replace(base, variant=CurationVariant.SFT_M)))
    arms.update(run_experiment(replace(base, variant=CurationVariant.FULL)))
    arms.update(run_experiment(replace(base, trainer="grpo")))
    arms.update(
        run_experiment(replace(base, variant=CurationVariant.HARD_RATIO, hard_ratios=HARD_RATIOS))
    )

    med_id, hard_id = idacc(arms["bucket-medium"]).mean(), idacc(arms["bucket-hard"]).mean()
    wins, n, p = sign_test(list(ood(arms["bucket-medium"]) - ood(arms["bucket-hard"])))
    print("medium-vs-hard bucket training")
    print(f"  OOD: medium {ood(arms['bucket-medium']).mean():.4f}  hard {ood(arms['bucket-hard']).mean():.4f}")
    print(f"  OOD sign test: {wins}/{n} seeds favor medium, one-sided p = {p:.2e} (bound 0.05)")
    print(f"  ID gap medium-hard: {med_id - hard_id:+.4f} (bound 0.05)")

    print("hard-ratio sweep, mean OOD")
    for rho in HARD_RATIOS:
        print(f"  rho={rho:<5g} {ood(arms[f'hard-ratio-{rho:g}']).mean():.4f}")
    wins, n, p = sign_test(list(ood(arms["hard-ratio-0"]) - ood(arms["hard-ratio-0.25"])))
    print(f"  sign test rho 0 > 0.25: {wins}/{n}, one-sided p = {p:.2e} (bound 0.05)")

    norms = {
        bucket: float(np.mean([np.mean(r.bucket_grad_norms[bucket][:50]) for r in arms["sft-full"]]))
        for bucket in ("easy", "medium", "hard")
    }
    print("mean SFT gradient norm per bucket, first 50 steps")
    print(f"  easy {norms['easy']:.4f}  medium {norms['medium']:.4f}  hard {norms['hard']:.4f}")

    m, g, full = ood(arms["sft-m"]).mean(), ood(arms["grpo"]).mean(), ood(arms["sft-full"]).mean()
    print("medium-only SFT vs GRPO-on-full vs full-set SFT, mean OOD")
    print(f"  sft-m {m:.4f}  grpo {g:.4f}  sft-full {full:.4f}")
    print(f"  |sft-m - grpo| = {abs(m - g):.4f} (bound 0.02); both must exceed sft-full")


if __name__ == "__main__":
    main()
