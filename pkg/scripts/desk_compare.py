#!/usr/bin/env python3
"""Train DCRNN+BiLSTM+Ada and MMoE on generated data and write a side-by-side report.

    python scripts/desk_compare.py --out runs/desk --n-train 100000 --n-test 20000
"""

import argparse
import logging
from pathlib import Path

from dcrnn import DCRNN, MMoE, DcrnnConfig, LossConfig, MmoeConfig, SharingPlan, SynthSpec, TrainConfig
from dcrnn import compare_report, gen_synthetic, train


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/desk")
    ap.add_argument("--n-train", type=int, default=100_000)
    ap.add_argument("--n-test", type=int, default=20_000)
    ap.add_argument("--rho", type=float, default=0.8)
    ap.add_argument("--epochs", type=int, default=3)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    train_data = gen_synthetic(SynthSpec(seed=args.seed, n_examples=args.n_train, rho=args.rho))
    test_data = gen_synthetic(SynthSpec(seed=args.seed + 1, n_examples=args.n_test, rho=args.rho))
    vocab = train_data.schema.vocab_sizes
    cfg = TrainConfig(epochs=args.epochs, batch_size=1024, learning_rate=1e-4, seed=args.seed)

    dcrnn = DCRNN(DcrnnConfig(vocab, SharingPlan(2, 3, 1)), seed=args.seed)
    mmoe = MMoE(MmoeConfig(vocab), seed=args.seed)
    for model in (dcrnn, mmoe):
        logging.info("training %s", model.config.name)
        train(model, train_data, cfg, LossConfig(), eval_data=test_data)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = compare_report(dcrnn, mmoe, test_data)
    report.write(out / "compare")
    print(report.table(), end="")


if __name__ == "__main__":
    main()
