#!/usr/bin/env python3
"""Write a synthetic train/test corpus pair for the other demo scripts.

Usage: python scripts/make_toy_corpus.py [--out-dir toy_data] [--n-train 64]
"""

import argparse
import os

from sentigraph.corpus import save_dataset
from sentigraph.synthetic import make_synthetic_corpus


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="toy_data")
    parser.add_argument("--n-train", type=int, default=64)
    parser.add_argument("--n-test", type=int, default=24)
    parser.add_argument("--seed", type=int, default=1)
    args = parser.parse_args()

    os.makedirs(args.out_dir, exist_ok=True)
    train_path = os.path.join(args.out_dir, "train.jsonl")
    test_path = os.path.join(args.out_dir, "test.jsonl")
    save_dataset(train_path, make_synthetic_corpus(args.n_train, seed=args.seed))
    save_dataset(test_path, make_synthetic_corpus(args.n_test, seed=args.seed + 1))
    print(f"wrote {train_path} ({args.n_train} samples) and {test_path} ({args.n_test} samples)")


if __name__ == "__main__":
    main()
