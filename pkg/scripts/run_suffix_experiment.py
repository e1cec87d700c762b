"""Fine-tune on the suffix corpus and compare against the untrained embedder.

Prints per-epoch training stats and the before/after dev token accuracy.
Takes a couple of minutes with the default sizes.
"""

import argparse
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from copytag.embeddings import HashedWindowEmbedder
from copytag.evaluation import zero_shot_eval
from copytag.synthetic import suffix_corpus
from copytag.trainer import TrainConfig, fine_tune, save_checkpoint


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--train-sentences", type=int, default=500)
    parser.add_argument("--dev-sentences", type=int, default=60)
    parser.add_argument("--neighbors", type=int, default=20)
    parser.add_argument("--epochs", type=int, default=5)
    parser.add_argument("--out", help="optional checkpoint path")
    args = parser.parse_args()

    train = suffix_corpus(args.train_sentences, seed=1)
    dev = suffix_corpus(args.dev_sentences, seed=2)
    config = TrainConfig(
        epochs=args.epochs,
        train_neighbors=args.neighbors,
        test_neighbors=args.neighbors,
    )

    baseline = zero_shot_eval(
        HashedWindowEmbedder(), train, dev, n_neighbors=args.neighbors
    )
    print(f"before fine-tuning: dev token accuracy {baseline.token_accuracy:.4f}")

    checkpoint = fine_tune(config, train, dev)
    for entry in checkpoint.log:
        print(
            f"epoch {entry.epoch} train_nll {entry.train_nll:.4f} "
            f"skipped {entry.skipped_tokens} dev_accuracy {entry.dev_accuracy:.4f}"
        )

    tuned = zero_shot_eval(checkpoint, train, dev, n_neighbors=args.neighbors)
    print(f"after fine-tuning: dev token accuracy {tuned.token_accuracy:.4f}")

    if args.out:
        pathlib.Path(args.out).write_text(save_checkpoint(checkpoint), encoding="utf-8")
        print(f"checkpoint written to {args.out}")


if __name__ == "__main__":
    main()
