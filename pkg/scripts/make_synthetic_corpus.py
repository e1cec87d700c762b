"""Regenerate the bundled synthetic corpora under data/.

The files are committed; rerunning this script must reproduce them byte
for byte (the generators are seeded).
"""

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from copytag.corpus import write_conll
from copytag.synthetic import toy_ner_corpus

OUT = pathlib.Path(__file__).resolve().parents[1] / "data"

SPLITS = {
    "toy_ner_train.conll": (50, 11),
    "toy_ner_dev.conll": (20, 12),
}


def main() -> None:
    OUT.mkdir(exist_ok=True)
    for name, (n_sentences, seed) in SPLITS.items():
        dataset = toy_ner_corpus(n_sentences, seed=seed)
        path = OUT / name
        path.write_text(write_conll(dataset), encoding="utf-8")
        print(f"wrote {path} ({n_sentences} sentences)")


if __name__ == "__main__":
    main()
