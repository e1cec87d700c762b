"""Dump per-token embeddings for a corpus to the sidecar text format.

The sidecar can then drive tagging with frozen vectors from any source;
load it with copytag.embeddings.load_precomputed and wrap the store in
PrecomputedEmbeddings.
"""

import argparse
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from copytag.corpus import parse_conll
from copytag.embeddings import (
    HashedWindowEmbedder,
    PrecomputedStore,
    save_precomputed,
)
from copytag.trainer import load_checkpoint


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--data", required=True, help="CoNLL corpus to embed")
    parser.add_argument("--ckpt", help="checkpoint; omitted means initial parameters")
    parser.add_argument("--out", required=True, help="sidecar file to write")
    args = parser.parse_args()

    if args.ckpt:
        text = pathlib.Path(args.ckpt).read_text(encoding="utf-8")
        provider = load_checkpoint(text).provider()
    else:
        provider = HashedWindowEmbedder()

    dataset = parse_conll(pathlib.Path(args.data).read_text(encoding="utf-8"))
    blocks = {}
    for item in dataset.items:
        sentence = item.sentence
        blocks[sentence.uid] = (sentence.tokens, provider.embed(sentence))
    store = PrecomputedStore(dim=provider.dim, blocks=blocks)
    pathlib.Path(args.out).write_text(save_precomputed(store), encoding="utf-8")
    print(f"wrote {args.out} ({len(blocks)} sentences)")


if __name__ == "__main__":
    main()
