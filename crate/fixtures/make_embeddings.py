"""Regenerates embeddings.vec from the token dump of reviews.tsv.

Every token gets small seeded noise in all 300 dimensions; sentiment
tokens additionally carry +0.8 (positive) or -0.8 (negative) in the
first eight dimensions, so mean vectors of the fixture reviews are
linearly separable.

    python3 fixtures/make_embeddings.py fixtures/reviews.tokens.tsv > fixtures/embeddings.vec
"""

import random
import sys

DIM = 300
SIGNAL_DIMS = 8
POSITIVE = "عال خوب جذاب زیبا شاهکار فوق‌العاد لذت درخشان great".split()
NEGATIVE = "بد ضعیف افتضاح خسته‌کنند کسل‌کنند تکرار ازاردهند پشی هدر".split()


def main(dump_path):
    vocab = []
    with open(dump_path, encoding="utf-8") as f:
        for line in f:
            _, tokens = line.rstrip("\n").split("\t")
            for tok in tokens.split():
                if tok not in vocab:
                    vocab.append(tok)
    rng = random.Random(20240101)
    out = [f"{len(vocab)} {DIM}"]
    for tok in vocab:
        shift = 0.8 if tok in POSITIVE else -0.8 if tok in NEGATIVE else 0.0
        values = [rng.uniform(-0.1, 0.1) + (shift if d < SIGNAL_DIMS else 0.0) for d in range(DIM)]
        out.append(tok + " " + " ".join(f"{v:.6f}" for v in values))
    sys.stdout.write("\n".join(out) + "\n")


if __name__ == "__main__":
    main(sys.argv[1])
