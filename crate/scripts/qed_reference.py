#!/usr/bin/env python3
"""QED for fixed descriptor vectors, straight from the desirability formula.

Reads the shipped parameter file and prints, per vector, the inputs and the
score (repr, all digits):

    mw logp hba hbd psa rotb arom alerts qed
"""

import math
import pathlib

PARAMS = pathlib.Path(__file__).resolve().parent.parent / "crates/core/data/qed_params.txt"
ORDER = ["mw", "logp", "hba", "hbd", "psa", "rotb", "arom", "alerts"]

VECTORS = [
    (300.0, 2.5, 4, 1, 60.0, 4, 2, 0),
    (151.165, 1.35, 2, 2, 49.33, 1, 1, 0),
    (46.069, -0.0014, 1, 1, 20.23, 0, 0, 0),
    (520.0, 5.6, 11, 6, 150.0, 12, 0, 2),
]


def load():
    p = {}
    for line in PARAMS.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#") or line.startswith("version"):
            continue
        key, value = line.split()
        prop, field = key.split(".")
        p.setdefault(prop, {})[field] = float(value)
    return p


def ads(x, a, b, c, d, e, f, dmax):
    rise = 1.0 + math.exp(-(x - c + d / 2.0) / e)
    fall = 1.0 - 1.0 / (1.0 + math.exp(-(x - c - d / 2.0) / f))
    return (a + b / rise * fall) / dmax


def qed(vec, p):
    total_w = sum(p[k]["weight"] for k in ORDER)
    acc = 0.0
    for k, x in zip(ORDER, vec):
        q = p[k]
        d = ads(float(x), q["a"], q["b"], q["c"], q["d"], q["e"], q["f"], q["dmax"])
        acc += q["weight"] * math.log(min(d, 1.0))
    return math.exp(acc / total_w)


def main():
    p = load()
    print("# mw logp hba hbd psa rotb arom alerts qed")
    for v in VECTORS:
        print(" ".join(repr(x) for x in v), repr(qed(v, p)))


if __name__ == "__main__":
    main()
