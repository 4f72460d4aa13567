#!/usr/bin/env python3
"""Enumerates every string of length 1..4 over C N O = ( ) 1 and classifies it.

The classifier is a small stand-alone parser for that alphabet (OpenSMILES
branch and ring-bond rules) plus the plain valence rule: the bond-order sum of
each atom must not exceed 4 for C, 3 for N, 2 for O. Output, one line per
string in enumeration order:

    <string>\t<unparseable|valid|invalid>
"""

import itertools

ALPHABET = "CNO=()1"
MAX_VALENCE = {"C": 4, "N": 3, "O": 2}


class Unparseable(Exception):
    pass


def parse(s):
    """Returns (atoms, bonds) or raises Unparseable."""
    atoms = []
    bonds = {}
    stack = []  # branch points; the flag says whether the branch has content
    prev = None
    pending = None
    ring = None  # (atom, bond order or None)

    def bond(a, b, order):
        key = (min(a, b), max(a, b))
        if a == b or key in bonds:
            raise Unparseable
        bonds[key] = order

    for ch in s:
        if ch in MAX_VALENCE:
            atoms.append(ch)
            cur = len(atoms) - 1
            if prev is not None:
                bond(prev, cur, pending or 1)
            elif pending is not None:
                raise Unparseable
            if stack:
                stack[-1][1] = True
            prev, pending = cur, None
        elif ch == "=":
            if prev is None or pending is not None:
                raise Unparseable
            pending = 2
        elif ch == "(":
            # a branch hangs off an atom and must start with an atom or bond
            if prev is None or pending is not None or (stack and not stack[-1][1]):
                raise Unparseable
            stack.append([prev, False])
        elif ch == ")":
            if not stack or pending is not None:
                raise Unparseable
            at, filled = stack.pop()
            if not filled:
                raise Unparseable
            prev = at
        elif ch == "1":
            if prev is None:
                raise Unparseable
            if ring is None:
                ring = (prev, pending)
            else:
                other, opened = ring
                if opened is not None and pending is not None and opened != pending:
                    raise Unparseable
                bond(other, prev, opened or pending or 1)
                ring = None
            pending = None
    if pending is not None or stack or ring is not None or not atoms:
        raise Unparseable
    return atoms, bonds


def classify(s):
    try:
        atoms, bonds = parse(s)
    except Unparseable:
        return "unparseable"
    used = [0] * len(atoms)
    for (a, b), order in bonds.items():
        used[a] += order
        used[b] += order
    ok = all(u <= MAX_VALENCE[el] for el, u in zip(atoms, used))
    return "valid" if ok else "invalid"


def main():
    for n in range(1, 5):
        for chars in itertools.product(ALPHABET, repeat=n):
            s = "".join(chars)
            print(f"{s}\t{classify(s)}")


if __name__ == "__main__":
    main()
