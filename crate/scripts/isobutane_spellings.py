#!/usr/bin/env python3
"""Every spelling of isobutane over the characters C - ( ).

Strings are grown one character at a time; a prefix is kept only while it
can still parse (OpenSMILES branch rules) and has at most four atoms. Each
complete string is parsed into an edge list and compared with isobutane by
trying all 4! atom relabelings. Prints the matches, one per line, sorted.
"""

import itertools

TARGET = {(0, 1), (0, 2), (0, 3)}
MAX_LEN = 13  # C(-C)(-C)(-C), the longest spelling without redundant symbols


def step(state, ch):
    """Advances a parser state by one character; None if the prefix is dead."""
    atoms, bonds, stack, prev, pending = state
    if ch == "C":
        if atoms == 4:
            return None
        cur = atoms
        if prev is not None:
            bonds = bonds + ((prev, cur),)
        elif pending:
            return None
        if stack:
            stack = stack[:-1] + ((stack[-1][0], True),)
        return (atoms + 1, bonds, stack, cur, False)
    if ch == "-":
        if prev is None or pending:
            return None
        return (atoms, bonds, stack, prev, True)
    if ch == "(":
        if prev is None or pending or (stack and not stack[-1][1]):
            return None
        return (atoms, bonds, stack + ((prev, False),), prev, False)
    if ch == ")":
        if not stack or pending or not stack[-1][1]:
            return None
        return (atoms, bonds, stack[:-1], stack[-1][0], False)
    raise ValueError(ch)


def isomorphic(bonds):
    if len(bonds) != 3:
        return False
    for perm in itertools.permutations(range(4)):
        mapped = {tuple(sorted((perm[a], perm[b]))) for a, b in bonds}
        if mapped == TARGET:
            return True
    return False


def main():
    found = []
    frontier = [("", (0, (), (), None, False))]
    while frontier:
        nxt = []
        for s, st in frontier:
            atoms, bonds, stack, _, pending = st
            if atoms == 4 and not stack and not pending and isomorphic(bonds):
                found.append(s)
            if len(s) == MAX_LEN:
                continue
            for ch in "C-()":
                t = step(st, ch)
                if t is not None:
                    nxt.append((s + ch, t))
        frontier = nxt
    for s in sorted(found):
        print(s)


if __name__ == "__main__":
    main()
