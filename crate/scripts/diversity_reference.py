#!/usr/bin/env python3
"""Brute-force internal diversity for a fixed five-molecule set.

Graphs are written out by hand (atom labels with hydrogen counts, bond codes
1=single 2=double 5=aromatic) so nothing is shared with the Rust parser.
Prints 1 - mean pairwise Tanimoto over 1024-bit hashed path fingerprints.
"""

MASK64 = (1 << 64) - 1
N_BITS = 1024
MAX_BONDS = 6


def fnv1a(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & MASK64
    return h


def mol(labels, bonds):
    adj = {i: [] for i in range(len(labels))}
    for a, b, code in bonds:
        adj[a].append((b, code))
        adj[b].append((a, code))
    return labels, adj


def path_string(labels, atoms, codes):
    out = ""
    for k, a in enumerate(atoms):
        out += labels[a]
        if k < len(codes):
            out += str(codes[k])
    return out


def fingerprint(m):
    labels, adj = m
    bits = set()

    def walk(path, codes):
        fwd = path_string(labels, path, codes)
        rev = path_string(labels, path[::-1], codes[::-1])
        bits.add(fnv1a(min(fwd, rev).encode()) & (N_BITS - 1))
        if len(codes) == MAX_BONDS:
            return
        for nxt, code in adj[path[-1]]:
            if nxt not in path:
                walk(path + [nxt], codes + [code])

    for start in range(len(labels)):
        walk([start], [])
    return bits


def tanimoto(a, b):
    union = len(a | b)
    return 1.0 if union == 0 else len(a & b) / union


MOLECULES = {
    "CCO": mol(["CH3", "CH2", "OH1"], [(0, 1, 1), (1, 2, 1)]),
    "CCN": mol(["CH3", "CH2", "NH2"], [(0, 1, 1), (1, 2, 1)]),
    "CC=O": mol(["CH3", "CH1", "OH0"], [(0, 1, 1), (1, 2, 2)]),
    "c1ccccc1": mol(["cH1"] * 6, [(i, (i + 1) % 6, 5) for i in range(6)]),
    "CC(C)O": mol(["CH3", "CH1", "CH3", "OH1"], [(0, 1, 1), (1, 2, 1), (1, 3, 1)]),
}

if __name__ == "__main__":
    fps = [fingerprint(m) for m in MOLECULES.values()]
    sims = [tanimoto(fps[i], fps[j]) for i in range(len(fps)) for j in range(i + 1, len(fps))]
    print("# smiles: " + " ".join(MOLECULES))
    print(repr(1.0 - sum(sims) / len(sims)))
