"""Pure-Python linearization enumerator (fallback for the C extension).

For a permutation, a constraint sequence is a subsequence exactly when every
adjacent pair of it is ordered, so the constraints collapse to a set of
precedence pairs checked against the permutation's position table.
"""
from itertools import permutations


def precedence_pairs(constraints):
    pairs = set()
    for seq in constraints:
        for a, b in zip(seq, seq[1:]):
            if a == b:
                raise ValueError("constraint repeats an element")
            pairs.add((a, b))
    return sorted(pairs)


def valid_permutations(n, constraints):
    """All permutations of range(n), lexicographic, satisfying every
    constraint sequence as a subsequence."""
    pairs = precedence_pairs(constraints)
    for a, b in pairs:
        if (b, a) in set(pairs):
            return []
    out = []
    pos = [0] * n
    for perm in permutations(range(n)):
        for i, s in enumerate(perm):
            pos[s] = i
        if all(pos[a] < pos[b] for a, b in pairs):
            out.append(perm)
    return out
