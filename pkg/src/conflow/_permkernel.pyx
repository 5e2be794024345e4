# cython: boundscheck=False, wraparound=False
"""C kernel for linearization enumeration: walk permutations of range(n) in
lexicographic order and keep those satisfying a set of precedence pairs.
Semantics match conflow._permkernel_py exactly."""

from libc.stdlib cimport malloc, free


def precedence_pairs(constraints):
    pairs = set()
    for seq in constraints:
        for a, b in zip(seq, seq[1:]):
            if a == b:
                raise ValueError("constraint repeats an element")
            pairs.add((a, b))
    return sorted(pairs)


cdef bint _next_permutation(int* p, int n) nogil:
    cdef int i = n - 2
    cdef int j, tmp, lo, hi
    while i >= 0 and p[i] >= p[i + 1]:
        i -= 1
    if i < 0:
        return False
    j = n - 1
    while p[j] <= p[i]:
        j -= 1
    tmp = p[i]; p[i] = p[j]; p[j] = tmp
    lo = i + 1; hi = n - 1
    while lo < hi:
        tmp = p[lo]; p[lo] = p[hi]; p[hi] = tmp
        lo += 1; hi -= 1
    return True


def valid_permutations(int n, constraints):
    """All permutations of range(n), lexicographic, satisfying every
    constraint sequence as a subsequence."""
    pair_list = precedence_pairs(constraints)
    pair_set = set(pair_list)
    for a, b in pair_list:
        if (b, a) in pair_set:
            return []
        if not (0 <= a < n and 0 <= b < n):
            raise ValueError("constraint element out of range")

    cdef int m = len(pair_list)
    cdef int* perm = <int*> malloc(n * sizeof(int))
    cdef int* pos = <int*> malloc(n * sizeof(int))
    cdef int* pa = <int*> malloc((m if m else 1) * sizeof(int))
    cdef int* pb = <int*> malloc((m if m else 1) * sizeof(int))
    if perm == NULL or pos == NULL or pa == NULL or pb == NULL:
        free(perm); free(pos); free(pa); free(pb)
        raise MemoryError()
    cdef int i, k
    cdef bint ok
    for i in range(n):
        perm[i] = i
    for k in range(m):
        pa[k] = pair_list[k][0]
        pb[k] = pair_list[k][1]
    out = []
    try:
        while True:
            for i in range(n):
                pos[perm[i]] = i
            ok = True
            for k in range(m):
                if pos[pa[k]] >= pos[pb[k]]:
                    ok = False
                    break
            if ok:
                out.append(tuple(perm[i] for i in range(n)))
            if not _next_permutation(perm, n):
                break
    finally:
        free(perm); free(pos); free(pa); free(pb)
    return out
