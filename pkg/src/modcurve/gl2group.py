"""Subgroups of GL2(Z/NZ): closure, membership, invariants, cosets.

A subgroup is stored without materializing all its elements: we keep the
image D of the determinant map (a subgroup of (Z/N)^*), a transversal
t_u in H with det(t_u) = u for each u in D, and the full element set of
H intersect SL2 (closed from the Schreier generators of the transversal).
Then |H| = |D| * |H ∩ SL2|, membership is two dictionary lookups, and
everything genus-related lives in SL2 where the sets stay small even at
modulus 169.

Genus data: for Gamma = ±H ∩ SL2(N),
    g = 1 + i/12 - nu2/4 - nu3/3 - nuoo/2
with i = [SL2(N):Gamma], nu2/nu3 counting right cosets that contain a
conjugate of (0 1;-1 0) resp. (0 1;-1 -1), and nuoo the number of orbits
of the right cosets under (1 1;0 1).
"""

from math import gcd

import numpy as np

from .modmat import (GL2Element, gl2_order, sl2_order, unit_group_order,
                     inv_mod)

IDENT = (1, 0, 0, 1)


def _mul(x, y, n):
    return ((x[0] * y[0] + x[1] * y[2]) % n,
            (x[0] * y[1] + x[1] * y[3]) % n,
            (x[2] * y[0] + x[3] * y[2]) % n,
            (x[2] * y[1] + x[3] * y[3]) % n)


def _inv(x, n):
    di = inv_mod((x[0] * x[3] - x[1] * x[2]) % n, n)
    return ((di * x[3]) % n, (-di * x[1]) % n, (-di * x[2]) % n, (di * x[0]) % n)


def _det(x, n):
    return (x[0] * x[3] - x[1] * x[2]) % n


def _close(gens, n, budget=None):
    """Element set of the subgroup generated by gens (4-tuples)."""
    seen = {IDENT}
    frontier = [IDENT]
    while frontier:
        nxt = []
        for x in frontier:
            for g in gens:
                y = _mul(x, g, n)
                if y not in seen:
                    seen.add(y)
                    nxt.append(y)
                    if budget is not None and len(seen) > budget:
                        raise RuntimeError("closure budget exceeded")
        frontier = nxt
    return seen


def _close_incremental(candidates, n, budget=None):
    """Closure of a set of generators, keeping the generating list short."""
    used = []
    seen = {IDENT}
    for g in candidates:
        if g not in seen:
            used.append(g)
            seen = _close(used, n, budget)
    return seen, used


class SubgroupRep:
    """A subgroup of GL2(Z/NZ) given by generators."""

    def __init__(self, modulus, generators, _full=False, _order_hint=None):
        self.modulus = modulus
        self.generators = list(generators)
        for g in self.generators:
            if g.modulus != modulus:
                raise ValueError("generator modulus mismatch")
            if not g.is_invertible():
                raise ValueError("generator %r is not invertible" % (g,))
        self.is_full = _full
        self._elements = None
        self._gamma = None
        if _full:
            self.det_image = frozenset(u for u in range(modulus)
                                       if gcd(u, modulus) == 1)
            self.det_transversal = None
            self.sl_set = None
            self.order = gl2_order(modulus)
            return
        self._order_hint = _order_hint
        self._build()

    @classmethod
    def full_group(cls, N):
        return cls(N, [], _full=True)

    @classmethod
    def from_tuples(cls, N, tuples):
        return cls(N, [GL2Element.from_tuple(t, N) for t in tuples])

    @classmethod
    def from_strings(cls, N, texts):
        return cls(N, [GL2Element.parse(t, N) for t in texts])

    def _build(self):
        n = self.modulus
        gens = [g.tuple() for g in self.generators]
        # transversal of H over its determinant image
        trans = {1: IDENT}
        frontier = [1]
        while frontier:
            nxt = []
            for u in frontier:
                for g in gens:
                    v = (u * _det(g, n)) % n
                    if v not in trans:
                        trans[v] = _mul(trans[u], g, n)
                        nxt.append(v)
            frontier = nxt
        self.det_image = frozenset(trans)
        self.det_transversal = trans
        if self._order_hint is not None:
            # deferred SL closure: the caller knows the order (used when the
            # SL part is large and only det/order/index queries are needed)
            self.sl_set = None
            self.order = self._order_hint
            return
        self._build_sl()

    def _build_sl(self):
        n = self.modulus
        gens = [g.tuple() for g in self.generators]
        trans = self.det_transversal
        # Schreier generators of H ∩ SL2
        schreier = []
        for u, t in trans.items():
            for g in gens:
                v = (u * _det(g, n)) % n
                s = _mul(_mul(t, g, n), _inv(trans[v], n), n)
                schreier.append(s)
        sl, _ = _close_incremental(schreier, n)
        self.sl_set = frozenset(sl)
        order = len(trans) * len(sl)
        if self._order_hint is not None and order != self._order_hint:
            raise AssertionError("order hint %d but closure gives %d"
                                 % (self._order_hint, order))
        self.order = order

    def _ensure_sl(self):
        if not self.is_full and self.sl_set is None:
            self._build_sl()

    # -- basic queries ----------------------------------------------------

    def contains(self, g):
        if isinstance(g, GL2Element):
            if g.modulus != self.modulus:
                raise ValueError("modulus mismatch")
            g = g.tuple()
        n = self.modulus
        if self.is_full:
            return gcd(_det(g, n), n) == 1
        u = _det(g, n)
        if u not in self.det_image:
            return False
        self._ensure_sl()
        return _mul(g, _inv(self.det_transversal[u], n), n) in self.sl_set

    def index(self):
        return gl2_order(self.modulus) // self.order

    def det_surjective(self):
        return len(self.det_image) == unit_group_order(self.modulus)

    def contains_minus_identity(self):
        n = self.modulus
        return self.contains((n - 1, 0, 0, n - 1))

    def elements(self):
        """Iterate over all elements as tuples.  Use with care on big groups."""
        n = self.modulus
        if self.is_full:
            for a in range(n):
                for b in range(n):
                    for c in range(n):
                        for d in range(n):
                            if gcd((a * d - b * c) % n, n) == 1:
                                yield (a, b, c, d)
            return
        self._ensure_sl()
        for u in self.det_image:
            t = self.det_transversal[u]
            for s in self.sl_set:
                yield _mul(s, t, n)

    def elements_with_det(self, u):
        n = self.modulus
        u %= n
        if self.is_full:
            raise RuntimeError("refusing to slice the full group")
        if u not in self.det_image:
            return
        self._ensure_sl()
        t = self.det_transversal[u]
        for s in self.sl_set:
            yield _mul(s, t, n)

    def element_set(self, limit=2_000_000):
        if self._elements is None:
            if self.order > limit:
                raise RuntimeError("element set too large (%d)" % self.order)
            self._elements = frozenset(self.elements())
        return self._elements

    def gamma_set(self):
        """±H ∩ SL2 as a set of tuples."""
        if self._gamma is None:
            self._ensure_sl()
            n = self.modulus
            g = set(self.sl_set)
            for s in self.sl_set:
                g.add(((-s[0]) % n, (-s[1]) % n, (-s[2]) % n, (-s[3]) % n))
            self._gamma = frozenset(g)
        return self._gamma

    def with_minus_identity(self):
        """The subgroup ⟨H, -I⟩."""
        if self.is_full or self.contains_minus_identity():
            return self
        n = self.modulus
        return SubgroupRep(n, self.generators + [GL2Element(-1, 0, 0, -1, n)])

    def reduce(self, M):
        if self.modulus % M != 0:
            raise ValueError("%d does not divide %d" % (M, self.modulus))
        if M == 1:
            return SubgroupRep.full_group(1)
        if self.is_full:
            return SubgroupRep.full_group(M)
        return SubgroupRep(M, [g.reduce(M) for g in self.generators])

    def generators_tuples(self):
        return [g.tuple() for g in self.generators]

    def conjugated(self, x):
        if self.is_full:
            return self
        return SubgroupRep(self.modulus, [g.conjugate_by(x) for g in self.generators])

    def level(self):
        """Least M | N such that H is the full preimage of H mod M."""
        n = self.modulus
        divisors = sorted(d for d in range(1, n + 1) if n % d == 0)
        for m in divisors:
            if m == n:
                return n
            hm = self.reduce(m)
            if hm.order * (gl2_order(n) // gl2_order(m)) == self.order:
                return m
        return n

    def __repr__(self):
        return "SubgroupRep(mod %d, order %d, index %d)" % (
            self.modulus, self.order, self.index())


def subgroup_from_generators(N, gens):
    return SubgroupRep(N, list(gens))


# -- named constructions --------------------------------------------------

def _factor(n):
    out = []
    p = 2
    while p * p <= n:
        if n % p == 0:
            k = 0
            while n % p == 0:
                n //= p
                k += 1
            out.append((p, k))
        p += 1
    if n > 1:
        out.append((n, 1))
    return out


def unit_group_generators(N):
    """Generators of (Z/N)^* via CRT over the prime power factors."""
    if N <= 2:
        return []
    gens = []
    for p, k in _factor(N):
        q = p ** k
        rest = N // q
        local = []
        if p == 2:
            if k >= 2:
                local.append(q - 1)
            if k >= 3:
                local.append(5)
        else:
            g = 2
            order_needed = (p - 1) * p ** (k - 1)
            while True:
                ok = True
                for r, _ in _factor(order_needed):
                    if pow(g, order_needed // r, q) == 1:
                        ok = False
                        break
                if ok:
                    break
                g += 1
            local.append(g)
        for u in local:
            if rest == 1:
                gens.append(u % N)
            else:
                # u mod q, 1 mod rest
                inv_q = inv_mod(q % rest, rest) if rest > 1 else 0
                x = (u + q * ((1 - u) * inv_q % rest)) % N
                gens.append(x)
    return gens


def _nonresidue(p):
    for e in range(2, p):
        if pow(e, (p - 1) // 2, p) == p - 1:
            return e
    raise ValueError("no nonresidue mod %d" % p)


def named_group(kind, N):
    """Standard subgroups: borel, split, nonsplit and their normalizers.

    N must be a prime power > 1.  Each returns one representative of the
    unique conjugacy class.
    """
    fac = _factor(N)
    if N <= 1 or len(fac) != 1:
        raise ValueError("named groups need a prime power modulus > 1")
    p, k = fac[0]
    ugens = unit_group_generators(N) or [1]
    tuples = []
    if kind == "borel":
        tuples = [(1, 1, 0, 1)]
        for u in ugens:
            tuples.append((u, 0, 0, 1))
            tuples.append((1, 0, 0, u))
    elif kind in ("split", "split_normalizer"):
        for u in ugens:
            tuples = tuples + [(u, 0, 0, 1), (1, 0, 0, u)]
        if kind == "split_normalizer":
            tuples.append((0, 1, 1, 0))
    elif kind in ("nonsplit", "nonsplit_normalizer"):
        if p == 2:
            # quadratic order with 2 inert: x^2 + x + 1
            def mk(a, b):
                return ((a + b) % N, b % N, (-b) % N, a % N)

            def norm(a, b):
                return (a * a + a * b + b * b) % N
            invol = (N - 1, 0, 1, 1)
        else:
            eps = _nonresidue(p)

            def mk(a, b):
                return (a % N, b % N, (eps * b) % N, a % N)

            def norm(a, b):
                return (a * a - eps * b * b) % N
            invol = (1, 0, 0, N - 1)
        expected = p ** (2 * (k - 1)) * (p * p - 1)
        for a in range(N):
            for b in range(N):
                if gcd(norm(a, b), N) == 1:
                    tuples.append(mk(a, b))
            if len(tuples) > 40:
                H = SubgroupRep.from_tuples(N, tuples)
                if H.order == expected:
                    break
        H = SubgroupRep.from_tuples(N, tuples)
        assert H.order == expected, (H.order, expected)
        if kind == "nonsplit_normalizer":
            tuples.append(invol)
    else:
        raise ValueError("unknown kind %r" % kind)
    return SubgroupRep.from_tuples(N, tuples)


# -- coset machinery ------------------------------------------------------

SL_GEN_S = (0, -1, 1, 0)
SL_GEN_T = (1, 1, 0, 1)


def _encode(t, n):
    return ((t[0] * n + t[1]) * n + t[2]) * n + t[3]


class CosetSpace:
    """Right cosets Gamma\\SL2(N) for Gamma = ±H ∩ SL2.

    Canonical key of a coset = minimum of encode(gamma * x) over Gamma,
    computed vectorized.  For det-full H this is also in bijection with
    the right cosets of ⟨H,-I⟩ in GL2(N).
    """

    def __init__(self, H):
        self.H = H
        self.N = H.modulus
        n = self.N
        gam = sorted(H.gamma_set())
        arr = np.array(gam, dtype=np.int64)
        self._ga, self._gb = arr[:, 0], arr[:, 1]
        self._gc, self._gd = arr[:, 2], arr[:, 3]
        self.gamma_size = len(gam)
        self._gamma_set = H.gamma_set()
        self._enumerate()

    def key(self, x):
        n = self.N
        a = (self._ga * x[0] + self._gb * x[2]) % n
        b = (self._ga * x[1] + self._gb * x[3]) % n
        c = (self._gc * x[0] + self._gd * x[2]) % n
        d = (self._gc * x[1] + self._gd * x[3]) % n
        return int((((a * n + b) * n + c) * n + d).min())

    def _enumerate(self):
        n = self.N
        gens = [SL_GEN_S, SL_GEN_T]
        start = IDENT
        self.reps = [start]
        self.key_to_index = {self.key(start): 0}
        frontier = [start]
        while frontier:
            nxt = []
            for x in frontier:
                for g in gens:
                    y = _mul(x, g, n)
                    k = self.key(y)
                    if k not in self.key_to_index:
                        self.key_to_index[k] = len(self.reps)
                        self.reps.append(y)
                        nxt.append(y)
            frontier = nxt
        self.degree = len(self.reps)

    def index_of(self, x):
        """Coset index of an SL2 element."""
        return self.key_to_index[self.key(x)]

    def permutation_sl(self, g):
        """The permutation induced by right multiplication by g in SL2."""
        n = self.N
        return [self.index_of(_mul(x, g, n)) for x in self.reps]

    def permutation_gl(self, g):
        """Right multiplication by g in GL2 on cosets of ⟨H,-I⟩.

        Requires det(g) in det(±H); the SL2 representative of the image
        coset is h * x * g for h in ±H with det(h) = det(g)^-1.
        """
        n = self.N
        u = _det(g, n)
        h = self._bar_transversal_inverse(u)
        return [self.index_of(_mul(_mul(h, x, n), g, n)) for x in self.reps]

    def _bar_transversal_inverse(self, u):
        H = self.H
        if u in H.det_image:
            return _inv(H.det_transversal[u], self.N)
        raise ValueError("determinant %d not in det(H)" % u)

    def chi(self, g):
        """Number of cosets of ⟨H,-I⟩ fixed by right multiplication by g."""
        n = self.N
        Hbar = self.H.with_minus_identity()
        count = 0
        for x in self.reps:
            if Hbar.contains(_mul(_mul(x, g, n), _inv(x, n), n)):
                count += 1
        return count

    def cusp_orbits(self):
        """Orbits of the cosets under the unipotent (1 1;0 1)."""
        perm = self.permutation_sl(SL_GEN_T)
        seen = [False] * self.degree
        orbits = []
        for i in range(self.degree):
            if not seen[i]:
                orb = []
                j = i
                while not seen[j]:
                    seen[j] = True
                    orb.append(j)
                    j = perm[j]
                orbits.append(orb)
        return orbits

    def fixed_cosets_sl(self, elt):
        """Number of cosets fixed by right multiplication by elt in SL2.

        Gamma*x is fixed iff x elt x^-1 lies in Gamma, i.e. the coset
        contains a conjugate of elt with the same conjugating element.
        """
        n = self.N
        gam = self._gamma_set
        return sum(1 for x in self.reps
                   if _mul(_mul(x, elt, n), _inv(x, n), n) in gam)


class GenusData:
    __slots__ = ("index", "nu2", "nu3", "ncusps", "genus")

    def __init__(self, index, nu2, nu3, ncusps, genus):
        self.index = index
        self.nu2 = nu2
        self.nu3 = nu3
        self.ncusps = ncusps
        self.genus = genus

    def __repr__(self):
        return "GenusData(i=%d, nu2=%d, nu3=%d, cusps=%d, g=%d)" % (
            self.index, self.nu2, self.nu3, self.ncusps, self.genus)


def invariants(H):
    """Index, elliptic point counts, cusp count and genus of X_H."""
    N = H.modulus
    if H.is_full or N == 1:
        return GenusData(1, 1, 1, 1, 0)
    cs = CosetSpace(H)
    i = cs.degree
    assert i == sl2_order(N) // len(H.gamma_set())
    nu2 = cs.fixed_cosets_sl((0, 1, N - 1, 0))
    nu3 = cs.fixed_cosets_sl((0, 1, N - 1, N - 1))
    ncusps = len(cs.cusp_orbits())
    num = 12 + i - 3 * nu2 - 4 * nu3 - 6 * ncusps
    if num % 12 != 0:
        raise AssertionError("genus formula gave a non-integer: i=%d nu2=%d "
                             "nu3=%d cusps=%d" % (i, nu2, nu3, ncusps))
    g = num // 12
    if g < 0:
        raise AssertionError("negative genus")
    return GenusData(i, nu2, nu3, ncusps, g)


# -- element conjugacy and subgroup conjugacy -----------------------------

def _smith_nullspace(rows, N):
    """Generators of the solution module of A x = 0 over Z/N.

    A is given as a list of integer rows.  Returns a list of (vector,
    order) pairs such that every solution is a unique combination
    sum c_i v_i with 0 <= c_i < order_i.
    """
    m = len(rows)
    k = len(rows[0]) if m else 0
    A = [list(r) for r in rows]
    V = [[1 if i == j else 0 for j in range(k)] for i in range(k)]

    def col_op(j1, j2, c):
        for r in A:
            r[j2] += c * r[j1]
        for r in V:
            r[j2] += c * r[j1]

    def col_swap(j1, j2):
        for r in A:
            r[j1], r[j2] = r[j2], r[j1]
        for r in V:
            r[j1], r[j2] = r[j2], r[j1]

    def row_op(i1, i2, c):
        A[i2] = [A[i2][j] + c * A[i1][j] for j in range(k)]

    def row_swap(i1, i2):
        A[i1], A[i2] = A[i2], A[i1]

    diag = []
    r = 0
    c = 0
    while r < m and c < k:
        # find pivot with least nonzero absolute value
        best = None
        for i in range(r, m):
            for j in range(c, k):
                v = A[i][j]
                if v != 0 and (best is None or abs(v) < abs(best[2])):
                    best = (i, j, v)
        if best is None:
            break
        i0, j0, _ = best
        row_swap(r, i0)
        col_swap(c, j0)
        # clear row and column
        again = True
        while again:
            again = False
            p = A[r][c]
            for i in range(r + 1, m):
                if A[i][c] % p != 0:
                    row_op(r, i, -(A[i][c] // p))
                    if A[i][c] != 0:
                        row_swap(r, i)
                        again = True
                        break
                else:
                    row_op(r, i, -(A[i][c] // p))
            if again:
                continue
            for j in range(c + 1, k):
                if A[r][j] % p != 0:
                    col_op(c, j, -(A[r][j] // p))
                    if A[r][j] != 0:
                        col_swap(c, j)
                        again = True
                        break
                else:
                    col_op(c, j, -(A[r][j] // p))
        diag.append(A[r][c])
        r += 1
        c += 1
    gens = []
    for j in range(k):
        d = diag[j] if j < len(diag) else 0
        # solutions require d * y ≡ 0 mod N: y multiples of N/gcd(d,N)
        step = N // gcd(abs(d), N) if d != 0 else 1
        order = N // step
        if order > 1:
            vec = tuple((V[i][j] * step) % N for i in range(k))
            gens.append((vec, order))
    return gens


def conjugating_solutions(g, h, N, budget=2_000_000):
    """All invertible x mod N with x g = h x, as an iterator of tuples."""
    ga, gb, gc, gd = g
    ha, hb, hc, hd = h
    # unknowns (p,q,r,s) for x = (p q; r s)
    rows = [
        [ga - ha, gc, -hb, 0],
        [gb, gd - ha, 0, -hb],
        [-hc, 0, ga - hd, gc],
        [0, -hc, gb, gd - hd],
    ]
    gens = _smith_nullspace(rows, N)
    total = 1
    for _, order in gens:
        total *= order
    if total > budget:
        raise RuntimeError("solution space too large (%d)" % total)
    from itertools import product as iproduct
    ranges = [range(order) for _, order in gens]
    for combo in iproduct(*ranges):
        x = [0, 0, 0, 0]
        for (vec, _), ci in zip(gens, combo):
            for t in range(4):
                x[t] = (x[t] + ci * vec[t]) % N
        xt = tuple(x)
        if gcd((xt[0] * xt[3] - xt[1] * xt[2]) % N, N) == 1:
            yield xt


def _class_invariant(t, n):
    x = GL2Element.from_tuple(t, n)
    return (x.order(), x.det(), x.trace())


def is_conjugate(H1, H2, return_witness=False):
    """Conjugacy of subgroups, by fingerprint filter then explicit search."""
    if H1.modulus != H2.modulus:
        raise ValueError("modulus mismatch")
    N = H1.modulus
    if H1.order != H2.order or H1.det_image != H2.det_image:
        return (False, None) if return_witness else False
    if H1.is_full or H2.is_full:
        # orders already agree, so the other group is all of GL2 as well
        return (True, IDENT) if return_witness else True
    H1._ensure_sl()
    # pick a seed element of H1 with small centralizer and rare invariant
    inv2 = {}
    for t in H2.elements():
        inv2.setdefault(_class_invariant(t, N), []).append(t)
    seed = None
    best = None
    for t in list(H1.generators_tuples()) + list(H1.sl_set)[:50]:
        if t == IDENT:
            continue
        key = _class_invariant(t, N)
        if key not in inv2:
            return (False, None) if return_witness else False
        score = len(inv2[key])
        if t[1] % N == 0 and t[2] % N == 0 and t[0] == t[3]:
            continue  # scalar: centralizer is everything
        if best is None or score < best:
            best = score
            seed = t
    if seed is None:
        # H1 is made of scalars; equality is the only chance
        ok = set(H1.elements()) == set(H2.elements())
        return ((ok, IDENT if ok else None)) if return_witness else ok
    gens1 = H1.generators_tuples()
    for h in inv2[_class_invariant(seed, N)]:
        try:
            sols = conjugating_solutions(seed, h, N)
        except RuntimeError:
            sols = None
        if sols is None:
            continue
        for x in sols:
            xi = _inv(x, N)
            if all(H2.contains(_mul(_mul(x, g, N), xi, N)) for g in gens1):
                # orders match, so conjugate-inclusion is equality
                return (True, x) if return_witness else True
    return (False, None) if return_witness else False


# -- subgroup enumeration -------------------------------------------------

def _tuple_pow(t, e, n):
    r = IDENT
    b = t
    while e:
        if e & 1:
            r = _mul(r, b, n)
        e >>= 1
        if e:
            b = _mul(b, b, n)
    return r


def _tuple_order(t, n):
    k = 1
    x = t
    while x != IDENT:
        x = _mul(x, t, n)
        k += 1
    return k


def _prime_divisors(m):
    return [p for p, _ in _factor(m)]


def _greedy_generators(elems, n, rng=None):
    """A short generating list for the group with the given element set."""
    import random as _random
    rng = rng or _random.Random(17)
    pool = sorted(elems)
    gens = []
    seen = {IDENT}
    while len(seen) < len(pool):
        g = pool[rng.randrange(len(pool))]
        if g in seen:
            continue
        gens.append(g)
        seen = _close(gens, n)
    return gens


def _derived_subgroup(elems, gens, n):
    """Element set of the commutator subgroup of the given group."""
    dgens = []
    dset = {IDENT}
    for a in gens:
        ai = _inv(a, n)
        for b in gens:
            c = _mul(_mul(a, b, n), _mul(ai, _inv(b, n), n), n)
            if c not in dset:
                dgens.append(c)
                dset = _close(dgens, n)
    # normal closure inside the group
    changed = True
    while changed:
        changed = False
        for g in gens:
            gi = _inv(g, n)
            for h in list(dgens):
                c = _mul(_mul(g, h, n), gi, n)
                if c not in dset:
                    dgens.append(c)
                    dset = _close(dgens, n)
                    changed = True
    return dset, dgens


def _perfect_residual(elems, n):
    """Terminal (perfect) member of the derived series, with generators."""
    gens = _greedy_generators(elems, n)
    cur, cur_gens = set(elems), gens
    while True:
        d, dgens = _derived_subgroup(cur, cur_gens, n)
        if len(d) == len(cur):
            return cur, cur_gens
        if len(d) == 1:
            return None
        cur, cur_gens = d, _greedy_generators(d, n)


def _set_fingerprint(U, n, order_of):
    counts = {}
    for u in U:
        key = (order_of[u], (u[0] + u[3]) % n, _det(u, n))
        counts[key] = counts.get(key, 0) + 1
    return (len(U), tuple(sorted(counts.items())))


def _conjugate_within(G, inv_map, gens1, set2, n):
    """Some g in G with g <gens1> g^-1 = the group with element set set2?"""
    for g in G:
        gi = inv_map[g]
        for x in gens1:
            if _mul(_mul(g, x, n), gi, n) not in set2:
                break
        else:
            return True
    return False


def _subgroup_classes_of(elements, n, seeds=()):
    """Conjugacy classes of subgroups of a finite matrix group mod n.

    Bottom-up cyclic extension: every known subgroup U is extended by
    elements x of its normalizer with x^p in U.  This reaches every
    subgroup with a subnormal prime-index chain down to a seed, i.e. all
    of them provided `seeds` contains one representative of every
    nontrivial perfect subgroup class (none for solvable ambients).

    Returns a list of dicts with keys set, gens, norm (normalizer order).
    """
    G = sorted(elements)
    Gset = set(G)
    inv_map = {g: _inv(g, n) for g in G}
    order_of = {g: _tuple_order(g, n) for g in G}
    classes = []
    bykey = {}

    def try_add(uset, gens):
        key = _set_fingerprint(uset, n, order_of)
        for c in bykey.get(key, ()):
            if _conjugate_within(G, inv_map, gens, c["set"], n):
                return None
        c = {"set": uset, "gens": list(gens), "norm": None}
        classes.append(c)
        bykey.setdefault(key, []).append(c)
        return c

    queue = [try_add(frozenset([IDENT]), [])]
    for sgens in seeds:
        sset = frozenset(_close(list(sgens), n))
        c = try_add(sset, list(sgens))
        if c is not None:
            queue.append(c)
    qi = 0
    while qi < len(queue):
        cls = queue[qi]
        qi += 1
        uset, gens = cls["set"], cls["gens"]
        norm = []
        for g in G:
            gi = inv_map[g]
            for x in gens:
                if _mul(_mul(g, x, n), gi, n) not in uset:
                    break
            else:
                norm.append(g)
        cls["norm"] = len(norm)
        # coset representatives of U in its normalizer
        covered = set(uset)
        for x in norm:
            if x in covered:
                continue
            for u in uset:
                covered.add(_mul(u, x, n))
            for p in _prime_divisors(order_of[x]):
                if _tuple_pow(x, p, n) in uset:
                    new = set(uset)
                    xi = x
                    for _ in range(p - 1):
                        for u in uset:
                            new.add(_mul(u, xi, n))
                        xi = _mul(xi, x, n)
                    c = try_add(frozenset(new), gens + [x])
                    if c is not None:
                        queue.append(c)
                    break
    return classes


def _rep_fingerprint(rep):
    n = rep.modulus
    counts = {}
    for u in rep.elements():
        x = GL2Element.from_tuple(u, n)
        key = (x.order(), x.trace(), x.det())
        counts[key] = counts.get(key, 0) + 1
    return (rep.order, tuple(sorted(rep.det_image)), tuple(sorted(counts.items())))


def _borel_elements(ell):
    out = []
    for a in range(1, ell):
        for d in range(1, ell):
            for b in range(ell):
                out.append((a, b, 0, d))
    return out


def _octahedral_group(ell):
    """Preimage in GL2(ell) of the octahedral subgroup of PGL2(ell)."""
    if ell <= 3:
        raise ValueError("need ell > 3")
    ab = None
    for a in range(ell):
        for b in range(ell):
            if (a * a + b * b + 1) % ell == 0:
                ab = (a, b)
                break
        if ab:
            break
    a, b = ab
    I = (0, ell - 1, 1, 0)
    J = (a, b, b, ell - a)
    K = _mul(I, J, ell)
    g3 = None
    for x in conjugating_solutions(I, J, ell):
        if _mul(_mul(x, J, ell), _inv(x, ell), ell) == K:
            g3 = x
            break
    assert g3 is not None
    h = (1, ell - 1, 1, 1)
    w = _primitive_root(ell)
    H = SubgroupRep.from_tuples(ell, [I, J, g3, h, (w, 0, 0, w)])
    assert H.order == 24 * (ell - 1), H.order
    return H


def _primitive_root(ell):
    for g in range(2, ell):
        ok = True
        for p in _prime_divisors(ell - 1):
            if pow(g, (ell - 1) // p, ell) == 1:
                ok = False
                break
        if ok:
            return g
    raise ValueError("no primitive root mod %d" % ell)


def _icosahedral_sl(ell):
    """An SL2(5) copy inside SL2(ell), for ell = +-1 mod 5, as generators."""
    import random as _random
    rng = _random.Random(23)
    ab = None
    for a in range(ell):
        for b in range(ell):
            if (a * a + b * b + 1) % ell == 0:
                ab = (a, b)
                break
        if ab:
            break
    a, b = ab
    I = (0, ell - 1, 1, 0)
    J = (a, b, b, ell - a)
    K = _mul(I, J, ell)
    g3 = None
    for x in conjugating_solutions(I, J, ell):
        if _mul(_mul(x, J, ell), _inv(x, ell), ell) == K:
            d = _det(x, ell)
            if pow(d, (ell - 1) // 2, ell) == 1:
                # rescale to determinant 1
                r = _sqrt_mod(d, ell)
                ri = inv_mod(r, ell)
                g3 = tuple(v * ri % ell for v in x)
                break
    assert g3 is not None
    taus = [t % ell for t in _roots_quadratic(1, 1, ell - 1, ell)]
    for _ in range(4000):
        tau = taus[rng.randrange(len(taus))]
        y0 = (0, ell - 1, 1, tau)
        x = (rng.randrange(ell), rng.randrange(ell),
             rng.randrange(ell), rng.randrange(ell))
        if gcd(_det(x, ell), ell) != 1:
            continue
        y = _mul(_mul(x, y0, ell), _inv(x, ell), ell)
        gens = [I, J, g3, y]
        try:
            cl = _close(gens, ell, budget=260)
        except RuntimeError:
            continue
        if len(cl) == 120:
            return gens
    raise RuntimeError("icosahedral search failed mod %d" % ell)


def _sqrt_mod(a, ell):
    for r in range(ell):
        if r * r % ell == a % ell:
            return r
    raise ValueError("not a square")


def _roots_quadratic(a, b, c, ell):
    return [x for x in range(ell) if (a * x * x + b * x + c) % ell == 0]


def _structural_prime_classes(ell, index_bound):
    """Conjugacy classes of subgroups of GL2(ell), ell an odd prime >= 5,
    with index at most the bound, via the subgroup classification: the
    group itself and its SL2-containing subgroups, subgroups of the Borel
    and of the two Cartan normalizers, subgroups of the octahedral
    preimage, and (for ell = +-1 mod 5) scalar extensions of SL2(5)."""
    total = gl2_order(ell)
    min_order = 1 if index_bound is None else -(-total // index_bound)
    out = []
    # SL2-containing: one class per subgroup of the cyclic determinant image
    w = _primitive_root(ell)
    for d in range(1, ell):
        if (ell - 1) % d:
            continue
        if total // (sl2_order(ell) * d) > (index_bound or total):
            continue
        if d == ell - 1:
            out.append(SubgroupRep.full_group(ell))
            continue
        u = pow(w, (ell - 1) // d, ell)
        rep = SubgroupRep.from_tuples(
            ell, [(0, ell - 1, 1, 0), (1, 1, 0, 1), (u, 0, 0, 1)])
        assert rep.order == sl2_order(ell) * d
        out.append(rep)
    # proper projective classes
    ambients = [frozenset(_borel_elements(ell)),
                named_group("split_normalizer", ell).element_set(),
                named_group("nonsplit_normalizer", ell).element_set(),
                _octahedral_group(ell).element_set()]
    collected = []
    byfp = {}
    for amb in ambients:
        for cls in _subgroup_classes_of(amb, ell):
            if len(cls["set"]) < min_order:
                continue
            gens = cls["gens"] or [IDENT]
            rep = SubgroupRep.from_tuples(ell, gens)
            fp = _rep_fingerprint(rep)
            dup = False
            for other in byfp.get(fp, ()):
                if is_conjugate(rep, other):
                    dup = True
                    break
            if not dup:
                byfp.setdefault(fp, []).append(rep)
                collected.append(rep)
    if ell % 5 in (1, 4):
        ico = _icosahedral_sl(ell)
        half = (ell - 1) // 2
        for c in range(1, half + 1):
            if half % c:
                continue
            zgen = pow(w, (ell - 1) // (2 * c), ell)
            rep = SubgroupRep.from_tuples(ell, ico + [(zgen, 0, 0, zgen)])
            assert rep.order == 120 * c, (rep.order, c)
            if rep.order < min_order:
                continue
            fp = _rep_fingerprint(rep)
            dup = any(is_conjugate(rep, o) for o in byfp.get(fp, ()))
            if not dup:
                byfp.setdefault(fp, []).append(rep)
                collected.append(rep)
    out.extend(collected)
    return out


def _gl2_elements(N):
    out = []
    for a in range(N):
        for b in range(N):
            for c in range(N):
                for d in range(N):
                    if gcd((a * d - b * c) % N, N) == 1:
                        out.append((a, b, c, d))
    return out


def _generic_classes(N, index_bound, max_ambient):
    total = gl2_order(N)
    if total > max_ambient:
        raise RuntimeError("enumeration budget exceeded: |GL2(%d)| = %d"
                           % (N, total))
    G = _gl2_elements(N)
    seeds = []
    pr = _perfect_residual(G, N)
    if pr is not None:
        seeds.append(pr[1])
    out = []
    for cls in _subgroup_classes_of(G, N, seeds):
        if index_bound is not None and total // len(cls["set"]) > index_bound:
            continue
        rep = SubgroupRep.from_tuples(N, cls["gens"] or [IDENT])
        rep.normalizer_order = cls["norm"]
        out.append(rep)
    return out


# -- lifting to modulus ell^2 ---------------------------------------------

def _ad_matrix(g, ell):
    """4x4 matrix of m -> g m g^-1 on the basis e11,e12,e21,e22."""
    gi = _inv(g, ell)
    cols = []
    for k in range(4):
        m = [0, 0, 0, 0]
        m[k] = 1
        gm = (g[0] * m[0] + g[1] * m[2], g[0] * m[1] + g[1] * m[3],
              g[2] * m[0] + g[3] * m[2], g[2] * m[1] + g[3] * m[3])
        r = _mul(gm, gi, ell)
        cols.append(r)
    # cols[k] is the image of e_k; return row-major matrix A with A[i][k]
    return [[cols[k][i] % ell for k in range(4)] for i in range(4)]


def _phi_apply(phi, A, ell):
    """Row vector phi composed with the linear map A (phi o A)."""
    return tuple(sum(phi[i] * A[i][k] for i in range(4)) % ell for k in range(4))


def _stable_hyperplanes(gens, ell):
    """Functionals phi (up to scalar) whose kernel is Ad-stable, with the
    eigenvalue character chi(g) for each generator."""
    mats = [_ad_matrix(g, ell) for g in gens]
    out = []
    # normalized representatives of P^3(F_ell)
    for lead in range(4):
        base = [0] * lead + [1]
        import itertools
        for rest in itertools.product(range(ell), repeat=3 - lead):
            phi = tuple(base + list(rest))
            chis = []
            ok = True
            for A in mats:
                psi = _phi_apply(phi, A, ell)
                lam = psi[lead]
                if tuple(v * 1 % ell for v in psi) != tuple(lam * v % ell for v in phi):
                    ok = False
                    break
                # cocycle twist uses phi(g^-1 m g) = chi(g) phi(m)
                chis.append(inv_mod(lam, ell))
            if ok:
                out.append((phi, chis))
    return out


def _solve_affine(rows, k, ell):
    """Solve rows . (t, 1) = 0 over F_ell; rows have length k+1.

    Returns (particular solution, nullspace basis) or None if inconsistent.
    """
    M = [list(r) for r in rows]
    piv = []
    r = 0
    for c in range(k):
        sel = None
        for i in range(r, len(M)):
            if M[i][c] % ell:
                sel = i
                break
        if sel is None:
            continue
        M[r], M[sel] = M[sel], M[r]
        inv = inv_mod(M[r][c] % ell, ell)
        M[r] = [v * inv % ell for v in M[r]]
        for i in range(len(M)):
            if i != r and M[i][c] % ell:
                f = M[i][c]
                M[i] = [(M[i][j] - f * M[r][j]) % ell for j in range(k + 1)]
        piv.append(c)
        r += 1
    for i in range(r, len(M)):
        if M[i][k] % ell:
            return None
    part = [0] * k
    for i, c in enumerate(piv):
        part[c] = (-M[i][k]) % ell
    free = [c for c in range(k) if c not in piv]
    basis = []
    for f in free:
        v = [0] * k
        v[f] = 1
        for i, c in enumerate(piv):
            v[c] = (-M[i][f]) % ell
        basis.append(v)
    return part, basis


def _echelon(vectors, k, ell):
    M = [list(v) for v in vectors]
    out = []
    piv = []
    for c in range(k):
        sel = None
        for i in range(len(M)):
            if M[i][c] % ell and not any(M[i][p] % ell for p in range(c)):
                sel = i
                break
        if sel is None:
            continue
        row = M.pop(sel)
        inv = inv_mod(row[c] % ell, ell)
        row = [v * inv % ell for v in row]
        M = [[(m[j] - m[c] * row[j]) % ell for j in range(k)] for m in M]
        for o in out:
            if o[c] % ell:
                f = o[c]
                for j in range(k):
                    o[j] = (o[j] - f * row[j]) % ell
        out.append(row)
        piv.append(c)
    return out, piv


def _reduce_mod_span(v, ech, piv, ell):
    v = list(v)
    for row, c in zip(ech, piv):
        if v[c] % ell:
            f = v[c]
            for j in range(len(v)):
                v[j] = (v[j] - f * row[j]) % ell
    return tuple(v)


class _LiftContext:
    """Cocycle bookkeeping for subgroups of GL2(ell^2) with a prescribed
    mod-ell image and a stable hyperplane of the reduction kernel."""

    def __init__(self, Hbar, ell):
        self.ell = ell
        self.n2 = ell * ell
        self.Hbar = Hbar
        gens = _small_generating_set(Hbar)
        self.gens = gens
        self.k = len(gens)
        self.elems = sorted(Hbar.element_set())
        self.index = {h: i for i, h in enumerate(self.elems)}
        self._cocycle_data = {}

    def cocycle_classes(self, phi, chis):
        """Distinct lifts for one stable hyperplane: list of t-vectors."""
        ell, n2, k = self.ell, self.n2, self.k
        gens = self.gens
        # symbolic BFS: f(h) = alpha(h) + beta(h) . t
        alpha = {IDENT: 0}
        beta = {IDENT: (0,) * k}
        rows = set()
        frontier = [IDENT]
        while frontier:
            nxt = []
            for h in frontier:
                for j, g in enumerate(gens):
                    tgt = _mul(h, g, ell)
                    cval = self._factor_set(h, g, phi)
                    chi = chis[j]
                    a = (cval + chi * alpha[h]) % ell
                    b = [chi * v % ell for v in beta[h]]
                    b[j] = (b[j] + 1) % ell
                    if tgt not in alpha:
                        alpha[tgt] = a
                        beta[tgt] = tuple(b)
                        nxt.append(tgt)
                    else:
                        row = tuple((b[i] - beta[tgt][i]) % ell for i in range(k)) \
                            + ((a - alpha[tgt]) % ell,)
                        if any(row):
                            rows.add(row)
            frontier = nxt
        assert len(alpha) == len(self.elems)
        self._cocycle_data[_normalize_phi(phi, ell)] = (alpha, beta)
        sol = _solve_affine(sorted(rows), k, ell) if rows else ([0] * k, [
            [1 if i == j else 0 for i in range(k)] for j in range(k)])
        if sol is None:
            return []
        part, basis = sol
        cob = self._coboundaries(phi, chis)
        ech, piv = _echelon(cob, k, ell)
        import itertools
        reps = {}
        for combo in itertools.product(range(ell), repeat=len(basis)):
            v = list(part)
            for c, bv in zip(combo, basis):
                for j in range(k):
                    v[j] = (v[j] + c * bv[j]) % ell
            key = _reduce_mod_span(v, ech, piv, ell)
            if key not in reps:
                reps[key] = tuple(v)
        return list(reps.values())

    def _factor_set(self, a, b, phi):
        """phi of the kernel correction in s(a) s(b) = s(ab) (1 + ell c)."""
        ell, n2 = self.ell, self.n2
        P = _mul(a, b, n2)
        Q = _mul(a, b, ell)
        R = _mul(_inv(Q, n2), P, n2)
        c = ((R[0] - 1) // ell % ell, R[1] // ell % ell,
             R[2] // ell % ell, (R[3] - 1) // ell % ell)
        return sum(phi[i] * c[i] for i in range(4)) % ell

    def _coboundaries(self, phi, chis):
        ell = self.ell
        out = []
        for t in range(4):
            m = [0, 0, 0, 0]
            m[t] = 1
            vec = []
            for g in self.gens:
                gi = _inv(g, ell)
                gm = (gi[0] * m[0] + gi[1] * m[2], gi[0] * m[1] + gi[1] * m[3],
                      gi[2] * m[0] + gi[3] * m[2], gi[2] * m[1] + gi[3] * m[3])
                c = _mul(gm, g, ell)
                diff = tuple((m[i] - c[i]) % ell for i in range(4))
                vec.append(sum(phi[i] * diff[i] for i in range(4)) % ell)
            out.append(vec)
        return out

    def f_value(self, phi, h, tvec):
        a, b = self._cocycle_data[_normalize_phi(phi, self.ell)]
        return (a[h] + sum(x * y for x, y in zip(b[h], tvec))) % self.ell

    def lifted_rep(self, phi, tvec):
        """The actual subgroup of GL2(ell^2) for one cocycle solution."""
        ell, n2 = self.ell, self.n2
        lead = next(i for i in range(4) if phi[i] % ell)
        inv_lead = inv_mod(phi[lead], ell)
        gens2 = []
        for j, g in enumerate(self.gens):
            m = [0, 0, 0, 0]
            m[lead] = tvec[j] * inv_lead % ell
            corr = (1 + ell * m[0], ell * m[1], ell * m[2], 1 + ell * m[3])
            gens2.append(_mul(g, corr, n2))
        # kernel part: the hyperplane ker(phi)
        for w in self._hyperplane_basis(phi):
            gens2.append((1 + ell * w[0], ell * w[1], ell * w[2], 1 + ell * w[3]))
        order = self.Hbar.order * ell ** 3
        return SubgroupRep(n2, [GL2Element.from_tuple(t, n2) for t in gens2],
                           _order_hint=order)

    def _hyperplane_basis(self, phi):
        ell = self.ell
        lead = next(i for i in range(4) if phi[i] % ell)
        inv_lead = inv_mod(phi[lead], ell)
        basis = []
        for t in range(4):
            if t == lead:
                continue
            w = [0, 0, 0, 0]
            w[t] = 1
            w[lead] = (-phi[t] * inv_lead) % ell
            basis.append(tuple(w))
        return basis

    def transform(self, phi, tvec, nrep):
        """(phi, t) data of the conjugate subgroup by a normalizer element."""
        ell, n2 = self.ell, self.n2
        A = _ad_matrix(nrep, ell)
        phi2 = _phi_apply(phi, A, ell)
        lead = next(i for i in range(4) if phi[i] % ell)
        inv_lead = inv_mod(phi[lead], ell)
        # rescale so phi2 is the normalized representative; the f-values
        # (hence tvec entries) scale by the same unit
        lead2 = next(i for i in range(4) if phi2[i] % ell)
        unit = inv_mod(phi2[lead2], ell)
        phi2 = tuple(v * unit % ell for v in phi2)
        ni = _inv(nrep, n2)
        tvec2 = []
        for g in self.gens:
            hbar = _mul(_mul(nrep, g, ell), _inv(nrep, ell), ell)
            fv = self.f_value(phi, hbar, tvec)
            m = [0, 0, 0, 0]
            m[lead] = fv * inv_lead % ell
            corr = (1 + ell * m[0], ell * m[1], ell * m[2], 1 + ell * m[3])
            X = _mul(hbar, corr, n2)
            B = _mul(_mul(ni, X, n2), nrep, n2)
            # B = s(g) (1 + ell m'), read off m'
            R = _mul(_inv(g, n2), B, n2)
            mp = ((R[0] - 1) // ell % ell, R[1] // ell % ell,
                  R[2] // ell % ell, (R[3] - 1) // ell % ell)
            tvec2.append(sum(phi2[i] * mp[i] for i in range(4)) % ell)
        return phi2, tuple(tvec2)


def _normalize_phi(phi, ell):
    lead = next(i for i in range(4) if phi[i] % ell)
    inv = inv_mod(phi[lead], ell)
    return tuple(v * inv % ell for v in phi)


def _small_generating_set(rep):
    """Try to find 2-3 generators for a subgroup given its element set."""
    import random as _random
    n = rep.modulus
    elems = sorted(rep.element_set())
    target = rep.order
    rng = _random.Random(5)
    for tries, count in ((60, 2), (60, 3)):
        for _ in range(tries):
            gens = [elems[rng.randrange(len(elems))] for _ in range(count)]
            if len(_close(gens, n)) == target:
                return gens
    return rep.generators_tuples()


def _normalizer_coset_reps(Hbar):
    """Coset representatives (over Hbar) of the normalizer of Hbar in GL2."""
    ell = Hbar.modulus
    if Hbar.is_full:
        return []
    gens = Hbar.generators_tuples()
    reps = []
    covered = set()
    hset = Hbar.element_set()
    for g in _gl2_elements(ell):
        if g in covered:
            continue
        gi = _inv(g, ell)
        ok = True
        for x in gens:
            if _mul(_mul(g, x, ell), gi, ell) not in hset:
                ok = False
                break
        if not ok:
            continue
        if reps or g != IDENT:
            pass
        reps.append(g)
        for h in hset:
            covered.add(_mul(h, g, ell))
    return [r for r in reps if r not in hset]


def _lift_classes(ell, index_bound):
    """Conjugacy classes of subgroups of GL2(ell^2) of index at most the
    bound: full preimages of mod-ell classes, plus level-ell^2 groups whose
    intersection with the reduction kernel is a stable hyperplane."""
    n2 = ell * ell
    total2 = gl2_order(n2)
    if gl2_order(ell) <= 6000:
        base = _generic_classes(ell, index_bound, 6000)
    else:
        base = _structural_prime_classes(ell, index_bound)
    out = []
    kernel_gens = []
    for t in range(4):
        m = [0, 0, 0, 0]
        m[t] = 1
        kernel_gens.append((1 + ell * m[0], ell * m[1], ell * m[2], 1 + ell * m[3]))
    for H in base:
        if H.is_full:
            out.append(SubgroupRep.full_group(n2))
            continue
        gens2 = [tuple(v % n2 for v in g) for g in H.generators_tuples()]
        rep = SubgroupRep(n2, [GL2Element.from_tuple(t, n2)
                               for t in gens2 + kernel_gens],
                          _order_hint=H.order * ell ** 4)
        out.append(rep)
    # sanity: higher-codimension stable subspaces would need a finer lift
    if index_bound is None or index_bound >= ell * ell * (ell + 1):
        raise RuntimeError("index bound admits lifts beyond stable "
                           "hyperplanes; not supported")
    sub_bound = index_bound // ell
    for H in base:
        if H.index() > sub_bound:
            continue
        Hbar = H if not H.is_full else SubgroupRep.from_tuples(
            ell, [(0, ell - 1, 1, 0), (1, 1, 0, 1),
                  (_primitive_root(ell), 0, 0, 1)])
        if Hbar.order > 40000:
            raise RuntimeError("mod-ell image too large to lift")
        ctx = _LiftContext(Hbar, ell)
        stables = _stable_hyperplanes(ctx.gens, ell)
        if not stables:
            continue
        cands = []
        for phi, chis in stables:
            for tvec in ctx.cocycle_classes(phi, chis):
                cands.append((_normalize_phi(phi, ell), tvec))
        if not cands:
            continue
        # fuse under the normalizer of the mod-ell image
        nreps = _normalizer_coset_reps(Hbar)
        canon = {}
        for phi, chis in stables:
            cob = ctx._coboundaries(phi, chis)
            canon[_normalize_phi(phi, ell)] = _echelon(cob, ctx.k, ell)
        keep = []
        seen = set()
        for phi, tvec in cands:
            ech, piv = canon[phi]
            key = (phi, _reduce_mod_span(tvec, ech, piv, ell))
            if key in seen:
                continue
            keep.append((phi, tvec))
            seen.add(key)
            for n in nreps:
                phi2, tvec2 = ctx.transform(phi, tvec, n)
                phi2 = _normalize_phi(phi2, ell)
                if phi2 not in canon:
                    continue
                e2, p2 = canon[phi2]
                seen.add((phi2, _reduce_mod_span(tvec2, e2, p2, ell)))
        for phi, tvec in keep:
            out.append(ctx.lifted_rep(phi, tvec))
    return out


def enumerate_subgroups(N, index_bound=None, max_ambient=6000):
    """One representative per conjugacy class of subgroups of GL2(Z/N)
    with index at most index_bound (None = no bound).

    Small moduli use bottom-up cyclic extension over the whole ambient
    group; prime moduli beyond that use the subgroup classification; a
    squared prime uses hyperplane lifting of the mod-ell classes.  Raises
    RuntimeError when the modulus is out of budget.
    """
    fac = _factor(N)
    if gl2_order(N) <= max_ambient:
        return _generic_classes(N, index_bound, max_ambient)
    if len(fac) == 1 and fac[0][1] == 1 and N >= 5:
        return _structural_prime_classes(N, index_bound)
    if len(fac) == 1 and fac[0][1] == 2 and fac[0][0] >= 11:
        return _lift_classes(fac[0][0], index_bound)
    raise RuntimeError("enumeration budget exceeded for modulus %d" % N)


def is_arithmetically_maximal(H, infinite_list, parents=None):
    """Surjective determinant, real points on the modular curve, and
    maximality with respect to the supplied list of labels of groups whose
    curves have infinitely many rational points.

    `parents` may supply the labels of the minimal proper supergroups; if
    omitted they are computed (feasible for small moduli only).
    """
    if not H.det_surjective():
        return False
    if not _has_real_points(H):
        return False
    from . import labels as _labels
    lab = str(_labels.assign_label(H))
    if lab in infinite_list:
        return False
    if parents is None:
        parents = _labels.parent_labels(H)
    if not parents:
        return lab != "1.1.0.1"
    return all(p in infinite_list for p in parents)


def _has_real_points(H):
    """Does H contain a conjugate of (1 0;0 -1) (odd level) or of it or
    (1 1;0 -1) (even level)?"""
    N = H.modulus
    if H.is_full:
        return True
    if N % 2:
        # any involution with determinant -1 is conjugate to (1 0;0 -1)
        for h in H.elements_with_det(N - 1):
            if _mul(h, h, N) == IDENT:
                return True
        return False
    targets = [(1, 0, 0, N - 1), (1, 1, 0, N - 1)]
    for h in H.elements_with_det(N - 1):
        if _mul(h, h, N) != IDENT:
            continue
        for t in targets:
            if (h[0] + h[3]) % N == (t[0] + t[3]) % N:
                for _x in conjugating_solutions(t, h, N):
                    return True
    return False
