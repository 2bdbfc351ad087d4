"""Isogeny decomposition of Jac(X_H) from newform trace data.

Every simple isogeny factor of J_H is a factor of J_1(N^2), so J_H is
isogenous to a product of abelian varieties A_f attached to Galois
orbits of weight-2 eigenforms of level dividing N^2 whose nebentypus
conductor divides N.  The exponent of each orbit is recovered linearly:
stacking the orbit trace sequences as columns of an integer matrix T(B)
and the point-count data of X_H as a(H;B), the exponent vector is the
unique solution of T(B) e = a(H;B) once B is large enough for the
columns to be independent.  Everything is exact integer/rational
arithmetic; integrality and nonnegativity of the solution are checked,
not assumed.
"""

import os
from fractions import Fraction
from math import gcd

from .gl2group import invariants
from .curvecount import count_points

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")


class TraceDataError(Exception):
    """The bundled trace database cannot support the request."""


class DecompositionError(Exception):
    """The linear system has no acceptable solution."""


# ------------------------------------------------- character bookkeeping
#
# Trace-form labels carry a character-orbit letter (level.2.letter.index).
# Selecting the forms with nebentypus conductor dividing N needs the
# letter -> conductor table for each prime-power modulus, in the same
# (order, trace vector) sort the database labels use.

def _letter_code(n):
    if n < 26:
        return chr(ord("a") + n)
    out = ""
    while n:
        n, r = divmod(n, 26)
        out = chr(ord("a") + r) + out
    return out


def _factorize(n):
    out = []
    d = 2
    while d * d <= n:
        while n % d == 0:
            out.append(d)
            n //= d
        d += 1
    if n > 1:
        out.append(n)
    return out


def _euler_phi(n):
    out, m = n, n
    p = 2
    while p * p <= m:
        if m % p == 0:
            out -= out // p
            while m % p == 0:
                m //= p
        p += 1
    if m > 1:
        out -= out // m
    return out


def _moebius(n):
    out = 1
    for p in set(_factorize(n)):
        if n % (p * p) == 0:
            return 0
        out = -out
    return out if n > 1 else 1


def _cyclo_trace(a, m):
    # trace of zeta_m^a down to Q
    if m == 1:
        return 1
    g = gcd(a % m, m)
    d = m // g if g else m
    return _moebius(d) * (_euler_phi(m) // _euler_phi(d))


def _divisors(n):
    out = [1]
    for p in sorted(set(_factorize(n))):
        e = 0
        m = n
        while m % p == 0:
            e += 1
            m //= p
        out = [d * p ** k for d in out for k in range(e + 1)]
    return sorted(out)


def _unit_gens(M):
    # generators (g, order) of (Z/M)^* for prime-power M
    if M in (1, 2):
        return []
    if M % 2 == 0:
        if M == 4:
            return [(3, 2)]
        return [(M - 1, 2), (5, M // 4)]
    tot = _euler_phi(M)
    for g in range(2, M):
        if gcd(g, M) > 1:
            continue
        if all(pow(g, tot // p, M) != 1 for p in set(_factorize(tot))):
            return [(g, tot)]
    raise RuntimeError("no primitive root mod %d" % M)


_CHAR_TABLE = {}


def character_table(M):
    """{letter: (order, conductor, degree)} for the Galois orbits of
    Dirichlet characters of prime-power modulus M, letters in
    (order, trace vector) sort order."""
    if M in _CHAR_TABLE:
        return _CHAR_TABLE[M]
    gens = _unit_gens(M)
    orders = [o for _, o in gens]
    dlog = {}

    def rec(i, u, vec):
        if i == len(gens):
            dlog[u] = tuple(vec)
            return
        g, o = gens[i]
        x = u
        for e in range(o):
            rec(i + 1, x, vec + [e])
            x = (x * g) % M
    rec(0, 1 % M, [])

    seen = set()
    orbits = []
    for choice in _products([range(o) for o in orders]):
        m = 1
        for c, o in zip(choice, orders):
            if c:
                oo = o // gcd(c, o)
                m = m * oo // gcd(m, oo)
        okeys = [tuple((k * c) % o for c, o in zip(choice, orders))
                 for k in range(1, m + 1) if gcd(k, m) == 1]
        if min(okeys) in seen:
            continue
        seen.add(min(okeys))
        expo = {}
        for u, vec in dlog.items():
            e = 0
            for c, v, o in zip(choice, vec, orders):
                e = (e + c * v * m // o) % m
            expo[u] = e
        # conductor: smallest d | M with chi trivial on units = 1 mod d
        cond = M
        if m == 1:
            cond = 1
        else:
            for d in _divisors(M):
                if all(expo[u] % m == 0 for u in expo
                       if u % d == 1 % d):
                    cond = d
                    break
        tv = tuple(_cyclo_trace(expo[n % M], m) if gcd(n, M) == 1 else 0
                   for n in range(1, M + 1))
        orbits.append((m, tv, cond))
    orbits.sort(key=lambda t: (t[0], t[1]))
    table = {_letter_code(i): (m, cond, _euler_phi(m))
             for i, (m, _, cond) in enumerate(orbits)}
    _CHAR_TABLE[M] = table
    return table


def _products(ranges):
    if not ranges:
        return [()]
    out = [()]
    for r in ranges:
        out = [t + (x,) for t in out for x in r]
    return out


# ------------------------------------------------------------ trace forms

class TraceForm:
    """One Galois orbit of weight-2 eigenforms: label, level, orbit
    dimension d = [Q(f):Q], analytic rank of A_f, and the integer trace
    sequence a_n(Tr f) for n up to the stored bound."""

    __slots__ = ("label", "level", "dimension", "rank", "traces",
                 "char_letter")

    def __init__(self, label, level, dimension, rank, traces):
        self.label = label
        self.level = level
        self.dimension = dimension
        self.rank = rank
        self.traces = list(traces)
        parts = label.split(".")
        if len(parts) != 4 or parts[1] != "2":
            raise TraceDataError("malformed trace-form label %r" % label)
        if int(parts[0]) != level:
            raise TraceDataError("label/level mismatch in %r" % label)
        self.char_letter = parts[2]
        if not self.traces or self.traces[0] != dimension:
            raise TraceDataError(
                "a_1(Tr f) = %r != dim %d for %s"
                % (self.traces[:1], dimension, label))

    def a(self, n):
        if n > len(self.traces):
            raise TraceDataError(
                "trace coefficient a_%d beyond stored bound %d for %s"
                % (n, len(self.traces), self.label))
        return self.traces[n - 1]

    @property
    def conductor(self):
        return character_table(self.level)[self.char_letter][1]

    def __repr__(self):
        return "TraceForm(%s, dim %d, rank %d)" % (
            self.label, self.dimension, self.rank)


class TraceDatabase:
    """Bundled newform trace data plus a coverage ledger.

    `forms` maps labels to TraceForm.  `covered` holds (level, letter)
    pairs whose newspace was fully computed (possibly empty); `skipped`
    maps (level, letter) pairs that were out of reach to the degree of
    their character field, which lower-bounds every orbit dimension in
    the space."""

    def __init__(self, forms, covered, skipped):
        self.forms = {f.label: f for f in forms}
        self.covered = set(covered)
        self.skipped = dict(skipped)

    @classmethod
    def load(cls, path=None, coverage_path=None):
        if path is None:
            path = os.path.join(DATA_DIR, "traces.txt")
        if coverage_path is None:
            cand = os.path.join(os.path.dirname(path),
                                "traces_coverage.txt")
            coverage_path = cand if os.path.exists(cand) else None
        forms = []
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                try:
                    label, level, dim, rank, tr = line.split(":")
                    traces = [int(t) for t in tr.strip("[]").split(",")]
                    forms.append(TraceForm(label, int(level), int(dim),
                                           int(rank), traces))
                except (ValueError, TraceDataError) as exc:
                    raise TraceDataError(
                        "%s line %d: %s" % (path, lineno, exc))
        if len({f.label for f in forms}) != len(forms):
            raise TraceDataError("duplicate labels in %s" % path)
        covered, skipped = set(), {}
        if coverage_path is not None:
            with open(coverage_path) as fh:
                for line in fh:
                    parts = line.strip().split(":")
                    if parts[0] == "done":
                        covered.add((int(parts[1]), parts[2]))
                    elif parts[0] == "skip":
                        skipped[(int(parts[1]), parts[2])] = int(parts[5])
        for f in forms:
            covered.add((f.level, f.char_letter))
        return cls(forms, covered, skipped)


def candidate_forms(H, db):
    """Trace forms that can appear in the decomposition of Jac(X_H):
    level dividing N^2, nebentypus conductor dividing N, orbit dimension
    at most g(H); sorted by (dimension, trace sequence).

    Raises TraceDataError when a required newspace is neither computed
    nor excludable (a skipped space can only be excluded when the degree
    of its character field already exceeds the genus)."""
    N = H.modulus
    g = invariants(H).genus
    if g == 0:
        return []
    gaps = []
    for M in _divisors(N * N):
        if M == 1:
            continue
        for letter, (order, cond, deg) in character_table(M).items():
            if N % cond:
                continue
            even = (order == 1 or
                    _is_even_orbit(M, letter))
            if not even:
                continue
            if (M, letter) in db.covered:
                continue
            lower = db.skipped.get((M, letter))
            if lower is not None and lower > g:
                continue        # no orbit there can have dimension <= g
            gaps.append("%d.2.%s" % (M, letter))
    if gaps:
        raise TraceDataError(
            "trace database does not cover newspace(s) %s needed for "
            "level %d, genus %d" % (", ".join(sorted(gaps)), N, g))
    out = [f for f in db.forms.values()
           if (N * N) % f.level == 0 and N % f.conductor == 0
           and f.dimension <= g]
    out.sort(key=lambda f: (f.dimension, f.traces))
    return out


_EVEN_CACHE = {}


def _is_even_orbit(M, letter):
    # chi(-1) = 1; odd characters carry no weight-2 forms
    key = (M, letter)
    if key not in _EVEN_CACHE:
        gens = _unit_gens(M)
        orders = [o for _, o in gens]
        # recompute parity the same way the table is built
        dlog = {}

        def rec(i, u, vec):
            if i == len(gens):
                dlog[u] = tuple(vec)
                return
            g, o = gens[i]
            x = u
            for e in range(o):
                rec(i + 1, x, vec + [e])
                x = (x * g) % M
        rec(0, 1 % M, [])
        seen = set()
        orbits = []
        for choice in _products([range(o) for o in orders]):
            m = 1
            for c, o in zip(choice, orders):
                if c:
                    oo = o // gcd(c, o)
                    m = m * oo // gcd(m, oo)
            okeys = [tuple((k * c) % o for c, o in zip(choice, orders))
                     for k in range(1, m + 1) if gcd(k, m) == 1]
            if min(okeys) in seen:
                continue
            seen.add(min(okeys))
            expo = {}
            for u, vec in dlog.items():
                e = 0
                for c, v, o in zip(choice, vec, orders):
                    e = (e + c * v * m // o) % m
                expo[u] = e
            tv = tuple(_cyclo_trace(expo[n % M], m)
                       if gcd(n, M) == 1 else 0
                       for n in range(1, M + 1))
            even = (M <= 2) or (expo[M - 1] % m == 0)
            orbits.append((m, tv, even))
        orbits.sort(key=lambda t: (t[0], t[1]))
        for i, (_, _, even) in enumerate(orbits):
            _EVEN_CACHE[(M, _letter_code(i))] = even
    return _EVEN_CACHE[key]


# ------------------------------------------------------------- the solver

class DecompositionResult:
    """Exponent vector of Jac(X_H) over the candidate trace forms."""

    def __init__(self, pairs, genus, bound):
        self.pairs = list(pairs)            # (TraceForm, exponent >= 0)
        self.genus = genus
        self.bound = bound
        assert all(e >= 0 and e == int(e) for _, e in self.pairs)
        assert sum(f.dimension * e for f, e in self.pairs) == genus

    @property
    def rank(self):
        return sum(f.rank * e for f, e in self.pairs)

    @property
    def factors(self):
        return [(f, e) for f, e in self.pairs if e]

    def factor_dimensions(self):
        out = []
        for f, e in self.factors:
            out.extend([f.dimension] * e)
        return sorted(out)

    def __repr__(self):
        inner = " + ".join(
            ("%d x %s" % (e, f.label)) if e > 1 else f.label
            for f, e in self.factors) or "0"
        return "DecompositionResult(%s; rank %d)" % (inner, self.rank)


def _primes_upto(B):
    sieve = bytearray([1]) * (B + 1)
    sieve[:2] = b"\x00\x00"
    for i in range(2, int(B ** 0.5) + 1):
        if sieve[i]:
            sieve[i * i::i] = bytearray(len(sieve[i * i::i]))
    return [p for p in range(2, B + 1) if sieve[p]]


def build_trace_matrix(forms, H, B, counts=None):
    """T(B) and a(H;B): first row is the dimension row (a_1), then one
    row per prime p <= B not dividing the level, with a_p(Tr f_i) in
    column i and p + 1 - #X_H(F_p) on the right-hand side.

    `counts` optionally caches {p: #X_H(F_p)} across escalations."""
    N = H.modulus
    g = invariants(H).genus
    rows = [[f.dimension for f in forms]]
    rhs = [g]
    for p in _primes_upto(B):
        if N % p == 0:
            continue
        rows.append([f.a(p) for f in forms])
        if counts is not None and p in counts:
            np_ = counts[p]
        else:
            np_ = count_points(H, p).total
            if counts is not None:
                counts[p] = np_
        rhs.append(p + 1 - np_)
    return rows, rhs


def _rref(rows, rhs):
    """Reduced row echelon form of [rows | rhs] over Q.  Returns
    (pivot column list, reduced rows, reduced rhs, inconsistent)."""
    A = [[Fraction(x) for x in r] + [Fraction(b)]
         for r, b in zip(rows, rhs)]
    ncols = len(rows[0])
    piv = []
    r = 0
    for c in range(ncols):
        sel = next((i for i in range(r, len(A)) if A[i][c]), None)
        if sel is None:
            continue
        A[r], A[sel] = A[sel], A[r]
        inv = 1 / A[r][c]
        A[r] = [x * inv for x in A[r]]
        for i in range(len(A)):
            if i != r and A[i][c]:
                f = A[i][c]
                A[i] = [x - f * y for x, y in zip(A[i], A[r])]
        piv.append(c)
        r += 1
    inconsistent = any(all(x == 0 for x in row[:-1]) and row[-1]
                       for row in A[r:])
    return piv, A[:r], inconsistent


def solve_decomposition(H, db, B_init=100, B_max=4000):
    """Exponent vector e with T(B) e = a(H;B), escalating B by factor 2
    until the columns of T(B) are independent; the solution is checked
    to be a nonnegative integer vector with genus sum g(H)."""
    g = invariants(H).genus
    forms = candidate_forms(H, db)
    if g == 0:
        return DecompositionResult([], 0, B_init)
    if not forms:
        raise TraceDataError(
            "no candidate forms for level %d, genus %d" % (H.modulus, g))
    counts = {}
    B = B_init
    while True:
        rows, rhs = build_trace_matrix(forms, H, B, counts)
        piv, red, inconsistent = _rref(rows, rhs)
        if len(piv) == len(forms):
            break
        if 2 * B > B_max:
            raise DecompositionError(
                "columns still dependent at B = %d (max %d)" % (B, B_max))
        B *= 2
    if inconsistent:
        raise DecompositionError(
            "T(B) e = a(H;B) inconsistent at B = %d: the trace data and "
            "point counts disagree" % B)
    sol = [red[i][-1] for i in range(len(piv))]
    if any(x.denominator != 1 or x < 0 for x in sol):
        raise DecompositionError(
            "solution %s is not a nonnegative integer vector" %
            ([str(x) for x in sol],))
    pairs = list(zip(forms, [int(x) for x in sol]))
    if sum(f.dimension * e for f, e in pairs) != g:
        raise DecompositionError(
            "dimension sum %d != genus %d"
            % (sum(f.dimension * e for f, e in pairs), g))
    return DecompositionResult(pairs, g, B)
