"""Exact arithmetic mod N and 2x2 matrices over Z/NZ.

Matrices are immutable, stored by value as canonical representatives in
[0, N).  Moduli are ordinary machine ints (nothing here ever needs more
than a few digits).  The text form "[a,b,c,d]" is row major.
"""

from math import gcd


class ZmodN:
    """An element of Z/NZ with its modulus attached."""

    __slots__ = ("value", "modulus")

    def __init__(self, value, modulus):
        if modulus <= 0:
            raise ValueError("modulus must be positive")
        self.value = value % modulus
        self.modulus = modulus

    def _check(self, other):
        if not isinstance(other, ZmodN):
            other = ZmodN(other, self.modulus)
        if other.modulus != self.modulus:
            raise ValueError("modulus mismatch: %d vs %d" % (self.modulus, other.modulus))
        return other

    def __add__(self, other):
        other = self._check(other)
        return ZmodN(self.value + other.value, self.modulus)

    def __sub__(self, other):
        other = self._check(other)
        return ZmodN(self.value - other.value, self.modulus)

    def __mul__(self, other):
        other = self._check(other)
        return ZmodN(self.value * other.value, self.modulus)

    def __neg__(self):
        return ZmodN(-self.value, self.modulus)

    def is_unit(self):
        return gcd(self.value, self.modulus) == 1

    def inverse(self):
        return ZmodN(pow(self.value, -1, self.modulus), self.modulus)

    def __eq__(self, other):
        return (isinstance(other, ZmodN) and self.value == other.value
                and self.modulus == other.modulus)

    def __hash__(self):
        return hash((self.value, self.modulus))

    def __repr__(self):
        return "ZmodN(%d, %d)" % (self.value, self.modulus)


def inv_mod(x, n):
    return pow(x, -1, n)


class GL2Element:
    """A 2x2 matrix over Z/NZ.  Not necessarily invertible unless asked."""

    __slots__ = ("a", "b", "c", "d", "modulus", "_hash")

    def __init__(self, a, b, c, d, modulus):
        if modulus <= 0:
            raise ValueError("modulus must be positive")
        self.a = a % modulus
        self.b = b % modulus
        self.c = c % modulus
        self.d = d % modulus
        self.modulus = modulus
        self._hash = hash((self.a, self.b, self.c, self.d, modulus))

    @classmethod
    def from_tuple(cls, t, modulus):
        return cls(t[0], t[1], t[2], t[3], modulus)

    @classmethod
    def identity(cls, modulus):
        return cls(1, 0, 0, 1, modulus)

    @classmethod
    def parse(cls, text, modulus):
        """Parse the "[a,b,c,d]" text form."""
        t = text.strip()
        if not (t.startswith("[") and t.endswith("]")):
            raise ValueError("bad matrix text %r" % text)
        parts = t[1:-1].split(",")
        if len(parts) != 4:
            raise ValueError("bad matrix text %r" % text)
        a, b, c, d = (int(p) for p in parts)
        return cls(a, b, c, d, modulus)

    def render(self):
        return "[%d,%d,%d,%d]" % self.tuple()

    def tuple(self):
        return (self.a, self.b, self.c, self.d)

    def _check(self, other):
        if self.modulus != other.modulus:
            raise ValueError("modulus mismatch: %d vs %d" % (self.modulus, other.modulus))

    def __mul__(self, other):
        self._check(other)
        n = self.modulus
        return GL2Element(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
            n,
        )

    def det(self):
        return (self.a * self.d - self.b * self.c) % self.modulus

    def trace(self):
        return (self.a + self.d) % self.modulus

    def is_invertible(self):
        return gcd(self.det(), self.modulus) == 1

    def inverse(self):
        di = inv_mod(self.det(), self.modulus)
        return GL2Element(di * self.d, -di * self.b, -di * self.c, di * self.a,
                          self.modulus)

    def __neg__(self):
        return GL2Element(-self.a, -self.b, -self.c, -self.d, self.modulus)

    def __pow__(self, k):
        if k < 0:
            return self.inverse() ** (-k)
        result = GL2Element.identity(self.modulus)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def order(self):
        """Multiplicative order (must be invertible)."""
        k = 1
        x = self
        ident = (1, 0, 0, 1)
        while x.tuple() != ident:
            x = x * self
            k += 1
            if k > 4 * self.modulus ** 4:
                raise ValueError("element is not invertible")
        return k

    def reduce(self, M):
        """Entrywise reduction mod M; requires M | N."""
        if self.modulus % M != 0:
            raise ValueError("%d does not divide %d" % (M, self.modulus))
        return GL2Element(self.a, self.b, self.c, self.d, M)

    def conjugate_by(self, g):
        """g * self * g^-1."""
        self._check(g)
        if not g.is_invertible():
            raise ValueError("conjugator is not invertible")
        return g * self * g.inverse()

    def transpose(self):
        return GL2Element(self.a, self.c, self.b, self.d, self.modulus)

    def __eq__(self, other):
        return (isinstance(other, GL2Element) and self._hash == other._hash
                and self.tuple() == other.tuple() and self.modulus == other.modulus)

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return "GL2Element(%d,%d,%d,%d mod %d)" % (self.a, self.b, self.c, self.d,
                                                   self.modulus)


def mat_mul(x, y):
    return x * y


def reduce(x, M):
    return x.reduce(M)


def conjugate(x, g):
    return x.conjugate_by(g)


def gl2_order(N):
    """|GL2(Z/N)|."""
    total = 1
    n = N
    p = 2
    m = N
    while m > 1:
        if m % p == 0:
            k = 0
            while m % p == 0:
                m //= p
                k += 1
            total *= p ** (4 * (k - 1)) * (p * p - 1) * (p * p - p)
        p += 1 if p == 2 else 2
    return total if N > 1 else 1


def sl2_order(N):
    """|SL2(Z/N)|."""
    if N == 1:
        return 1
    total = N ** 3
    m = N
    p = 2
    while m > 1:
        if m % p == 0:
            while m % p == 0:
                m //= p
            total = total // (p * p) * (p * p - 1)
        p += 1 if p == 2 else 2
    return total


def unit_group_order(N):
    """Euler phi."""
    if N == 1:
        return 1
    total = N
    m = N
    p = 2
    while m > 1:
        if m % p == 0:
            while m % p == 0:
                m //= p
            total = total // p * (p - 1)
        p += 1 if p == 2 else 2
    return total
