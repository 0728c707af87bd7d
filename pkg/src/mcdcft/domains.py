"""Domain descriptors for multiply connected domains.

Two canonical models are used throughout:

* a circular domain: the open unit disk minus g disjoint closed disks,
  with the unit circle C_0 as outer boundary and inner circles C_1..C_g;
* a chordal standard domain: the upper half-plane minus g horizontal
  slits, parametrized by the slit endpoints.

The module also provides the Mobius maps attached to a circular domain
(the conjugation maps phi_j and the group generators theta_j) and the
enumeration of the Schottky (semi)group words used by the prime-function
product.
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass, field

__all__ = [
    "Circle",
    "CircularDomain",
    "ChordalStandardDomain",
    "MobiusMap",
    "SchottkyWord",
    "DomainError",
    "conjugation_map",
    "schottky_generator",
    "enumerate_schottky",
    "separation_metric",
    "domain_from_json",
    "domain_to_json",
]


class DomainError(ValueError):
    """Raised when a domain descriptor violates one of its invariants."""


@dataclass(frozen=True)
class Circle:
    """A boundary circle |z - center| = radius."""

    center: complex
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainError("circle radius must be positive, got %r" % (self.radius,))

    def contains(self, z: complex) -> bool:
        return abs(z - self.center) < self.radius

    def point(self, angle: float) -> complex:
        return self.center + self.radius * cmath.exp(1j * angle)


@dataclass(frozen=True)
class CircularDomain:
    """Unit disk minus g disjoint closed disks; genus = number of inner circles."""

    inner_circles: tuple[Circle, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "inner_circles", tuple(self.inner_circles))
        for j, c in enumerate(self.inner_circles):
            if abs(c.center) + c.radius >= 1.0:
                raise DomainError(
                    "inner circle %d (center %s, radius %g) is not strictly inside "
                    "the unit disk" % (j + 1, c.center, c.radius)
                )
        for j in range(len(self.inner_circles)):
            for k in range(j + 1, len(self.inner_circles)):
                cj, ck = self.inner_circles[j], self.inner_circles[k]
                if abs(cj.center - ck.center) <= cj.radius + ck.radius:
                    raise DomainError(
                        "inner circles %d and %d have intersecting closures" % (j + 1, k + 1)
                    )

    @property
    def genus(self) -> int:
        return len(self.inner_circles)

    def circle(self, j: int) -> Circle:
        """Boundary circle C_j; j=0 is the unit circle."""
        if j == 0:
            return Circle(0.0 + 0.0j, 1.0)
        return self.inner_circles[j - 1]

    def contains(self, z: complex, tol: float = 0.0) -> bool:
        """True if z is in the open domain, at distance > tol from the boundary."""
        if abs(z) >= 1.0 - tol:
            return False
        return all(abs(z - c.center) > c.radius + tol for c in self.inner_circles)

    def boundary_distance(self, z: complex) -> float:
        d = 1.0 - abs(z)
        for c in self.inner_circles:
            d = min(d, abs(z - c.center) - c.radius)
        return d


@dataclass(frozen=True)
class ChordalStandardDomain:
    """Upper half-plane minus horizontal slits [z_l, z_r], Im z_l = Im z_r > 0."""

    slits: tuple[tuple[complex, complex], ...] = ()

    def __post_init__(self):
        slits = tuple((complex(a), complex(b)) for a, b in self.slits)
        object.__setattr__(self, "slits", slits)
        for k, (zl, zr) in enumerate(slits):
            if zl.imag <= 0:
                raise DomainError("slit %d has non-positive height %g" % (k + 1, zl.imag))
            if abs(zl.imag - zr.imag) > 1e-10 * max(1.0, abs(zl.imag)):
                raise DomainError(
                    "slit %d endpoints have unequal imaginary parts (%g vs %g)"
                    % (k + 1, zl.imag, zr.imag)
                )
            if not zl.real < zr.real:
                raise DomainError("slit %d must have Re z_l < Re z_r" % (k + 1,))
        for j in range(len(slits)):
            for k in range(j + 1, len(slits)):
                if _segments_touch(slits[j], slits[k]):
                    raise DomainError("slits %d and %d are not disjoint" % (j + 1, k + 1))

    @property
    def genus(self) -> int:
        return len(self.slits)

    def contains(self, z: complex, tol: float = 0.0) -> bool:
        if z.imag <= tol:
            return False
        return self.slit_distance(z) > tol

    def slit_distance(self, z: complex) -> float:
        d = z.imag
        for zl, zr in self.slits:
            if zl.real <= z.real <= zr.real:
                d = min(d, abs(z.imag - zl.imag))
            else:
                d = min(d, abs(z - zl), abs(z - zr))
        return d


def _segments_touch(s1, s2) -> bool:
    (a1, b1), (a2, b2) = s1, s2
    if abs(a1.imag - a2.imag) > 1e-12:
        return False
    return not (b1.real < a2.real or b2.real < a1.real)


@dataclass(frozen=True)
class MobiusMap:
    """z -> (a z + b)/(c z + d), stored with ad - bc = 1."""

    a: complex
    b: complex
    c: complex
    d: complex

    def __post_init__(self):
        det = self.a * self.d - self.b * self.c
        scale = max(abs(self.a), abs(self.b), abs(self.c), abs(self.d), 1.0)
        if abs(det) <= 1e-14 * scale:
            raise DomainError("degenerate Mobius map, |ad-bc| = %g" % abs(det))
        if abs(det - 1.0) > 1e-12:
            s = 1.0 / cmath.sqrt(det)
            for name, v in (("a", self.a), ("b", self.b), ("c", self.c), ("d", self.d)):
                object.__setattr__(self, name, v * s)

    @staticmethod
    def _raw(a, b, c, d) -> "MobiusMap":
        # bypass the construction check; used for compositions of valid maps,
        # whose normalized coefficients may legitimately dwarf ad - bc = 1
        m = object.__new__(MobiusMap)
        object.__setattr__(m, "a", a)
        object.__setattr__(m, "b", b)
        object.__setattr__(m, "c", c)
        object.__setattr__(m, "d", d)
        return m

    def __call__(self, z):
        return (self.a * z + self.b) / (self.c * z + self.d)

    def deriv(self, z):
        return 1.0 / (self.c * z + self.d) ** 2

    def deriv2(self, z):
        return -2.0 * self.c / (self.c * z + self.d) ** 3

    def compose(self, other: "MobiusMap") -> "MobiusMap":
        return MobiusMap._raw(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )

    def inverse(self) -> "MobiusMap":
        return MobiusMap._raw(self.d, -self.b, -self.c, self.a)

    @staticmethod
    def identity() -> "MobiusMap":
        return MobiusMap._raw(1.0, 0.0, 0.0, 1.0)


@dataclass(frozen=True)
class SchottkyWord:
    """Reduced word in the Schottky generators; letters are (index 1..g, sign)."""

    letters: tuple[tuple[int, int], ...]

    def __post_init__(self):
        letters = tuple((int(j), int(s)) for j, s in self.letters)
        object.__setattr__(self, "letters", letters)
        if not letters:
            raise DomainError("Schottky word must be nonempty")
        for (j1, s1), (j2, s2) in zip(letters, letters[1:]):
            if j1 == j2 and s1 == -s2:
                raise DomainError("Schottky word is not reduced: %r" % (letters,))

    @property
    def level(self) -> int:
        return len(self.letters)

    def inverse(self) -> "SchottkyWord":
        return SchottkyWord(tuple((j, -s) for j, s in reversed(self.letters)))


def conjugation_map(domain: CircularDomain, j: int, zeta: complex) -> complex:
    """phi_j(zeta) = conj(delta_j) + r_j^2/(zeta - delta_j); fixes conj on C_j."""
    circ = domain.circle(j)
    dz = zeta - circ.center
    if dz == 0:
        raise ZeroDivisionError("conjugation_map pole at the circle center")
    return circ.center.conjugate() + circ.radius**2 / dz


def schottky_generator(domain: CircularDomain, j: int) -> MobiusMap:
    """theta_j(z) = delta_j + r_j^2 z / (1 - conj(delta_j) z)."""
    c = domain.inner_circles[j - 1]
    d, r2 = c.center, c.radius**2
    # (a z + b)/(c z + d) form: (( r2 - |d|^2? ) ... ) expand delta + r2 z/(1 - conj(d) z)
    return MobiusMap(r2 - d * d.conjugate(), d, -d.conjugate(), 1.0)


def _word_key(letters):
    # letters sort with positive sign before negative for the representative choice
    return tuple((j, 0 if s > 0 else 1) for j, s in letters)


def enumerate_schottky(
    domain: CircularDomain, max_level: int, convention: str = "positive"
) -> list[tuple[SchottkyWord, MobiusMap]]:
    """Schottky words up to the given length with their composed Mobius maps.

    convention="positive": all nonempty words in the positive generators only
    (one word per composition of theta_j's, no inverses).
    convention="paired": one representative of each inverse-pair {w, w^-1}
    over all reduced signed words; this is the complete product set for the
    prime function at genus >= 2 (each product factor is invariant under
    w -> w^-1). The two conventions coincide at genus <= 1.
    """
    if max_level < 1:
        raise ValueError("max_level must be >= 1")
    if convention not in ("positive", "paired"):
        raise ValueError("unknown convention %r" % (convention,))
    g = domain.genus
    if g == 0:
        return []
    gens = {(j, 1): schottky_generator(domain, j) for j in range(1, g + 1)}
    for j in range(1, g + 1):
        gens[(j, -1)] = gens[(j, 1)].inverse()

    out: list[tuple[SchottkyWord, MobiusMap]] = []
    if convention == "positive":
        frontier = [((), MobiusMap.identity())]
        for _ in range(max_level):
            nxt = []
            for letters, m in frontier:
                for j in range(1, g + 1):
                    letters2 = letters + ((j, 1),)
                    m2 = m.compose(gens[(j, 1)])
                    nxt.append((letters2, m2))
            frontier = nxt
            out.extend((SchottkyWord(l), m) for l, m in frontier)
        out.sort(key=lambda wm: (wm[0].level, _word_key(wm[0].letters)))
        return out

    # paired: breadth-first over reduced signed words, keep w iff key(w) <= key(w^-1)
    frontier = [((), MobiusMap.identity())]
    for _ in range(max_level):
        nxt = []
        for letters, m in frontier:
            for j in range(1, g + 1):
                for s in (1, -1):
                    if letters and letters[-1] == (j, -s):
                        continue
                    nxt.append((letters + ((j, s),), m.compose(gens[(j, s)])))
        frontier = nxt
        for letters, m in frontier:
            w = SchottkyWord(letters)
            if _word_key(letters) <= _word_key(w.inverse().letters):
                out.append((w, m))
    out.sort(key=lambda wm: (wm[0].level, _word_key(wm[0].letters)))
    return out


def separation_metric(domain: CircularDomain) -> float:
    """max_j r_j / dist(delta_j, other boundary); small values mean fast products."""
    worst = 0.0
    for j, c in enumerate(domain.inner_circles):
        d = 1.0 - abs(c.center)  # distance from center to the unit circle
        for k, other in enumerate(domain.inner_circles):
            if k != j:
                d = min(d, abs(c.center - other.center) - other.radius)
        worst = max(worst, c.radius / d)
    return worst


# ---------------------------------------------------------------------------
# JSON interchange


def domain_to_json(domain) -> str:
    if isinstance(domain, CircularDomain):
        return json.dumps(
            {
                "type": "circular",
                "circles": [
                    {"c": [c.center.real, c.center.imag], "r": c.radius}
                    for c in domain.inner_circles
                ],
            }
        )
    if isinstance(domain, ChordalStandardDomain):
        return json.dumps(
            {
                "type": "chordal",
                "slits": [
                    {"zl": [zl.real, zl.imag], "zr": [zr.real, zr.imag]}
                    for zl, zr in domain.slits
                ],
            }
        )
    raise TypeError("unsupported domain type %r" % type(domain).__name__)


def domain_from_json(text: str):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DomainError("invalid domain JSON: %s" % exc) from exc
    if not isinstance(data, dict) or "type" not in data:
        raise DomainError("domain JSON must be an object with a 'type' key")
    kind = data["type"]
    if kind == "circular":
        circles = []
        for entry in data.get("circles", ()):
            (cre, cim), r = entry["c"], entry["r"]
            circles.append(Circle(complex(cre, cim), float(r)))
        return CircularDomain(tuple(circles))
    if kind == "chordal":
        slits = []
        for entry in data.get("slits", ()):
            zl, zr = entry["zl"], entry["zr"]
            slits.append((complex(zl[0], zl[1]), complex(zr[0], zr[1])))
        return ChordalStandardDomain(tuple(slits))
    raise DomainError("unknown domain type %r" % (kind,))
