import math

import numpy as np
import pytest

from mcdcft.domains import (
    Circle,
    CircularDomain,
    ChordalStandardDomain,
    DomainError,
    MobiusMap,
    conjugation_map,
    domain_from_json,
    domain_to_json,
    enumerate_schottky,
    separation_metric,
)


def test_conjugation_map_unit_circle():
    dom = CircularDomain(())
    assert conjugation_map(dom, 0, 0.5) == pytest.approx(2.0)


def test_conjugation_map_fixes_boundary_conjugate():
    dom = CircularDomain((Circle(0.3j, 0.1),))
    zeta = 0.3j + 0.1
    assert conjugation_map(dom, 1, zeta) == pytest.approx(zeta.conjugate())
    # all around the circle
    for t in np.linspace(0, 2 * math.pi, 17):
        z = 0.3j + 0.1 * np.exp(1j * t)
        assert abs(conjugation_map(dom, 1, complex(z)) - np.conj(z)) < 1e-12


def test_conjugation_map_direct_formula():
    dom = CircularDomain((Circle(0.3j, 0.1),))
    expected = -0.3j + 0.01 / (0.5 - 0.3j)
    assert conjugation_map(dom, 1, 0.5) == pytest.approx(expected)


def test_conjugation_map_pole():
    dom = CircularDomain((Circle(0.3j, 0.1),))
    with pytest.raises(ZeroDivisionError):
        conjugation_map(dom, 1, 0.3j)


def test_enumerate_counts():
    assert enumerate_schottky(CircularDomain(()), 3) == []
    ann = CircularDomain((Circle(0j, 0.3),))
    assert len(enumerate_schottky(ann, 2)) == 2
    g2 = CircularDomain((Circle(-0.45, 0.12), Circle(0.45, 0.12)))
    assert len(enumerate_schottky(g2, 2, "positive")) == 6


def brute_positive_count(g, L):
    # number of nonempty words over g positive letters, length <= L
    return sum(g**k for k in range(1, L + 1))


@pytest.mark.parametrize("g,L", [(1, 4), (2, 4), (3, 3)])
def test_positive_counts_brute_force(g, L):
    circles = tuple(Circle(0.6 * np.exp(2j * math.pi * k / g), 0.08) for k in range(g))
    dom = CircularDomain(circles)
    assert len(enumerate_schottky(dom, L, "positive")) == brute_positive_count(g, L)


def test_group_law():
    dom = CircularDomain((Circle(-0.45, 0.12), Circle(0.45, 0.12)))
    words = {w.letters: m for w, m in enumerate_schottky(dom, 3, "paired")}
    rng = np.random.default_rng(0)
    for (l1, m1) in list(words.items())[:8]:
        for (l2, m2) in list(words.items())[:8]:
            letters = list(l1)
            for l in l2:
                if letters and letters[-1] == (l[0], -l[1]):
                    letters.pop()
                else:
                    letters.append(l)
            key = tuple(letters)
            if key in words:
                m12 = m1.compose(m2)
                for _ in range(10):
                    z = complex(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5))
                    assert abs(m12(z) - words[key](z)) < 1e-12


def test_separation_metric():
    assert separation_metric(CircularDomain(())) == 0.0
    assert separation_metric(CircularDomain((Circle(0j, 0.3),))) == pytest.approx(0.3)
    two = CircularDomain((Circle(-0.4, 0.1), Circle(0.4, 0.15)))
    # brute force: r_j / min(dist to unit circle, dist to other circle)
    d1 = min(1 - 0.4, 0.8 - 0.15)
    d2 = min(1 - 0.4, 0.8 - 0.1)
    assert separation_metric(two) == pytest.approx(max(0.1 / d1, 0.15 / d2))


def test_domain_invariants():
    with pytest.raises(DomainError):
        Circle(0j, -1.0)
    with pytest.raises(DomainError):
        CircularDomain((Circle(0.9, 0.2),))  # sticks out of the disk
    with pytest.raises(DomainError):
        CircularDomain((Circle(-0.1, 0.2), Circle(0.1, 0.2)))  # overlap
    with pytest.raises(DomainError):
        ChordalStandardDomain(((1j, 1 + 1.5j),))  # unequal heights
    with pytest.raises(DomainError):
        ChordalStandardDomain(((1 + 1j, 1j),))  # reversed
    with pytest.raises(DomainError):
        ChordalStandardDomain(((-1 + 1j, 1j), (-0.5 + 1j, 2 + 1j)))  # overlap


def test_mobius_degenerate():
    with pytest.raises(DomainError):
        MobiusMap(1.0, 2.0, 2.0, 4.0)


def test_json_roundtrip():
    dom = CircularDomain((Circle(0.2 + 0.1j, 0.15),))
    again = domain_from_json(domain_to_json(dom))
    assert again.inner_circles[0].center == pytest.approx(0.2 + 0.1j)
    ch = ChordalStandardDomain(((-1 + 0.5j, 1 + 0.5j),))
    again = domain_from_json(domain_to_json(ch))
    assert again.slits[0][1] == pytest.approx(1 + 0.5j)
    with pytest.raises(DomainError):
        domain_from_json('{"type":"circular","circles":[{"c":[0.95,0],"r":0.2}]}')
    with pytest.raises(DomainError):
        domain_from_json("not json")
