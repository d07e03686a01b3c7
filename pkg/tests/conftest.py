import pathlib

import pytest

from boxchor import choreo, semantics
from boxchor.semantics import StrandTemplate, instantiate, make_space, recv, send
from boxchor.skeleton import NodeId, Skeleton
from boxchor.terms import Role, Value, box, msg

DATA = pathlib.Path(__file__).parent / "data"

R1, R2, R3 = Role("r1"), Role("r2"), Role("r3")


@pytest.fixture(scope="session")
def bs_source():
    return (DATA / "buyer_seller.chor").read_text()


@pytest.fixture(scope="session")
def bs_spec(bs_source):
    return choreo.parse(bs_source)


@pytest.fixture(scope="session")
def bs_space(bs_spec):
    return semantics.compile_spec(bs_spec)


@pytest.fixture(scope="session")
def flawed_space():
    spec = choreo.parse((DATA / "buyer_seller_flawed.chor").read_text())
    return semantics.compile_spec(spec)


def _secret_box():
    return box(R1, R3, Value("secret"))


def _newsecret_box():
    return box(R3, R1, Value("newsecret"))


@pytest.fixture(scope="session")
def s15_space():
    """The two-values worked example: s1..s5 over roles r1..r3."""
    inner = _secret_box()
    nbox = _newsecret_box()
    reject = Value("reject")
    s1 = StrandTemplate("s1", R1, (send(msg(box(R1, R2, inner))),
                                   recv(msg(box(R2, R1, reject)))))
    s2 = StrandTemplate("s2", R1, (send(msg(box(R1, R2, inner))),
                                   recv(msg(box(R2, R1, nbox)))))
    s3 = StrandTemplate("s3", R2, (recv(msg(box(R1, R2, inner))),
                                   send(msg(box(R2, R1, reject)))))
    s4 = StrandTemplate("s4", R2, (recv(msg(box(R1, R2, inner))),
                                   send(msg(box(R2, R3, inner))),
                                   recv(msg(box(R3, R2, nbox))),
                                   send(msg(box(R2, R1, nbox)))))
    s5 = StrandTemplate("s5", R3, (recv(msg(box(R2, R3, inner))),
                                   send(msg(box(R3, R2, nbox)))))
    return make_space([s1, s2, s3, s4, s5])


@pytest.fixture(scope="session")
def primed_space():
    """Same shape with a single nested box b travelling everywhere."""
    b = _secret_box()
    s2p = StrandTemplate("s2p", R1, (send(msg(box(R1, R2, b))),
                                     recv(msg(box(R2, R1, b)))))
    s4p = StrandTemplate("s4p", R2, (recv(msg(box(R1, R2, b))),
                                     send(msg(box(R2, R3, b))),
                                     recv(msg(box(R3, R2, b))),
                                     send(msg(box(R2, R1, b)))))
    s5p = StrandTemplate("s5p", R3, (recv(msg(box(R2, R3, b))),
                                     send(msg(box(R3, R2, b)))))
    return make_space([s2p, s4p, s5p])


def _single(template):
    return instantiate(template, {}, 0)


@pytest.fixture(scope="session")
def sk1():
    """Three-strand realized skeleton: forward a nested secret, reply."""
    m, w = Value("m"), Value("w")
    fwd = box(R1, R3, m)
    t1 = StrandTemplate("t1", R1, (send(msg(fwd)), recv(msg(box(R3, R1, w)))))
    t2 = StrandTemplate("t2", R2, (recv(msg(fwd)), send(msg(box(R2, R3, w, fwd)))))
    t3 = StrandTemplate("t3", R3, (recv(msg(box(R2, R3, w, fwd))),
                                   send(msg(box(R3, R1, w)))))
    i1, i2, i3 = _single(t1), _single(t2), _single(t3)
    nodes = [NodeId(i1, 1), NodeId(i1, 2), NodeId(i2, 1), NodeId(i2, 2),
             NodeId(i3, 1), NodeId(i3, 2)]
    cross = [(NodeId(i1, 1), NodeId(i2, 1)),
             (NodeId(i2, 2), NodeId(i3, 1)),
             (NodeId(i3, 2), NodeId(i1, 2))]
    a = Skeleton(nodes, cross)
    return a, (i1, i2, i3), make_space([t1, t2, t3])


@pytest.fixture(scope="session")
def sk2():
    """Realized but not delivery-guaranteed: a dangling boxed transmission."""
    m, v = Value("m"), Value("v")
    fwd = box(R1, R3, m)
    wrap = box(R3, R1, box(R3, R1, m))
    u1 = StrandTemplate("u1", R1, (send(msg(fwd)), recv(msg(wrap))))
    u2 = StrandTemplate("u2", R3, (recv(msg(fwd)), send(msg(wrap))))
    u3 = StrandTemplate("u3", R2, (send(msg(box(R2, R3, v))),))
    i1, i2, i3 = _single(u1), _single(u2), _single(u3)
    nodes = [NodeId(i1, 1), NodeId(i1, 2), NodeId(i2, 1), NodeId(i2, 2),
             NodeId(i3, 1)]
    cross = [(NodeId(i1, 1), NodeId(i2, 1)),
             (NodeId(i2, 2), NodeId(i1, 2))]
    return Skeleton(nodes, cross), (i1, i2, i3)


@pytest.fixture(scope="session")
def sk3():
    """The four-strand cut example: a twice-wrapped secret with an
    unordered late reception."""
    m, w = Value("m"), Value("w")
    inner = box(R1, R3, m)
    w1 = StrandTemplate("w1", R1, (send(msg(box(R1, R2, inner))),))
    w2 = StrandTemplate("w2", R2, (recv(msg(box(R1, R2, inner))),
                                   send(msg(box(R2, R3, w, inner)))))
    w3 = StrandTemplate("w3", R3, (recv(msg(box(R2, R3, w, inner))),
                                   send(msg(box(R3, R2, inner)))))
    w4 = StrandTemplate("w4", R2, (recv(msg(box(R2, R1, inner))),))
    i1, i2, i3, i4 = _single(w1), _single(w2), _single(w3), _single(w4)
    n1 = NodeId(i1, 1)
    n2, n3 = NodeId(i2, 1), NodeId(i2, 2)
    n4, n5 = NodeId(i3, 1), NodeId(i3, 2)
    n6 = NodeId(i4, 1)
    a = Skeleton([n1, n2, n3, n4, n5, n6],
                 [(n1, n2), (n3, n4)])
    return a, (n1, n2, n3, n4, n5, n6)
