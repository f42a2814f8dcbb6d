import string

import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from aasfed.model import (Collection, FileAttachment, Property, Shell,
                          Submodel)

settings.register_profile(
    "suite", max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
    deadline=None)
settings.load_profile("suite")

_ID_CHARS = string.ascii_letters + string.digits + ":-._"
_SHORT_CHARS = string.ascii_letters + string.digits + "_-"


def identifiers():
    return st.text(alphabet=_ID_CHARS, min_size=1, max_size=40).map(
        lambda s: "urn:" + s)


def id_shorts():
    return st.text(alphabet=_SHORT_CHARS, min_size=1, max_size=12)


def properties():
    typed = st.one_of(
        st.tuples(st.just("string"), st.text(max_size=20)),
        st.tuples(st.just("integer"), st.integers(-10**6, 10**6)),
        st.tuples(st.just("double"),
                  st.floats(allow_nan=False, allow_infinity=False, width=32)),
        st.tuples(st.just("boolean"), st.booleans()),
    )
    return st.builds(
        lambda id_short, tv: Property(id_short=id_short, value_type=tv[0], value=tv[1]),
        id_shorts(), typed)


def file_attachments():
    return st.builds(
        lambda id_short, digest, length: FileAttachment(
            id_short=id_short, content_type="application/octet-stream",
            digest=digest, length=length),
        id_shorts(),
        st.text(alphabet="0123456789abcdef", min_size=64, max_size=64),
        st.integers(0, 10**6))


def elements(max_depth: int = 3):
    base = st.one_of(properties(), file_attachments())
    if max_depth <= 1:
        return base
    return st.one_of(
        base,
        st.builds(
            lambda id_short, children: Collection(
                id_short=id_short, children=_dedupe(children)),
            id_shorts(),
            st.lists(elements(max_depth - 1), max_size=3)))


def _dedupe(els):
    seen = set()
    out = []
    for el in els:
        if el.id_short not in seen:
            seen.add(el.id_short)
            out.append(el)
    return tuple(out)


def submodels():
    return st.builds(
        lambda sid, id_short, els: Submodel(id=sid, id_short=id_short,
                                            elements=_dedupe(els)),
        identifiers(), id_shorts(), st.lists(elements(), max_size=4))


def shells():
    return st.builds(
        lambda sid, asset, id_short, refs, version: Shell(
            id=sid, asset_id=asset, id_short=id_short,
            submodel_refs=tuple(dict.fromkeys(refs)), version=version),
        identifiers(), identifiers(), id_shorts(),
        st.lists(identifiers(), max_size=4), st.integers(1, 50))


@pytest.fixture
def bus():
    from aasfed.bus import EventBus
    return EventBus(backoff_base_s=0.0)


@pytest.fixture
def repo(bus):
    from aasfed.repository import Repository
    return Repository("org-o", bus=bus)
