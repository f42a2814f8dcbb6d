"""Metamodel, identifier encoding, and canonical serialization tests."""
import base64
import hashlib
import json
import unicodedata

import pytest
from hypothesis import given
from hypothesis import strategies as st

from aasfed.errors import InvalidEntity, MalformedEncoding, TypeMismatch
from aasfed.model import (Collection, FileAttachment, Property, Shell,
                          Submodel, canonical_json, canonicalize,
                          content_digest, content_digest_hex,
                          decode_id_from_path, encode_id_for_path,
                          entity_from_dict, find_element, parse_value,
                          replace_element, shell_from_dict,
                          submodel_from_dict, validate_identifier)

from conftest import identifiers, shells, submodels


class TestIdentifiers:
    def test_accepts_urn(self):
        assert validate_identifier("urn:org-o:sm:engineering") == "urn:org-o:sm:engineering"

    @pytest.mark.parametrize("bad", ["", "has space", "tab\there", "nl\n", "x" * 2049])
    def test_rejects_bad(self, bad):
        with pytest.raises(InvalidEntity):
            validate_identifier(bad)

    def test_max_length_boundary(self):
        assert validate_identifier("x" * 2048)

    def test_encode_frozen_example(self):
        # independent oracle: stdlib base64, padding stripped
        assert encode_id_for_path("urn:a") == "dXJuOmE"
        assert encode_id_for_path("urn:a") == \
            base64.urlsafe_b64encode(b"urn:a").decode().rstrip("=")

    def test_encode_is_unpadded(self):
        for ident in ("urn:a", "urn:ab", "urn:abc", "urn:abcd"):
            assert "=" not in encode_id_for_path(ident)

    @given(identifiers())
    def test_roundtrip(self, ident):
        assert decode_id_from_path(encode_id_for_path(ident)) == ident

    @pytest.mark.parametrize("bad", ["", "!!!", "aGFzIHNwYWNl"])  # last is 'has space'
    def test_decode_rejects(self, bad):
        with pytest.raises(MalformedEncoding):
            decode_id_from_path(bad)


class TestCanonicalJson:
    def test_sorted_compact(self):
        assert canonical_json({"b": 1, "a": [1, 2]}) == b'{"a":[1,2],"b":1}'

    def test_nfc_normalization(self):
        decomposed = "é"  # e + combining acute
        composed = unicodedata.normalize("NFC", decomposed)
        assert canonical_json({"k": decomposed}) == canonical_json({"k": composed})

    def test_float_shortest_roundtrip(self):
        out = canonical_json({"v": 21.5})
        assert out == b'{"v":21.5}'
        assert json.loads(out)["v"] == 21.5

    def test_non_ascii_not_escaped(self):
        assert canonical_json({"k": "ü"}) == '{"k":"ü"}'.encode("utf-8")

    @given(shells())
    def test_canonical_is_deterministic(self, shell):
        assert canonicalize(shell) == canonicalize(shell)

    @given(submodels())
    def test_submodel_roundtrip_preserves_digest(self, sm):
        again = submodel_from_dict(json.loads(canonicalize(sm)))
        assert content_digest(again) == content_digest(sm)
        assert again == sm

    @given(shells())
    def test_shell_roundtrip_preserves_digest(self, shell):
        again = shell_from_dict(json.loads(canonicalize(shell)))
        assert content_digest(again) == content_digest(shell)

    def test_digest_is_sha256_of_canonical(self):
        sm = Submodel(id="urn:s", id_short="S")
        expected = hashlib.sha256(canonicalize(sm)).hexdigest()
        assert content_digest_hex(sm) == expected
        assert len(content_digest(sm)) == 32

    def test_digest_changes_with_content(self):
        a = Submodel(id="urn:s", id_short="S",
                     elements=(Property("p", "integer", 1),))
        b = Submodel(id="urn:s", id_short="S",
                     elements=(Property("p", "integer", 2),))
        assert content_digest(a) != content_digest(b)


class TestParseValue:
    @pytest.mark.parametrize("vt,raw,want", [
        ("string", "x", "x"),
        ("integer", "42", 42),
        ("integer", 42, 42),
        ("double", "21.5", 21.5),
        ("double", 3, 3.0),
        ("boolean", "true", True),
        ("boolean", False, False),
    ])
    def test_ok(self, vt, raw, want):
        assert parse_value(vt, raw) == want

    @pytest.mark.parametrize("vt,raw", [
        ("string", 1), ("integer", "x"), ("integer", True), ("integer", 1.5),
        ("double", "x"), ("double", True), ("boolean", "yes"), ("boolean", 1),
        ("decimal", "1"),
    ])
    def test_mismatch(self, vt, raw):
        with pytest.raises(TypeMismatch):
            parse_value(vt, raw)


class TestValidation:
    def test_duplicate_submodel_refs_rejected(self):
        with pytest.raises(InvalidEntity):
            Shell(id="urn:a", asset_id="urn:x", id_short="A",
                  submodel_refs=("urn:s", "urn:s")).validate()

    def test_duplicate_sibling_id_shorts_rejected(self):
        with pytest.raises(InvalidEntity):
            Submodel(id="urn:s", id_short="S",
                     elements=(Property("p", "integer", 1),
                               Property("p", "integer", 2))).validate()

    def test_collection_depth_limit(self):
        el = Property("leaf", "integer", 1)
        for _ in range(17):
            el = Collection(id_short="c", children=(el,))
        with pytest.raises(InvalidEntity):
            Submodel(id="urn:s", id_short="S", elements=(el,)).validate()

    def test_collection_depth_at_limit_ok(self):
        el = Property("leaf", "integer", 1)
        for _ in range(16):
            el = Collection(id_short="c", children=(el,))
        Submodel(id="urn:s", id_short="S", elements=(el,)).validate()

    def test_bad_attachment_digest(self):
        with pytest.raises(InvalidEntity):
            FileAttachment("f", "text/plain", "zz", 1).validate()

    def test_version_must_be_positive(self):
        with pytest.raises(InvalidEntity):
            Shell(id="urn:a", asset_id="urn:x", id_short="A", version=0).validate()

    def test_entity_from_dict_unknown_kind(self):
        with pytest.raises(InvalidEntity):
            entity_from_dict("widget", {})


class TestElementPaths:
    sm = Submodel(id="urn:s", id_short="S", elements=(
        Property("top", "integer", 1),
        Collection("grp", children=(
            Property("inner", "string", "v"),
            Collection("deep", children=(Property("leaf", "boolean", True),)),
        )),
    ))

    def test_find_top(self):
        assert find_element(self.sm, "top").value == 1

    def test_find_nested(self):
        assert find_element(self.sm, "grp.deep.leaf").value is True

    @pytest.mark.parametrize("path", ["missing", "grp.missing", "top.inner", ""])
    def test_find_miss(self, path):
        with pytest.raises(KeyError):
            find_element(self.sm, path)

    def test_replace_nested(self):
        out = replace_element(self.sm, "grp.inner", Property("inner", "string", "w"))
        assert find_element(out, "grp.inner").value == "w"
        # original untouched
        assert find_element(self.sm, "grp.inner").value == "v"

    def test_replace_miss(self):
        with pytest.raises(KeyError):
            replace_element(self.sm, "grp.nope", Property("nope", "string", ""))
