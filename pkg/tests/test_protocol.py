import pytest

from spatialeval.detection import PerturbationSpec
from spatialeval.errors import ProtocolError
from spatialeval.protocol import (
    Handshake,
    Request,
    Response,
    parse_handshake,
    parse_request,
    parse_response,
)

HANDSHAKE = '{"hello": {"detector_id": "det-x", "score_floor": 0.25}}'
REQUEST = ('{"image": "/tmp/a.png", "labels": ["cat", "dog"], '
           '"perturbation": {"kind": "blur", "param": 1.0}, '
           '"request_id": "r000001"}')
RESPONSE = ('{"request_id": "r000001", "width": 512, "height": 384, '
            '"detections": [{"label": "cat", "score": 0.9, '
            '"box": [1.0, 2.0, 3.5, 4.5]}]}')
ERROR = '{"request_id": "r000002", "error": "cuda out of memory"}'


@pytest.mark.parametrize("line,parser", [
    (HANDSHAKE, parse_handshake),
    (REQUEST, parse_request),
    (RESPONSE, parse_response),
    (ERROR, parse_response),
])
def test_serialize_parse_is_identity(line, parser):
    assert parser(line).serialize() == line


def test_request_without_perturbation_round_trips():
    req = Request(image="x.png", labels=("cat",), perturbation=None,
                  request_id="r1")
    line = req.serialize()
    assert '"perturbation": null' in line
    assert parse_request(line) == req


def test_handshake_values():
    h = parse_handshake(HANDSHAKE)
    assert h == Handshake("det-x", 0.25)


def test_handshake_error_raises():
    with pytest.raises(ProtocolError, match="refused"):
        parse_handshake('{"hello": {"error": "unknown detector id"}}')


@pytest.mark.parametrize("line", [
    "not json",
    "[1, 2]",
    '{"hi": {}}',
    '{"hello": {"detector_id": "x"}}',
])
def test_bad_handshakes(line):
    with pytest.raises(ProtocolError):
        parse_handshake(line)


def test_parse_error_carries_line_number():
    with pytest.raises(ProtocolError) as info:
        parse_request("{broken", line_number=17)
    assert "line 17" in str(info.value)


@pytest.mark.parametrize("line", [
    '{"width": 5, "height": 5, "detections": []}',       # no request_id
    '{"request_id": "r1", "width": "wide", "height": 5, "detections": []}',
    '{"request_id": "r1", "width": true, "height": 5, "detections": []}',
    '{"request_id": "r1", "height": 5, "detections": []}',
])
def test_bad_responses(line):
    with pytest.raises(ProtocolError):
        parse_response(line)


def test_error_response_shape():
    resp = parse_response(ERROR)
    assert resp.error == "cuda out of memory"
    assert resp.detections == ()


def test_response_preserves_number_types():
    # ints stay ints so third-party transcripts survive a parse/serialize pass
    assert '"width": 512' in parse_response(RESPONSE).serialize()
    float_line = RESPONSE.replace('"width": 512', '"width": 512.0')
    assert '"width": 512.0' in parse_response(float_line).serialize()


def test_request_labels_coerced_to_strings():
    req = parse_request('{"image": "i", "labels": ["cat"], '
                        '"perturbation": null, "request_id": "r9"}')
    assert req.labels == ("cat",)
    assert req.perturbation is None


def test_perturbation_spec_on_wire():
    req = parse_request(REQUEST)
    assert req.perturbation == PerturbationSpec("blur", 1.0)


def test_response_serialize_canonical_box_order():
    resp = Response(request_id="r1", width=10, height=10,
                    detections=({"box": [0, 0, 1, 1], "score": 0.5,
                                 "label": "cat"},))
    assert ('"detections": [{"label": "cat", "score": 0.5, '
            '"box": [0, 0, 1, 1]}]') in resp.serialize()
