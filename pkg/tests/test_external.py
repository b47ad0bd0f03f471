"""External predictor protocol: stdio and HTTP transports."""

import json
import pathlib
import sys

import httpx
import pytest

import cfaudit.external as external
from cfaudit import PredictorProtocolError, connect_external

STUB = str(pathlib.Path(__file__).parent / "stub_predictor.py")


def stub_cmd(mode: str = "ok"):
    return [sys.executable, STUB, "--mode", mode]


def test_stdio_handshake_and_predictions():
    with connect_external(stub_cmd()) as predictor:
        assert predictor.classes == ("0", "1")
        labels = predictor.predict_batch([(150.0, 1.0), (90.0, 2.0), (121.0, 3.0)])
        assert labels == ["1", "0", "1"]


def test_stdio_chunks_large_batches(monkeypatch):
    monkeypatch.setattr(external, "MAX_BATCH", 3)
    with connect_external(stub_cmd()) as predictor:
        instances = [(float(v), 0.0) for v in range(100, 180, 10)]
        labels = predictor.predict_batch(instances)
        assert len(labels) == 8
        assert labels == ["1" if v > 120 else "0" for v, _ in instances]


def test_stdio_timeout():
    with connect_external(stub_cmd("silent"), timeout_s=0.5) as predictor:
        with pytest.raises(PredictorProtocolError, match="did not answer"):
            predictor.predict_batch([(100.0, 0.0)])


def test_stdio_id_mismatch():
    with connect_external(stub_cmd("wrong-id")) as predictor:
        with pytest.raises(PredictorProtocolError, match="does not match"):
            predictor.predict_batch([(100.0, 0.0)])


def test_stdio_disconnect_mid_conversation():
    with connect_external(stub_cmd("die-after-handshake")) as predictor:
        with pytest.raises(PredictorProtocolError, match="ended mid-conversation"):
            predictor.predict_batch([(100.0, 0.0)])


def test_stdio_unparseable_reply():
    with connect_external(stub_cmd("bad-json")) as predictor:
        with pytest.raises(PredictorProtocolError, match="unparseable"):
            predictor.predict_batch([(100.0, 0.0)])


def test_handshake_requires_two_classes():
    with pytest.raises(PredictorProtocolError, match="at least two classes"):
        connect_external(stub_cmd("no-classes"))


def test_labels_outside_handshake_set_are_rejected():
    with connect_external(stub_cmd("alien-label")) as predictor:
        with pytest.raises(PredictorProtocolError, match="not in the handshake"):
            predictor.predict_batch([(100.0, 0.0)])


def test_endpoint_descriptor_validation():
    with pytest.raises(PredictorProtocolError, match="endpoint must be"):
        connect_external(42)
    with pytest.raises(PredictorProtocolError):
        connect_external("")
    with pytest.raises(PredictorProtocolError):
        connect_external([])


def test_unstartable_command():
    with pytest.raises(PredictorProtocolError, match="could not start"):
        connect_external(["/nonexistent/predictor-binary"])


def _mock_http_predictor(handler):
    """connect_external against an in-memory HTTP predictor."""
    transport = external._HttpTransport("http://predictor.test")
    transport.client = httpx.Client(
        transport=httpx.MockTransport(handler), timeout=1.0
    )
    reply = transport.request({"handshake": True})
    return external.ExternalPredictor(transport, reply["classes"])


def test_http_round_trip():
    def handler(request: httpx.Request) -> httpx.Response:
        assert request.url.path == "/predict"
        msg = json.loads(request.content)
        if msg.get("handshake"):
            return httpx.Response(200, json={"classes": ["0", "1"]})
        labels = ["1" if inst[0] > 120.0 else "0" for inst in msg["instances"]]
        return httpx.Response(200, json={"id": msg["id"], "labels": labels})

    predictor = _mock_http_predictor(handler)
    assert predictor.classes == ("0", "1")
    assert predictor.predict_batch([(130.0,), (10.0,)]) == ["1", "0"]


def test_http_non_200_is_protocol_error():
    def handler(request: httpx.Request) -> httpx.Response:
        msg = json.loads(request.content)
        if msg.get("handshake"):
            return httpx.Response(200, json={"classes": ["0", "1"]})
        return httpx.Response(500, json={"boom": True})

    predictor = _mock_http_predictor(handler)
    with pytest.raises(PredictorProtocolError, match="HTTP 500"):
        predictor.predict_batch([(1.0,)])


def test_http_unreachable_host():
    with pytest.raises(PredictorProtocolError, match="unreachable|timed out"):
        connect_external("http://127.0.0.1:1", timeout_s=0.5)
