"""Clients for predictors that live outside the process.

Two transports speak the same JSON protocol: newline-delimited messages
over a subprocess's stdio, or HTTP POSTs to a /predict endpoint. The
first exchange is a handshake that reports the label set:

    -> {"handshake": true}
    <- {"classes": ["0", "1"]}

after which each request carries an id echoed back by the response:

    -> {"id": 7, "instances": [[115.0, "a"], [86.0, "b"]]}
    <- {"id": 7, "labels": ["1", "0"]}

Batches larger than MAX_BATCH are chunked transparently. Any protocol
violation (timeout, disconnect, malformed reply, id mismatch) raises
PredictorProtocolError.
"""

from __future__ import annotations

import json
import queue
import subprocess
import threading

import httpx

from .errors import PredictorProtocolError
from .predictors import Predictor

DEFAULT_TIMEOUT_S = 30.0
MAX_BATCH = 1024

_EOF = object()


class _StdioTransport:
    """One JSON message per line over a child process's stdin/stdout."""

    def __init__(self, command, timeout_s: float = DEFAULT_TIMEOUT_S):
        self.command = list(command)
        self.timeout_s = timeout_s
        try:
            self.proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise PredictorProtocolError(f"could not start predictor process: {exc}") from exc
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self) -> None:
        try:
            for line in self.proc.stdout:
                self._lines.put(line)
        finally:
            self._lines.put(_EOF)

    def request(self, message: dict) -> dict:
        try:
            self.proc.stdin.write(json.dumps(message) + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise PredictorProtocolError("predictor process closed its input") from exc
        try:
            line = self._lines.get(timeout=self.timeout_s)
        except queue.Empty:
            raise PredictorProtocolError(
                f"predictor did not answer within {self.timeout_s:.0f}s"
            ) from None
        if line is _EOF:
            raise PredictorProtocolError("predictor process ended mid-conversation")
        try:
            return json.loads(line)
        except json.JSONDecodeError as exc:
            raise PredictorProtocolError(f"unparseable reply: {line!r}") from exc

    def close(self) -> None:
        if self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()


class _HttpTransport:
    """POSTs each message to <base-url>/predict."""

    def __init__(self, url: str, timeout_s: float = DEFAULT_TIMEOUT_S):
        self.url = url.rstrip("/") + "/predict"
        self.client = httpx.Client(timeout=timeout_s)

    def request(self, message: dict) -> dict:
        try:
            response = self.client.post(self.url, json=message)
        except httpx.TimeoutException as exc:
            raise PredictorProtocolError(f"predictor timed out: {exc}") from exc
        except httpx.HTTPError as exc:
            raise PredictorProtocolError(f"predictor unreachable: {exc}") from exc
        if response.status_code != 200:
            raise PredictorProtocolError(
                f"predictor answered HTTP {response.status_code}"
            )
        try:
            return response.json()
        except json.JSONDecodeError as exc:
            raise PredictorProtocolError("predictor reply is not JSON") from exc

    def close(self) -> None:
        self.client.close()


class ExternalPredictor(Predictor):
    """Predictor backed by a remote process or service."""

    def __init__(self, transport, classes):
        self._transport = transport
        self.classes = tuple(str(c) for c in classes)
        self.deterministic = True
        self._next_id = 0

    def predict_batch(self, instances) -> list:
        instances = list(instances)
        labels: list = []
        for start in range(0, len(instances), MAX_BATCH):
            chunk = instances[start:start + MAX_BATCH]
            labels.extend(self._predict_chunk(chunk))
        return labels

    def _predict_chunk(self, chunk) -> list:
        request_id = self._next_id
        self._next_id += 1
        reply = self._transport.request(
            {"id": request_id, "instances": [list(inst) for inst in chunk]}
        )
        if reply.get("id") != request_id:
            raise PredictorProtocolError(
                f"reply id {reply.get('id')!r} does not match request id {request_id}"
            )
        labels = reply.get("labels")
        if not isinstance(labels, list) or len(labels) != len(chunk):
            raise PredictorProtocolError(
                f"expected {len(chunk)} labels, got {labels!r}"
            )
        labels = [str(lab) for lab in labels]
        unknown = set(labels) - set(self.classes)
        if unknown:
            raise PredictorProtocolError(
                f"labels {sorted(unknown)} not in the handshake class list"
            )
        return labels

    def close(self) -> None:
        self._transport.close()

    def __enter__(self) -> "ExternalPredictor":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def connect_external(endpoint, timeout_s: float = DEFAULT_TIMEOUT_S) -> ExternalPredictor:
    """Open a connection and perform the handshake.

    `endpoint` is either an http(s) URL or a command argv list for a
    subprocess predictor.
    """
    if isinstance(endpoint, str) and endpoint.startswith(("http://", "https://")):
        transport = _HttpTransport(endpoint, timeout_s)
    elif isinstance(endpoint, (list, tuple)) and endpoint:
        transport = _StdioTransport(endpoint, timeout_s)
    else:
        raise PredictorProtocolError(
            f"endpoint must be an http(s) URL or a command list, got {endpoint!r}"
        )
    try:
        reply = transport.request({"handshake": True})
    except PredictorProtocolError:
        transport.close()
        raise
    classes = reply.get("classes")
    if not isinstance(classes, list) or len(classes) < 2:
        transport.close()
        raise PredictorProtocolError(
            f"handshake must list at least two classes, got {classes!r}"
        )
    return ExternalPredictor(transport, classes)
