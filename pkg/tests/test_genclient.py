import base64
import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from earthdial.errors import (
    HttpError,
    InvalidRange,
    MalformedResponse,
    ScriptExhausted,
    TransportError,
)
from earthdial.genclient import (
    GeneratorRequest,
    HttpGeneratorClient,
    MockGeneratorClient,
)


def _chat_body(text):
    return json.dumps(
        {"choices": [{"message": {"role": "assistant", "content": text}}]}
    ).encode()


class _Handler(BaseHTTPRequestHandler):
    def do_POST(self):
        srv = self.server
        length = int(self.headers.get("Content-Length", 0))
        payload = json.loads(self.rfile.read(length)) if length else None
        with srv.lock:
            srv.requests.append((self.path, payload))
            srv.in_flight += 1
            srv.max_in_flight = max(srv.max_in_flight, srv.in_flight)
            step = srv.script[min(len(srv.requests) - 1, len(srv.script) - 1)]
        if srv.delay_s:
            time.sleep(srv.delay_s)
        status, body = step
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)
        with srv.lock:
            srv.in_flight -= 1

    def log_message(self, *args):
        pass


class _ScriptedServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, script):
        super().__init__(("127.0.0.1", 0), _Handler)
        self.script = script
        self.requests = []
        self.lock = threading.Lock()
        self.in_flight = 0
        self.max_in_flight = 0
        self.delay_s = 0.0


@pytest.fixture
def server():
    srv = _ScriptedServer([(200, _chat_body("ok"))])
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    try:
        yield srv
    finally:
        srv.shutdown()
        srv.server_close()


def _client(srv, **kw):
    kw.setdefault("sleep", lambda s: None)
    return HttpGeneratorClient(f"http://127.0.0.1:{srv.server_address[1]}", **kw)


def test_success_and_request_shape(server, tmp_path):
    img = tmp_path / "tile.png"
    img.write_bytes(b"not really a png")
    server.script[:] = [(200, _chat_body("Question: Q? Answer: A."))]
    client = _client(server, model="gen-x", max_tokens=99)
    assert client.generate("describe this", [str(img)]) == "Question: Q? Answer: A."
    path, payload = server.requests[0]
    assert path == "/v1/chat/completions"
    assert payload["model"] == "gen-x"
    assert payload["max_tokens"] == 99
    (message,) = payload["messages"]
    assert message["role"] == "user"
    text_block, image_block = message["content"]
    assert text_block == {"type": "text", "text": "describe this"}
    url = image_block["image_url"]["url"]
    prefix = "data:image/png;base64,"
    assert url.startswith(prefix)
    assert base64.b64decode(url[len(prefix):]) == b"not really a png"


def test_url_and_none_transports(server):
    client = _client(server, image_transport="url")
    client.generate("p", ["https://imgs/x.png"])
    _, payload = server.requests[-1]
    blocks = payload["messages"][0]["content"]
    assert blocks[1]["image_url"]["url"] == "https://imgs/x.png"

    client = _client(server, image_transport="none")
    client.generate("p", ["https://imgs/x.png"])
    _, payload = server.requests[-1]
    assert payload["messages"][0]["content"] == [{"type": "text", "text": "p"}]


def test_retries_5xx_with_backoff_schedule(server):
    server.script[:] = [(500, b"boom"), (503, b"busy"), (200, _chat_body("fine"))]
    sleeps = []
    client = _client(server, sleep=sleeps.append, transport_attempts=3)
    resp = client.complete(GeneratorRequest(prompt="p"))
    assert resp.text == "fine"
    assert resp.transport_retries == 2
    assert sleeps == [0.5, 1.0]
    assert len(server.requests) == 3


def test_transport_exhaustion(server):
    server.script[:] = [(500, b"boom")]
    sleeps = []
    client = _client(server, sleep=sleeps.append, transport_attempts=3)
    with pytest.raises(TransportError) as err:
        client.generate("p")
    assert "HTTP 500" in str(err.value)
    assert sleeps == [0.5, 1.0]
    assert len(server.requests) == 3


def test_4xx_fails_immediately(server):
    server.script[:] = [(404, b"nope")]
    sleeps = []
    client = _client(server, sleep=sleeps.append)
    with pytest.raises(HttpError) as err:
        client.generate("p")
    assert err.value.status == 404
    assert sleeps == []
    assert len(server.requests) == 1


def test_malformed_responses(server):
    client = _client(server)
    server.script[:] = [(200, b"this is not json")]
    with pytest.raises(MalformedResponse):
        client.generate("p")
    server.script[:] = [(200, json.dumps({"choices": []}).encode())]
    with pytest.raises(MalformedResponse):
        client.generate("p")
    server.script[:] = [
        (200, json.dumps({"choices": [{"message": {"content": 42}}]}).encode())
    ]
    with pytest.raises(MalformedResponse):
        client.generate("p")


def test_connection_refused_retries_then_fails():
    # Grab a port that nothing listens on.
    probe = _ScriptedServer([(200, b"")])
    port = probe.server_address[1]
    probe.server_close()
    sleeps = []
    client = HttpGeneratorClient(
        f"http://127.0.0.1:{port}", sleep=sleeps.append, transport_attempts=2
    )
    with pytest.raises(TransportError) as err:
        client.generate("p")
    assert "ConnectionError" in str(err.value)
    assert sleeps == [0.5]


def test_concurrency_bounded_by_semaphore(server):
    server.delay_s = 0.05
    client = _client(server, max_in_flight=2)
    threads = [
        threading.Thread(target=client.generate, args=(f"p{i}",)) for i in range(6)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(server.requests) == 6
    assert server.max_in_flight <= 2


def test_endpoint_normalization():
    client = HttpGeneratorClient("http://host:1234/")
    assert client.endpoint == "http://host:1234/v1/chat/completions"


def test_request_validation():
    with pytest.raises(InvalidRange):
        GeneratorRequest(prompt="  ")
    with pytest.raises(InvalidRange):
        GeneratorRequest(prompt="p", max_tokens=0)
    with pytest.raises(InvalidRange):
        GeneratorRequest(prompt="p", timeout_s=0.0)
    with pytest.raises(InvalidRange):
        HttpGeneratorClient(image_transport="carrier pigeon")
    with pytest.raises(InvalidRange):
        HttpGeneratorClient(transport_attempts=0)
    with pytest.raises(InvalidRange):
        HttpGeneratorClient(max_in_flight=0)


def test_mock_client_replay_and_exhaustion():
    mock = MockGeneratorClient(["a", ValueError("scripted failure"), "b"])
    assert mock.generate("p1") == "a"
    with pytest.raises(ValueError):
        mock.generate("p2")
    assert mock.generate("p3") == "b"
    assert mock.calls == 3
    assert mock.prompts == ["p1", "p2", "p3"]
    with pytest.raises(ScriptExhausted):
        mock.generate("p4")
    with pytest.raises(InvalidRange):
        MockGeneratorClient([])
    resp = MockGeneratorClient(["via complete"]).complete(GeneratorRequest(prompt="p"))
    assert resp.text == "via complete"
    assert resp.transport_retries == 0
