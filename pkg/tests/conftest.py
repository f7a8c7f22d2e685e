import json
import sys
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


class StubService:
    """Tiny JSON-over-HTTP server standing in for translation/generation services.

    ``failures`` is a list of HTTP statuses returned (in order) before the
    handler starts answering normally.
    """

    def __init__(self):
        self.failures = []
        self.requests = []
        self.lock = threading.Lock()
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
                with stub.lock:
                    stub.requests.append((self.path, body))
                    status = stub.failures.pop(0) if stub.failures else 200
                if status != 200:
                    payload = {"error": f"stub failure {status}"}
                elif self.path == "/translate":
                    payload = {"translations": [" ".join(reversed(l.split())) for l in body["lines"]]}
                elif self.path == "/generate":
                    n = body["n_sequences"]
                    payload = {"sequences": [f"{body['prompt']} w{i % 7}\nw{i % 3} x".strip() for i in range(n)]}
                else:
                    status, payload = 404, {"error": "no such endpoint"}
                data = json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.server.server_address[1]}"
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def stub_service():
    svc = StubService()
    yield svc
    svc.close()


def random_lines(n, vocab_size=300, seed=0, min_len=3, max_len=15, prefix="w"):
    """Zipf-ish random sentences over a synthetic vocabulary."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        k = int(rng.integers(min_len, max_len + 1))
        ids = rng.zipf(1.3, k) % vocab_size
        out.append(" ".join(f"{prefix}{i}" for i in ids))
    return out


def write_desk(root, n_lines=10_000, fine_tune_size=5_000, generate_size=5_000, seed=7,
               extra="", mode="bt_tagged", score=True):
    """Create the desk-scale fixture corpus and TOML config under ``root``."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    (root / "mono.en").write_text("\n".join(random_lines(n_lines, seed=1)) + "\n", encoding="utf-8")
    (root / "hyp.txt").write_text("the cat sat on the mat\na dog ran home\n", encoding="utf-8")
    (root / "ref.txt").write_text("the cat sat on a mat\na dog ran home\n", encoding="utf-8")
    score_section = '[score]\nhypotheses = "hyp.txt"\nreferences = "ref.txt"\n' if score else ""
    cfg = f"""
[run]
languages = ["de", "en"]
domain = "desk"
mode = "{mode}"
seed = {seed}
work_dir = "work"

[data]
in_domain_mono = "mono.en"

[sizes]
fine_tune_size = {fine_tune_size}
generate_size = {generate_size}
max_tokens = 120

[generator]
order = 4
max_tokens = 60

[translator]
kind = "reverse_mock"
{score_section}{extra}
"""
    path = root / "desk.toml"
    path.write_text(cfg, encoding="utf-8")
    return path


@pytest.fixture
def desk(tmp_path):
    return write_desk(tmp_path)


# one line per acceptance criterion, collected by tests/test_acceptance.py
ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[key])
