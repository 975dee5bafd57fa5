import json
import subprocess
import sys

import pytest


class WireWorker:
    """Spawn the worker as a subprocess and speak the protocol over stdio."""

    def __init__(self, *args):
        self.proc = subprocess.Popen(
            [sys.executable, "-m", "op3d_bridge", *args],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        self.handshake = json.loads(self.proc.stdout.readline())

    def send_raw(self, line: str) -> dict:
        self.proc.stdin.write(line + "\n")
        self.proc.stdin.flush()
        return json.loads(self.proc.stdout.readline())

    def request(self, **fields) -> dict:
        return self.send_raw(json.dumps(fields))

    def close(self):
        try:
            self.proc.stdin.close()
            self.proc.wait(timeout=5)
        except Exception:
            self.proc.kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@pytest.fixture
def spawn():
    workers = []

    def _spawn(*args):
        w = WireWorker(*args)
        workers.append(w)
        return w

    yield _spawn
    for w in workers:
        w.close()


def tiny_png_b64() -> str:
    import base64
    from io import BytesIO

    import numpy as np
    from PIL import Image

    rng = np.random.default_rng(0)
    arr = (rng.random((24, 24)) * 255).astype("uint8")
    buf = BytesIO()
    Image.fromarray(arr, mode="L").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")
