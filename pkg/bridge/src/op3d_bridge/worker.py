"""Matcher worker: line-delimited JSON over stdio or a TCP socket.

Protocol:
  handshake  {"ready": true, "modes": [...], "schedule": {...}}
  request    {"id", "mode", "image_png_b64", "prompts", "trials", "seed"}
  response   {"id", "sq_err": [[...]]} or {"id", "sim": [...]}
  error      {"id", "error": "..."}

A bad request produces an error record; it never terminates the stream.
"""

from __future__ import annotations

import argparse
import base64
import json
import socket
import sys
from dataclasses import dataclass, field

from .backends import load_backend


@dataclass
class WorkerConfig:
    backend: str = "echo"
    modes: tuple = ()          # filled from the backend on load
    seed: int = 42             # default when a request omits its seed
    batch_size: int = 1
    tcp_port: int | None = None
    backend_options: dict = field(default_factory=dict)


def _validate(req: dict, modes) -> str | None:
    if not isinstance(req, dict):
        return "request must be a JSON object"
    if "id" not in req:
        return "request needs an id"
    mode = req.get("mode")
    if mode not in modes:
        return f"unsupported mode {mode!r}; serving {sorted(modes)}"
    if not isinstance(req.get("prompts"), list) or not req["prompts"]:
        return "prompts must be a non-empty list"
    if mode == "diffusion":
        trials = req.get("trials", 0)
        if not isinstance(trials, int) or trials < 1:
            return "trials must be >=1"
    if not isinstance(req.get("image_png_b64"), str):
        return "image_png_b64 must be a base64 string"
    return None


def handle_line(line: str, backend, config: WorkerConfig) -> dict:
    """Turn one request line into one response record."""
    try:
        req = json.loads(line)
    except json.JSONDecodeError as e:
        return {"id": 0, "error": f"parse error: {e}"}
    rid = req.get("id", 0) if isinstance(req, dict) else 0
    problem = _validate(req, backend.modes)
    if problem:
        return {"id": rid, "error": problem}
    try:
        png = base64.b64decode(req["image_png_b64"])
        prompts = [str(p) for p in req["prompts"]]
        if req["mode"] == "diffusion":
            seed = int(req.get("seed", config.seed))
            errs = backend.sq_err_lists(png, prompts, int(req["trials"]), seed)
            return {"id": rid, "sq_err": errs}
        sims = backend.similarities(png, prompts)
        return {"id": rid, "sim": sims}
    except Exception as e:  # one bad request must not kill the stream
        return {"id": rid, "error": f"{type(e).__name__}: {e}"}


def serve_stream(reader, writer, config: WorkerConfig) -> None:
    backend = load_backend(config.backend, **config.backend_options)
    handshake = {
        "ready": True,
        "modes": list(backend.modes),
        "backend": backend.name,
        "schedule": {"kind": "linear", "T": getattr(backend, "T", 0)},
    }
    writer.write(json.dumps(handshake) + "\n")
    writer.flush()
    for line in reader:
        line = line.strip()
        if not line:
            continue
        resp = handle_line(line, backend, config)
        writer.write(json.dumps(resp) + "\n")
        writer.flush()


def serve(config: WorkerConfig) -> None:
    if config.tcp_port is not None:
        srv = socket.create_server(("127.0.0.1", config.tcp_port))
        port = srv.getsockname()[1]
        print(json.dumps({"listening": port}), file=sys.stderr, flush=True)
        conn, _addr = srv.accept()
        with conn:
            reader = conn.makefile("r", encoding="utf-8")
            writer = conn.makefile("w", encoding="utf-8")
            serve_stream(reader, writer, config)
    else:
        serve_stream(sys.stdin, sys.stdout, config)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="op3d-bridge", description=__doc__)
    parser.add_argument("--backend", default="echo", choices=["echo", "toy", "clip", "sd"])
    parser.add_argument("--model", help="model identifier for pretrained backends")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--latent", type=int, default=16, help="toy backend latent size")
    parser.add_argument("--tcp", type=int, help="serve one connection on this port instead of stdio")
    args = parser.parse_args(argv)

    options = {}
    if args.backend == "toy":
        options["latent"] = args.latent
    if args.backend in ("clip", "sd"):
        options["device"] = args.device
        if args.model:
            options["model_id"] = args.model

    config = WorkerConfig(
        backend=args.backend,
        seed=args.seed,
        tcp_port=args.tcp,
        backend_options=options,
    )
    try:
        serve(config)
    except (BrokenPipeError, KeyboardInterrupt):
        pass
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
