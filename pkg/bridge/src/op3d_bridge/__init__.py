"""Matcher worker serving the line-delimited JSON scoring protocol."""

from .backends import BACKENDS, EchoBackend, ToyBackend, load_backend
from .worker import WorkerConfig, serve, serve_stream

__version__ = "0.1.0"
