"""Exact operational probabilistic theories (classical and bilocal classical)."""

import json
from fractions import Fraction

from . import _core
from ._core import CircuitError, ConfigError, claims, dimension, labels

__all__ = [
    "CircuitError",
    "ConfigError",
    "check",
    "claims",
    "dimension",
    "evaluate",
    "labels",
    "normalize",
    "reverify",
    "suite",
]


def _settings(kw):
    return {k: ",".join(map(str, v)) if isinstance(v, (list, tuple)) else str(v) for k, v in kw.items()}


def evaluate(text):
    """Evaluate circuit text. Returns (in_dims, out_dims, {outcome: matrix of Fractions})."""
    din, dout, events = _core.evaluate(text)
    return din, dout, {o: [[Fraction(x) for x in row] for row in m] for o, m in events}


def normalize(text):
    """Jellyfish form as circuit text, and whether it evaluates to the same instrument."""
    return _core.normalize(text)


def check(claim, **settings):
    """Run one verifier; returns the certificate as a dict (with a 'reverified' flag)."""
    return json.loads(_core.check(claim, _settings(settings)))


def reverify(certificate):
    if not isinstance(certificate, str):
        certificate = json.dumps({k: v for k, v in certificate.items() if k != "reverified"})
    return _core.reverify(certificate)


def suite(**settings):
    """Acceptance run; one dict per criterion."""
    return [json.loads(line) for line in _core.suite(_settings(settings)).splitlines()]
