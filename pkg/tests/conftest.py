import itertools
import json
import os
import math
from fractions import Fraction
from pathlib import Path

import jsonschema
import numpy as np
import pytest
from hypothesis import settings
from referencing import Registry, Resource

settings.register_profile("default", max_examples=60, deadline=None)
settings.register_profile("thorough", max_examples=1000, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def exact_chi(coeffs, N):
    """N! e_N by subset enumeration in rational arithmetic (independent oracle)."""
    fr = [Fraction(float(c)) for c in coeffs]
    if N == 0:
        return Fraction(1)
    total = sum((math.prod(sub) for sub in itertools.combinations(fr, N)), Fraction(0))
    return total * math.factorial(N)


def rel_err(a, b):
    a, b = float(a), float(b)
    if a == b:
        return 0.0
    return abs(a - b) / max(abs(a), abs(b))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


SCHEMA_DIR = Path(__file__).resolve().parents[1] / "docs" / "schemas"


def _registry():
    reg = Registry()
    for p in SCHEMA_DIR.glob("*.schema.json"):
        reg = reg.with_resource(p.name, Resource.from_contents(json.loads(p.read_text())))
    return reg


def validate_schema(body, name):
    """Validate against docs/schemas/<name>.schema.json, resolving sibling $refs."""
    schema = json.loads((SCHEMA_DIR / f"{name}.schema.json").read_text())
    jsonschema.Draft202012Validator(schema, registry=_registry()).validate(body)


_ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """Record and print one PASS/FAIL line for an acceptance criterion, then assert it."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, {})

    def report(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines[number] = line
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
