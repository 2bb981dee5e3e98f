"""Bundled protocol sources referenced by the test suite and demos."""

from pathlib import Path

_HERE = Path(__file__).parent


def path(name: str) -> Path:
    """Path of a bundled file such as ``teleport.cqp``."""
    candidate = _HERE / name
    if not candidate.is_file():
        available = sorted(p.name for p in _HERE.iterdir() if p.suffix in (".cqp", ".qccs"))
        raise FileNotFoundError(f"no bundled file {name!r}; available: {available}")
    return candidate


def read(name: str) -> str:
    return path(name).read_text()
