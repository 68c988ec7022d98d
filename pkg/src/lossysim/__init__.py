"""Classical simulation of lossy linear optics at desk scale."""

from importlib.resources import files

__version__ = "0.1.0"


def fixture_path(name: str):
    """Path of a bundled network fixture, e.g. ``fixture_path("fig10.json")``."""
    return files(__name__) / "fixtures" / name
