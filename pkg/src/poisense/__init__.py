"""poisense: infer likely human activities for a place and time from POI data."""

from importlib import resources


def seed_taxonomy_path():
    """Path to the bundled seed taxonomy file."""
    return resources.files("poisense.data") / "seed_taxonomy.txt"


__all__ = ["seed_taxonomy_path"]
__version__ = "0.1.0"
