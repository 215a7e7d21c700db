"""One-shot converter from Planetoid citation archives to text bundles."""

from .convert import KNOWN_STATS, SourceSpec, StatsMismatch, convert
from .planetoid import PlanetoidData, SourceError, load_planetoid

__version__ = "0.1.0"
