"""Versioned field names for the CSV and JSON outputs."""
import json
from functools import lru_cache
from importlib import resources


@lru_cache(maxsize=None)
def load_schema(version=1):
    text = resources.files(__name__).joinpath(f"v{version}.json").read_text()
    return json.loads(text)
