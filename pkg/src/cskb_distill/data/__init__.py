"""Bundled default data: exemplar files and a small demo CSKB."""

from importlib import resources
from pathlib import Path


def mini_cskb_path() -> Path:
    """Path of the small bracketed triple file that ships with the package."""
    return Path(str(resources.files(__name__).joinpath("mini_cskb.tsv")))
