"""Shared pytest fixtures."""

from pathlib import Path

import pytest
import yaml

from holeburn import LevelStructure
from settings import load_config


@pytest.fixture(autouse=True, scope="session")
def settings():
    """Load the repository config.yaml so every test sees the shipped defaults."""
    return load_config(Path(__file__).parent / "config.yaml")


@pytest.fixture
def write_config(tmp_path):
    """Write a run configuration mapping to YAML and return its path."""

    def _write(data: dict, name: str = "run.yaml") -> Path:
        path = tmp_path / name
        path.write_text(yaml.safe_dump(data, sort_keys=False), encoding="utf-8")
        return path

    return _write


@pytest.fixture
def out_dir(tmp_path) -> Path:
    path = tmp_path / "runs"
    path.mkdir()
    return path


@pytest.fixture
def generic_levels() -> LevelStructure:
    """Three ground and three excited levels without accidental coincidences."""
    return LevelStructure(
        name="generic",
        ground_offsets=(0.0, 25.0, 65.0),
        excited_offsets=(0.0, 90.0, 200.0),
        background_fwhm=1e5,
    )
