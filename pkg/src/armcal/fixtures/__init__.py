"""Bundled chain and intrinsics documents used by tests, demos, and the CLI."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from ..geometry import CameraIntrinsics
from ..kinematics import KinematicChain, load_chain

CHAIN_FIXTURES = ("arm7", "mixed3")


def fixture_path(name: str) -> Path:
    """Filesystem path of a bundled fixture JSON (without the .json suffix)."""
    path = resources.files(__package__) / f"{name}.json"
    return Path(str(path))


def load_chain_fixture(name: str) -> KinematicChain:
    with fixture_path(name).open("r", encoding="utf-8") as f:
        return load_chain(f.read())


def load_default_intrinsics() -> CameraIntrinsics:
    with fixture_path("intrinsics_640x480").open("r", encoding="utf-8") as f:
        return CameraIntrinsics.from_dict(json.load(f))
