import sys
from pathlib import Path

import pytest

from maxent_nas.arch import ArchitectureSpec, parse
from maxent_nas.cli import packaged_arch

sys.path.insert(0, str(Path(__file__).parent))  # make oracles importable

FIXTURES = Path(__file__).parent / "fixtures"


def load_packaged(name: str) -> ArchitectureSpec:
    return parse(packaged_arch(name))


@pytest.fixture(scope="session")
def initial_arch() -> ArchitectureSpec:
    return load_packaged("initial")


@pytest.fixture(scope="session")
def toy_arch() -> ArchitectureSpec:
    return load_packaged("toy_initial")


@pytest.fixture(scope="session")
def backbone_m() -> ArchitectureSpec:
    return load_packaged("backbone_m")
