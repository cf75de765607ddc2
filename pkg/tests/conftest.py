"""Shared fixtures: seed-0 stripes and codebooks are expensive, build once."""

import pytest

from puzzlepole.codebook import Codebook, synthesize_stripes


@pytest.fixture(scope="session")
def stripes():
    return synthesize_stripes(0)


@pytest.fixture(scope="session")
def v_stripe(stripes):
    return stripes[0]


@pytest.fixture(scope="session")
def h_stripe(stripes):
    return stripes[1]


@pytest.fixture(scope="session")
def flat_codebook(stripes):
    return Codebook.from_stripes(*stripes)
