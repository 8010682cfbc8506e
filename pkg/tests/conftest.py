import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=300, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def two_clique():
    from gravitykg.fixtures import two_clique_kg
    from gravitykg.transe import TranseConfig, train

    kg = two_clique_kg()
    space, trace = train(kg, TranseConfig(seed=7))
    return kg, space, trace
