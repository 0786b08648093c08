from __future__ import annotations

import json

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture
def store_doc():
    """Three-level retail taxonomy shared across the suites."""
    return {
        "name": "Store",
        "children": [
            {
                "name": "E-commerce Store",
                "children": [
                    {"name": "Subscription-based Store"},
                    {"name": "Dropshipping Store"},
                ],
            },
            {"name": "Retail Store"},
        ],
    }


@pytest.fixture
def store_json(store_doc):
    return json.dumps(store_doc)
