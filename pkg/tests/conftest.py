import numpy as np
import pytest

from pvrag.descriptors import LocationLabel, PVDescriptor, QuantityInterval
from pvrag.network import load_bundled_case30
from pvrag.vindex import ReferenceEntry, VectorIndex, normalize


@pytest.fixture(scope="session")
def case30():
    return load_bundled_case30()


def make_entry(entry_id, vec, presence=True, quantity=QuantityInterval.ONE_TO_FIVE,
               location=LocationLabel.TOP, city="Tempe", continent="North America",
               explanation="fixture"):
    if not presence:
        quantity, location, explanation = QuantityInterval.NA, LocationLabel.NA, ""
    label = PVDescriptor(presence, quantity, location, explanation)
    return ReferenceEntry(
        id=entry_id,
        city=city,
        continent=continent,
        embedding=normalize(vec).astype(np.float32),
        label=label,
    )


def random_index(n, dim=16, seed=0, cities=("Tempe", "Oxford")):
    rng = np.random.default_rng(seed)
    entries = []
    for i in range(n):
        entries.append(
            make_entry(
                f"e{i:04d}",
                rng.standard_normal(dim),
                presence=bool(i % 2),
                city=cities[i % len(cities)],
            )
        )
    return VectorIndex(entries, dimension=dim)


@pytest.fixture
def small_index():
    return random_index(24)
