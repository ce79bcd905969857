import numpy as np

from spamsplit.rng import stream


def test_streams_are_reproducible_and_distinct():
    a = stream(1, "ghz", 4, "raw").random(5)
    assert np.array_equal(a, stream(1, "ghz", 4, "raw").random(5))
    assert not np.array_equal(a, stream(1, "ghz", 4, "zstar").random(5))
    assert not np.array_equal(a, stream(2, "ghz", 4, "raw").random(5))


def test_streams_are_philox():
    assert isinstance(stream(0).bit_generator, np.random.Philox)
