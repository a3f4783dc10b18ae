import pytest

from flexrec import net, synth


@pytest.fixture(scope="session")
def synthetic_split():
    data = synth.gen_gaussian_triplet(seed=0)
    return synth.train_test_split(data, 0.8, seed=0)


@pytest.fixture(scope="session")
def trained_state(synthetic_split):
    train, _ = synthetic_split
    return net.train(net.NetworkConfig(seed=0), train.features, train.labels)
