import pytest

from pcos_ensemble.synthetic import SynthesisConfig, generate_corpus

# Small, fast corpus shared by most test modules: 64px images, 6 per class
# per split (matching the documented scan example).
MINI_CONFIG = SynthesisConfig(
    per_class_train=6,
    per_class_test=6,
    image_size=64,
    follicle_count_range=(3, 6),
    follicle_radius_range=(4, 9),
    speckle_grain=1.5,
    seed=7,
)


@pytest.fixture(scope="session")
def mini_corpus(tmp_path_factory):
    """Session-scoped synthetic corpus; tests must not mutate it."""
    root = tmp_path_factory.mktemp("mini_corpus") / "corpus"
    manifest = generate_corpus(MINI_CONFIG, root)
    return manifest


@pytest.fixture()
def mutable_corpus(tmp_path):
    """Per-test corpus for tests that corrupt or move files."""
    root = tmp_path / "corpus"
    return generate_corpus(MINI_CONFIG, root)
