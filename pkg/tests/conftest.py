import numpy as np
import pytest

from medroi import PhantomSpec, Volume, generate_phantom


def assert_volume_equal(a: Volume, b: Volume, check_affine=True):
    assert a.dims == b.dims
    assert a.source_dtype == b.source_dtype
    assert np.array_equal(a.data, b.data)
    if check_affine:
        np.testing.assert_allclose(a.affine, b.affine, atol=1e-6, rtol=1e-6)


def random_volume(seed: int, dims=(10, 9, 8), code="i16") -> Volume:
    rng = np.random.default_rng(seed)
    if code == "f32":
        data = rng.uniform(-100, 900, size=dims).astype(np.float32)
    elif code == "u8":
        data = rng.integers(0, 256, size=dims, dtype=np.uint8)
    elif code == "u16":
        data = rng.integers(0, 4000, size=dims, dtype=np.uint16)
    else:
        data = rng.integers(-500, 3000, size=dims, dtype=np.int16)
    return Volume.from_array(data)


@pytest.fixture
def clean_phantom():
    # zero background, 50% bbox per axis
    return generate_phantom(PhantomSpec(seed=1, dims=(32, 32, 32)))


@pytest.fixture
def noisy_phantom():
    return generate_phantom(
        PhantomSpec(seed=2, dims=(32, 32, 32), noise_amplitude=25.0)
    )
