import numpy as np
import pytest

from padic_diffusion.rng import philox4x32, seed_key, uniforms

# published known-answer vectors for Philox4x32-10
KAT = [
    ((0, 0, 0, 0), (0, 0), (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)),
    ((0xFFFFFFFF,) * 4, (0xFFFFFFFF,) * 2, (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)),
    ((0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344), (0xA4093822, 0x299F31D0),
     (0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1)),
]


@pytest.mark.parametrize("ctr,key,expected", KAT)
def test_known_answers(ctr, key, expected):
    assert tuple(int(x) for x in philox4x32(np.array(ctr, dtype=np.uint32), np.array(key, dtype=np.uint32))) == expected


def test_vectorised_matches_single():
    ctrs = np.array([c for c, _, _ in KAT[:1]] * 3, dtype=np.uint32).T
    ctrs[0] = [0, 1, 2]
    out = philox4x32(ctrs, np.array([7, 9], dtype=np.uint32))
    for i in range(3):
        single = philox4x32(ctrs[:, i].copy(), np.array([7, 9], dtype=np.uint32))
        assert np.array_equal(out[:, i], single)


def test_uniforms_open_interval_and_streams():
    u = uniforms(5, 0, np.arange(20000), 3)
    assert u.shape == (4, 20000)
    assert u.min() > 0 and u.max() < 1
    assert abs(u.mean() - 0.5) < 0.01
    # seekable: one path computed alone equals its slice
    assert np.array_equal(uniforms(5, 0, [1234], 3)[:, 0], u[:, 1234])
    assert not np.array_equal(uniforms(5, 1, [1234], 3), uniforms(5, 0, [1234], 3))
    assert not np.array_equal(uniforms(6, 0, [1234], 3), uniforms(5, 0, [1234], 3))
    assert not np.array_equal(uniforms(5, 0, [1234], 4), uniforms(5, 0, [1234], 3))


def test_seed_key():
    assert list(seed_key(2 ** 32 + 5)) == [5, 1]
    with pytest.raises(ValueError):
        seed_key(-1)
