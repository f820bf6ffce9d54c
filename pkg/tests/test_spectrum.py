import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specden.spectrum import (EMPTY_BAND, R_MAX, IpfsRecord, SpectrumError, band_filter, band_masks,
                              band_similarities, band_similarity, dft2, format_ipfs_csv, hf_ratio,
                              idft2, ipfs_curve, parse_ipfs_csv)

from oracles import band_of, centred, dft2_direct, idft2_direct, norm_radius


def checkerboard(h, w):
    return np.indices((h, w)).sum(axis=0) % 2 * 1.0


# dft2

def test_dft_constant():
    c = np.abs(dft2(np.full((4, 4), 0.7)).coeffs)
    assert c[0, 0] == pytest.approx(16 * 0.7)
    c[0, 0] = 0
    assert np.max(c) < 1e-12


def test_dft_delta_is_flat():
    img = np.zeros((4, 4))
    img[0, 0] = 1
    np.testing.assert_allclose(dft2(img).coeffs, np.ones((4, 4)), atol=1e-15)


@pytest.mark.parametrize("shape", [(4, 4), (8, 8), (5, 7), (6, 3)])
def test_dft_matches_direct_sum(shape):
    img = np.random.default_rng(sum(shape)).standard_normal(shape)
    assert np.max(np.abs(dft2(img).coeffs - dft2_direct(img))) < 1e-10


@pytest.mark.parametrize("shape", [(8, 8), (5, 6), (16, 12)])
def test_inverse_and_hermitian(shape):
    img = np.random.default_rng(1).standard_normal(shape)
    spec = dft2(img)
    assert np.max(np.abs(idft2(spec) - img)) < 1e-10
    h, w = shape
    flipped = np.conj(spec.coeffs[(-np.arange(h)) % h][:, (-np.arange(w)) % w])
    np.testing.assert_allclose(spec.coeffs, flipped, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2 ** 31))
def test_parseval(h, w, seed):
    img = np.random.default_rng(seed).standard_normal((h, w))
    lhs = np.sum(img ** 2) * h * w
    rhs = np.sum(np.abs(dft2(img).coeffs) ** 2)
    assert abs(lhs - rhs) <= 1e-10 * lhs


def test_dft_rejects_bad_shape():
    with pytest.raises(ValueError):
        dft2(np.zeros(4))


# band masks

def test_single_band_is_everything():
    assert band_masks(6, 6, 1).masks.all()


def band_counts_oracle(h, w, b):
    counts = [0] * b
    for u in range(h):
        for v in range(w):
            counts[band_of(u, v, h, w, b)] += 1
    return counts


def test_edge_ties_share_a_band():
    # (1, 7) and (5, 5) on 14x14 both sit exactly on the edge between bands 4 and 5
    bs = band_masks(14, 14, 7)
    assert bs.masks[5, 1, 7] and bs.masks[5, 5, 5]


def test_band_counts_8x8_b4():
    bs = band_masks(8, 8, 4)
    assert list(bs.masks.sum(axis=(1, 2))) == band_counts_oracle(8, 8, 4)


@pytest.mark.parametrize("h,w,b", [(16, 16, 5), (7, 9, 3), (32, 20, 6), (2, 2, 5)])
def test_band_membership_matches_enumeration(h, w, b):
    bs = band_masks(h, w, b)
    for u in range(h):
        for v in range(w):
            assert bs.masks[band_of(u, v, h, w, b), u, v]


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 20), st.integers(2, 20), st.integers(1, 9))
def test_band_partition(h, w, b):
    bs = band_masks(h, w, b)
    assert np.array_equal(bs.masks.sum(axis=0), np.ones((h, w), dtype=int))
    assert bs.masks[0, 0, 0]
    assert bs.edges[0] == 0 and bs.edges[-1] == pytest.approx(R_MAX)
    # band index non-decreasing in radius; equal radii share a band
    r = [Fraction(centred(u, h) ** 2, h * h) + Fraction(centred(v, w) ** 2, w * w)
         for u in range(h) for v in range(w)]
    idx = np.argmax(bs.masks, axis=0).ravel()
    pairs = sorted(zip(r, idx))
    assert all(a[1] <= b[1] for a, b in zip(pairs, pairs[1:]))
    assert all(a[1] == b[1] for a, b in zip(pairs, pairs[1:]) if a[0] == b[0])


def test_empty_bands_flagged():
    bs = band_masks(2, 2, 8)
    assert any(bs.empty)
    for i, e in enumerate(bs.empty):
        assert e == (not bs.masks[i].any())


# band filter

def test_band_filter_identity_single_band():
    img = np.random.default_rng(0).standard_normal((6, 6))
    np.testing.assert_allclose(band_filter(img, band_masks(6, 6, 1), 0), img, atol=1e-12)


def test_band_filter_constant_high_bands_zero():
    bs = band_masks(8, 8, 4)
    for i in range(1, 4):
        assert np.max(np.abs(band_filter(np.full((8, 8), 3.0), bs, i))) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 16), st.integers(2, 16), st.integers(1, 7), st.integers(0, 2 ** 31))
def test_band_filter_additivity(h, w, b, seed):
    img = np.random.default_rng(seed).standard_normal((h, w))
    bs = band_masks(h, w, b)
    total = sum(band_filter(img, bs, i) for i in range(b))
    assert np.max(np.abs(total - img)) < 1e-9


def test_band_filter_imaginary_residue_raises():
    img = np.random.default_rng(0).standard_normal((8, 8))
    bs = band_masks(8, 8, 4)
    # a mask without conjugate symmetry leaves a complex result
    bad = bs.masks.copy()
    bad[1] = False
    bad[1, 1, 2] = True
    broken = type(bs)(bs.num_bands, bad, bs.edges, bs.empty)
    with pytest.raises(SpectrumError):
        band_filter(img, broken, 1)


def test_band_filter_checks_args():
    bs = band_masks(8, 8, 4)
    with pytest.raises(IndexError):
        band_filter(np.zeros((8, 8)), bs, 4)
    with pytest.raises(ValueError):
        band_filter(np.zeros((8, 6)), bs, 0)


# similarity

def test_similarity_self_and_negation():
    img = np.random.default_rng(3).standard_normal((16, 16))
    bs = band_masks(16, 16, 5)
    for i in range(5):
        assert band_similarity(img, img, bs, i) == pytest.approx(1.0, abs=1e-12)
        assert band_similarity(img, -img, bs, i) == pytest.approx(-1.0, abs=1e-12)


def test_similarity_empty_band_sentinel():
    bs = band_masks(8, 8, 4)
    const = np.full((8, 8), 0.5)
    other = np.random.default_rng(0).standard_normal((8, 8))
    assert band_similarity(const, other, bs, 3) == EMPTY_BAND


def similarity_oracle(a, b, h, w, nb, i):
    fa, fb = dft2_direct(a), dft2_direct(b)
    mask = np.array([[band_of(u, v, h, w, nb) == i for v in range(w)] for u in range(h)])
    xa = idft2_direct(fa * mask).real
    xb = idft2_direct(fb * mask).real
    dot = sum(xa[y, x] * xb[y, x] for y in range(h) for x in range(w))
    na = math.sqrt(sum(v * v for v in xa.ravel()))
    nbv = math.sqrt(sum(v * v for v in xb.ravel()))
    return dot / (na * nbv)


@pytest.mark.parametrize("seed", range(3))
def test_similarity_matches_brute_force(seed):
    g = np.random.default_rng(seed)
    a, b = g.standard_normal((8, 8)), g.standard_normal((8, 8))
    bs = band_masks(8, 8, 4)
    for i in range(4):
        assert band_similarity(a, b, bs, i) == pytest.approx(similarity_oracle(a, b, 8, 8, 4, i), abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.floats(-5, 5).filter(lambda x: abs(x) > 0.01), st.floats(-5, 5).filter(lambda x: abs(x) > 0.01),
       st.integers(0, 2 ** 31))
def test_similarity_scale_invariance(alpha, beta, seed):
    g = np.random.default_rng(seed)
    a, b = g.standard_normal((8, 8)), g.standard_normal((8, 8))
    bs = band_masks(8, 8, 3)
    for i in range(3):
        s = band_similarity(a, b, bs, i)
        assert band_similarity(alpha * a, beta * b, bs, i) == pytest.approx(s * np.sign(alpha * beta), abs=1e-9)


def test_multichannel_average():
    g = np.random.default_rng(0)
    a, b = g.standard_normal((3, 8, 8)), g.standard_normal((3, 8, 8))
    bs = band_masks(8, 8, 4)
    per = [[band_similarity(a[c], b[c], bs, i) for c in range(3)] for i in range(4)]
    np.testing.assert_allclose(band_similarities(a, b, bs), np.mean(per, axis=1), atol=1e-12)


# IPFS curves

def test_ipfs_self_and_negation():
    t = np.random.default_rng(0).standard_normal((8, 8))
    bs = band_masks(8, 8, 4)
    assert ipfs_curve([(0, t)], t, "noisy", bs)[0].similarities == pytest.approx((1.0,) * 4)
    assert ipfs_curve([(0, -t)], t, "noisy", bs)[0].similarities == pytest.approx((-1.0,) * 4)


def test_ipfs_recomposes_per_iteration():
    g = np.random.default_rng(1)
    t = g.standard_normal((8, 8))
    outs = [(it, g.standard_normal((8, 8))) for it in (0, 5, 10)]
    bs = band_masks(8, 8, 4)
    recs = ipfs_curve(outs, t, "ground_truth", bs)
    assert [r.iteration for r in recs] == [0, 5, 10]
    for r, (_, img) in zip(recs, outs):
        assert r.target_kind == "ground_truth"
        assert r.similarities == tuple(band_similarity(img, t, bs, i) for i in range(4))


def test_ipfs_errors():
    bs = band_masks(8, 8, 4)
    with pytest.raises(ValueError):
        ipfs_curve([], np.zeros((8, 8)), "noisy", bs)
    with pytest.raises(ValueError):
        ipfs_curve([(0, np.zeros((8, 8)))], np.zeros((8, 8)), "clean", bs)


def test_ipfs_csv_round_trip():
    recs = [IpfsRecord(0, "noisy", (1.0, 0.5, -0.25)), IpfsRecord(3, "ground_truth", (0.9, 0.1234567, 0.0))]
    text = format_ipfs_csv(recs, 3, "config_hash=abc seed=1")
    lines = text.splitlines()
    assert lines[0] == "# config_hash=abc seed=1"
    assert lines[1] == "iter,target,band_0,band_1,band_2"
    assert lines[2] == "0,nos,1.000000,0.500000,-0.250000"
    assert lines[3] == "3,gt,0.900000,0.123457,0.000000"
    back = parse_ipfs_csv(text)
    assert [r.target_kind for r in back] == ["noisy", "ground_truth"]
    assert back[1].similarities == (0.9, 0.123457, 0.0)


# hf_ratio

def test_hf_ratio_constant_and_checkerboard():
    assert hf_ratio(np.full((8, 8), 2.0)) == 0.0
    assert hf_ratio(checkerboard(8, 8)) == pytest.approx(1.0)


def hf_oracle(img, rc):
    h, w = img.shape
    f = dft2_direct(img)
    hi = tot = 0.0
    for u in range(h):
        for v in range(w):
            if u == 0 and v == 0:
                continue
            e = abs(f[u, v]) ** 2
            tot += e
            if norm_radius(u, v, h, w) >= rc:
                hi += e
    return hi / tot


@pytest.mark.parametrize("seed", range(4))
def test_hf_ratio_matches_brute_force(seed):
    img = np.random.default_rng(seed).standard_normal((8, 8))
    for rc in (0.1, 0.25, 0.4):
        assert hf_ratio(img, rc) == pytest.approx(hf_oracle(img, rc), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(-10, 10), st.integers(0, 2 ** 31))
def test_hf_ratio_offset_invariant(offset, seed):
    img = np.random.default_rng(seed).standard_normal((8, 8))
    assert hf_ratio(img + offset) == pytest.approx(hf_ratio(img), abs=1e-9)
    assert 0.0 <= hf_ratio(img) <= 1.0
