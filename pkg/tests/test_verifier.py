import math

import numpy as np
import pytest

from spadmark import (FeatureConfig, Thresholds, WatermarkLayout,
                      add_gaussian_noise, assemble, disassemble, embed_lsb,
                      generate_watermark, hamming_frac, identify_source,
                      psnr, puf_query, robustness_sweep, sensitivity, verify)
from spadmark.verifier import (AUTHENTIC, TAMPERED, UNKNOWN_SOURCE,
                               content_bits, tamper_bitmap, tolerant_flip_frac,
                               watermark_bitmap)
from conftest import make_image


def test_hamming_frac():
    a = np.zeros(45056, dtype=np.uint8)
    assert hamming_frac(a, a) == 0.0
    assert hamming_frac(a, 1 - a) == 1.0
    b = a.copy()
    b[17] = 1
    assert hamming_frac(a, b) == pytest.approx(1 / 45056)
    with pytest.raises(ValueError):
        hamming_frac(a, a[:-1])


def test_sensitivity_reference_points():
    assert sensitivity(0.0063, 0.0049) == pytest.approx(0.49 / 0.63)
    assert round(sensitivity(0.0063, 0.0049), 3) == 0.778
    assert round(sensitivity(0.0194, 0.0110), 3) == 0.567
    assert sensitivity(0.25, 0.25) == 1.0
    with pytest.raises(ValueError):
        sensitivity(0.0, 0.1)


def test_psnr_reference_points():
    base = np.full((64, 64), 100, dtype=np.uint8)
    assert math.isinf(psnr(base, base))
    assert psnr(base, base + 1) == pytest.approx(48.1308, abs=1e-3)
    assert psnr(np.zeros((8, 8), dtype=np.uint8),
                np.full((8, 8), 255, dtype=np.uint8)) == pytest.approx(0.0)
    with pytest.raises(ValueError):
        psnr(base, base[:32])


def test_add_gaussian_noise():
    img = make_image(4, size=128)
    assert np.array_equal(add_gaussian_noise(img, 0.0, seed=1), img)
    n1 = add_gaussian_noise(img, 10.0, seed=1)
    assert np.array_equal(n1, add_gaussian_noise(img, 10.0, seed=1))
    assert not np.array_equal(n1, add_gaussian_noise(img, 10.0, seed=2))
    assert n1.dtype == np.uint8
    with pytest.raises(ValueError):
        add_gaussian_noise(img, -1.0)


def test_generate_watermark_deterministic(records, host_images):
    a = generate_watermark(host_images[0], records[0])
    b = generate_watermark(host_images[0], records[0])
    assert np.array_equal(a.bits, b.bits)
    assert a.chip_id == "chip1"
    assert a.image_digest == b.image_digest


def test_generate_cross_chip_structure(records, host_images):
    layout = WatermarkLayout()
    wm_a = generate_watermark(host_images[0], records[0])
    wm_b = generate_watermark(host_images[0], records[1])
    assert np.array_equal(wm_a.bits[layout.challenge_slice],
                          wm_b.bits[layout.challenge_slice])
    tail = slice(layout.challenge_bits, layout.total_bits)
    assert hamming_frac(wm_a.bits[tail], wm_b.bits[tail]) > 0


def test_generate_cross_image_structure(records, host_images):
    layout = WatermarkLayout()
    wm_0 = generate_watermark(host_images[0], records[0])
    wm_1 = generate_watermark(host_images[1], records[0])
    assert np.array_equal(wm_0.bits[layout.fingerprint_slice],
                          wm_1.bits[layout.fingerprint_slice])
    assert hamming_frac(wm_0.bits[layout.challenge_slice],
                        wm_1.bits[layout.challenge_slice]) > 0


def test_identify_source(records):
    hit = identify_source(records[2].fingerprint, records)
    assert hit == ("chip3", 0.0)
    from spadmark import enroll, golden_acquisition, new_chip
    ghost = new_chip("ghost", 777)
    outsider = enroll(ghost, golden_acquisition(ghost))
    assert identify_source(outsider.fingerprint, records) is None
    assert identify_source(records[0].fingerprint, []) is None


def test_verify_authentic_exact(records, host_images):
    wm = generate_watermark(host_images[0], records[0])
    marked = embed_lsb(host_images[0], wm)
    report = verify(marked, records)
    assert report.verdict == AUTHENTIC
    assert report.challenge_match_frac == 1.0
    assert report.response_match_frac == 1.0
    assert report.fingerprint_best_match == ("chip1", 0.0)
    assert report.tamper_cells == []


def test_verify_forged_responses(records, host_images):
    # keep chip1's fingerprint but answer the challenge with chip2's maps
    wm = generate_watermark(host_images[0], records[0])
    challenge, _, _ = disassemble(wm)
    forged = assemble(challenge, puf_query(records[1], challenge),
                      records[0].fingerprint, wm.layout)
    report = verify(embed_lsb(host_images[0], forged), records)
    assert report.verdict == TAMPERED
    assert report.challenge_match_frac == 1.0
    assert report.response_match_frac < 0.95
    assert report.fingerprint_best_match == ("chip1", 0.0)


def test_verify_unknown_source(records, host_images):
    from spadmark import enroll, golden_acquisition, new_chip
    ghost = enroll(new_chip("ghost", 999), golden_acquisition(new_chip("ghost", 999)))
    wm = generate_watermark(host_images[0], ghost)
    report = verify(embed_lsb(host_images[0], wm), records)
    assert report.verdict == UNKNOWN_SOURCE
    assert report.fingerprint_best_match is None
    assert report.response_match_frac == 0.0


def test_verify_patch_edit(records, host_images):
    wm = generate_watermark(host_images[0], records[0])
    marked = embed_lsb(host_images[0], wm)
    edited = marked.copy()
    patch = edited[256:288, 256:288].astype(np.int32)
    edited[256:288, 256:288] = np.clip(patch + 32, 0, 255).astype(np.uint8)
    report = verify(edited, records)
    assert report.verdict == TAMPERED
    assert report.challenge_match_frac < 1.0
    expected_cells = {(r, c) for r in range(32, 36) for c in range(32, 36)}
    assert expected_cells.issubset(set(report.tamper_cells))


def test_tamper_flips_are_nonlocal(records, host_images):
    img = host_images[0]
    edited = img.copy()
    patch = edited[256:288, 256:288].astype(np.int32)
    edited[256:288, 256:288] = np.clip(patch + 32, 0, 255).astype(np.uint8)
    wm_ref = generate_watermark(img, records[0])
    wm_ed = generate_watermark(edited, records[0])
    flips = np.nonzero(wm_ref.bits != wm_ed.bits)[0]
    layout = wm_ref.layout
    assert flips.size > 0
    assert flips.max() < layout.fingerprint_slice.start      # confined to C+R
    patch_extent = 31 * 512 + 32                              # row-major pixel span
    assert flips.max() - flips.min() > patch_extent


def test_single_cell_edit_bit_budget(records, host_images):
    # shift one aligned 8x8 block by a full band: at most 2 challenge bits
    # per nibble and 2 response bits may flip, all in that cell's positions
    img = host_images[0]
    edited = img.copy()
    block = edited[320:328, 320:328].astype(np.int32)
    edited[320:328, 320:328] = np.clip(block + 32, 0, 255).astype(np.uint8)
    wm_ref = generate_watermark(img, records[0])
    wm_ed = generate_watermark(edited, records[0])
    layout = wm_ref.layout
    flips = np.nonzero(wm_ref.bits != wm_ed.bits)[0]
    cell = 40 * 64 + 40
    c_flips = flips[flips < layout.challenge_bits]
    assert set(c_flips) <= set(range(cell * 8, cell * 8 + 8))
    assert len(c_flips) <= 4
    r_flips = flips[flips >= layout.challenge_bits]
    expected_r = {layout.response_h_slice.start + cell, layout.response_v_slice.start + cell}
    assert set(r_flips) <= expected_r


def test_thresholds_validation():
    with pytest.raises(ValueError):
        Thresholds(tau_fingerprint=1.0)
    with pytest.raises(ValueError):
        Thresholds(tau_challenge=-0.1)


def test_fingerprint_populations_separate():
    # over ten chips, worst-case re-enrollment drift stays clear of the
    # closest cross-chip distance
    from spadmark import enroll, golden_acquisition, new_chip
    firsts, seconds = [], []
    for seed in range(1, 11):
        chip = new_chip(f"s{seed}", seed)
        firsts.append(enroll(chip, golden_acquisition(chip, rng_seed=100 + seed)))
        seconds.append(enroll(chip, golden_acquisition(chip, rng_seed=900 + seed)))
    intra = [hamming_frac(a.fingerprint.bits, b.fingerprint.bits)
             for a, b in zip(firsts, seconds)]
    inter = [hamming_frac(firsts[i].fingerprint.bits, firsts[j].fingerprint.bits)
             for i in range(10) for j in range(i + 1, 10)]
    assert max(intra) < min(inter)


def test_tolerant_flips_zero_overlap_is_plain_hamming(records, host_images):
    img = host_images[0]
    noisy = add_gaussian_noise(img, 20.0, seed=5)
    layout = WatermarkLayout()
    wm_ref = generate_watermark(img, records[0])
    wm_noisy = generate_watermark(noisy, records[0])
    plain = hamming_frac(content_bits(wm_ref), content_bits(wm_noisy))
    assert tolerant_flip_frac(img, noisy, records[0], 0.0, layout) == pytest.approx(plain)


def test_tolerant_flips_monotone_in_overlap(records, host_images):
    img = host_images[0]
    layout = WatermarkLayout()
    for seed in (1, 2):
        noisy = add_gaussian_noise(img, 30.0, seed=seed)
        flips = [tolerant_flip_frac(img, noisy, records[0], w, layout)
                 for w in (0, 2, 4, 6, 8, 10, 12)]
        assert all(a >= b for a, b in zip(flips, flips[1:]))


def test_robustness_sweep_zero_sigma(records, host_images):
    table = robustness_sweep(host_images[0], records[0], [0.0], [0, 6, 12], [1])
    assert all(flip == 0.0 for _, _, flip in table)


def test_robustness_sweep_table_shape(records, host_images):
    table = robustness_sweep(host_images[0], records[0], [6, 18], [0, 6], [101, 102])
    assert len(table) == 4
    assert table == sorted(table)
    with pytest.raises(ValueError):
        robustness_sweep(host_images[0], records[0], [6], [0], [])


def test_report_bitmaps(records, host_images):
    wm = generate_watermark(host_images[0], records[0])
    bitmap = watermark_bitmap(wm)
    assert bitmap.dtype == np.uint8
    assert set(np.unique(bitmap)) <= {0, 255}
    assert bitmap.shape == (128, 512)
    report = verify(embed_lsb(host_images[0], wm), records)
    tmap = tamper_bitmap(report, 64)
    assert tmap.shape == (64, 64) and not tmap.any()
