import math

import numpy as np
import pytest

from nowcastlab import patchwork as pw
from nowcastlab.patchwork import PatchOperator, PatchSpec, extract_patch


def simulate_reach(isize, tsize, step, freq, printed=False):
    """Independent walk of the index arithmetic: returns cells consumed per side."""
    w, pos = 1, 0
    for k in range(1, (isize - tsize) // 2 + 1):
        if printed and k % freq == 0:
            w += step
            pos += w
            continue
        pos += w
        if not printed and k % freq == 0:
            w += step
    return pos


def oracle_patch(src, spec, origin):
    """Per-cell brute force: each ring cell is the exact average of the source
    area it covers, built from a padded copy of the source."""
    x, y = origin
    m, t = spec.margin, spec.tsize
    pad = 4 * spec.isize
    S = np.zeros((src.shape[0] + 2 * pad, src.shape[1] + 2 * pad))
    S[pad : pad + src.shape[0], pad : pad + src.shape[1]] = src
    top, left = x + m + pad, y + m + pad  # target corner in S
    P = np.full((spec.isize, spec.isize), np.nan)
    P[m : m + t, m : m + t] = S[top : top + t, left : left + t]

    def box(r0, r1, c0, c1, n_out, along_rows):
        # average rectangle [r0,r1)x[c0,c1) into n_out cells along one axis
        vals = []
        length = (r1 - r0) if along_rows else (c1 - c0)
        for o in range(n_out):
            a, b = o * length / n_out, (o + 1) * length / n_out
            acc = 0.0
            for i in range(int(math.floor(a)), int(math.ceil(b))):
                wgt = min(b, i + 1) - max(a, i)
                if along_rows:
                    acc += wgt * S[r0 + i, c0:c1].mean()
                else:
                    acc += wgt * S[r0:r1, c0 + i].mean()
            vals.append(acc / (b - a))
        return vals

    w, off = 1, 0
    for k in range(1, m + 1):
        span = t + 2 * k
        o = off + w
        lo, hi = m - k, m + t + k - 1
        up = box(top - o, top - off, left - o, left + t + o, span, along_rows=False)
        dn = box(top + t + off, top + t + o, left - o, left + t + o, span, along_rows=False)
        lf = box(top - o, top + t + o, left - o, left - off, span, along_rows=True)
        rt = box(top - o, top + t + o, left + t + off, left + t + o, span, along_rows=True)
        P[lo, lo : hi + 1] = up
        P[hi, lo : hi + 1] = dn
        P[lo : hi + 1, lo] = lf
        P[lo : hi + 1, hi] = rt
        off += w
        if k % spec.freq == 0:
            w += spec.step
    return P


SMALL = PatchSpec(isize=24, tsize=8, step=1, freq=2)


class TestSchedule:
    def test_reach_default(self):
        spec = PatchSpec()
        assert pw.source_reach(spec) == 136 == simulate_reach(256, 128, 1, 20)
        assert 20 * 1 + 20 * 2 + 20 * 3 + 4 * 4 == 136

    def test_reach_as_printed_has_gaps(self):
        assert pw.source_reach(PatchSpec(), as_printed=True) == simulate_reach(256, 128, 1, 20, printed=True) == 139

    @pytest.mark.parametrize("isize,tsize,step,freq", [(64, 32, 1, 4), (32, 8, 2, 3), (40, 8, 0, 5), (24, 8, 1, 1)])
    def test_reach_matches_simulator(self, isize, tsize, step, freq):
        assert pw.source_reach(PatchSpec(isize, tsize, step, freq)) == simulate_reach(isize, tsize, step, freq)

    def test_gap_free_and_monotone(self):
        sched = pw.ring_schedule(PatchSpec())
        assert len(sched) == 64
        for (o1, w1), (o2, w2) in zip(sched, sched[1:]):
            assert o2 == o1 + w1 and w2 >= w1

    @pytest.mark.parametrize("kw", [dict(isize=255), dict(tsize=4, isize=8), dict(isize=64, tsize=128)])
    def test_invalid_spec(self, kw):
        with pytest.raises(ValueError):
            PatchSpec(**kw)


class TestExtraction:
    def test_constant(self):
        # reach 20 on each side of the target at rows/cols 36..44
        p = extract_patch(np.full((80, 80), 2.5), SMALL, (28, 28))
        np.testing.assert_allclose(p.values, 2.5, rtol=0, atol=1e-12)

    @pytest.mark.parametrize("seed", range(4))
    def test_centre_copy_bit_exact(self, seed):
        rng = np.random.default_rng(seed)
        src = rng.random((300, 300))
        x, y = rng.integers(-50, 200, size=2)
        p = extract_patch(src, PatchSpec(), (int(x), int(y)))
        padded = np.pad(src, 400)
        ref = padded[x + 464 : x + 592, y + 464 : y + 592]
        assert np.array_equal(p.values[64:192, 64:192], ref)

    def test_centre_copy_interior_full_size(self):
        rng = np.random.default_rng(0)
        src = rng.random((600, 600)).astype(np.float32)
        x, y = 150, 170
        p = extract_patch(src, PatchSpec(), (x, y))
        assert np.array_equal(p.values[64:192, 64:192], src[x + 64 : x + 192, y + 64 : y + 192])

    def test_every_cell_has_one_final_write(self):
        p = extract_patch(np.random.default_rng(1).random((400, 400)), PatchSpec(), (100, 100))
        assert (p.owner >= 0).all()
        effective = p.writes - ((p.writes == 2) & np.isin(p.owner, [pw.LEFT, pw.RIGHT]))
        assert (effective == 1).all()
        corners = p.writes == 2
        assert corners.sum() == 4 * 64
        assert np.isin(p.owner[corners], [pw.LEFT, pw.RIGHT]).all()

    def test_ring_means_conserve_source(self):
        src = np.random.default_rng(2).random((500, 500)) * 10
        p = extract_patch(src, PatchSpec(), (120, 90), keep_rects=True)
        fp = pw._padded_window(src, *p.footprint)
        assert len(p.rects) == 4 * 64
        for rect in p.rects:
            assert abs(rect.strip.mean() - fp[rect.source].mean()) < 1e-5

    def test_first_rings_copy_source(self):
        # width-1 bands map one source cell per patch cell
        src = np.random.default_rng(3).random((300, 300))
        p = extract_patch(src, PatchSpec(), (40, 40))
        k = 20
        np.testing.assert_array_equal(p.values[64 - k : 192 + k, 64 - k : 192 + k],
                                      src[104 - k : 232 + k, 104 - k : 232 + k])

    @pytest.mark.parametrize("origin", [(10, 12), (-9, 3), (20, 25)])
    def test_matches_brute_force_oracle(self, origin):
        src = np.random.default_rng(4).random((40, 44))
        p = extract_patch(src, SMALL, origin)
        np.testing.assert_allclose(p.values, oracle_patch(src, SMALL, origin), rtol=0, atol=1e-12)

    def test_zero_padding_outside(self):
        src = np.ones((16, 16))
        p = extract_patch(src, SMALL, (-40, -40))
        assert not p.values.any()


class TestOperator:
    @pytest.mark.parametrize("spec", [SMALL, PatchSpec(64, 32, 1, 4), PatchSpec(48, 16, 2, 3)])
    def test_equals_loop(self, spec):
        rng = np.random.default_rng(5)
        src = rng.random((90, 90))
        op = PatchOperator(spec)
        origins = [(0, 0), (-7, 30), (50, 41)]
        out = op(src, origins)
        for o, got in zip(origins, out):
            np.testing.assert_allclose(got, extract_patch(src, spec, o).values, rtol=0, atol=1e-13)

    def test_rows_sum_to_one(self):
        op = PatchOperator(SMALL)
        np.testing.assert_allclose(np.asarray(op.matrix.sum(axis=1)).ravel(), 1.0, atol=1e-12)


class TestTiling:
    def test_france_tile_count(self):
        assert len(pw.tile_grid((1050, 1650), 128)) == 9 * 13 == 117

    def test_single_tile(self):
        assert len(pw.tile_grid((128, 128), 128)) == 1

    @pytest.mark.parametrize("shape", [(40, 56), (37, 61), (16, 16)])
    def test_round_trip(self, shape):
        src = np.random.default_rng(6).random(shape)
        tiles = pw.tile_map(src, SMALL)
        back = pw.reassemble([(t, pw.target_block(p.values, SMALL)) for p, t in tiles], shape)
        assert np.array_equal(back, src)

    def test_overlap_and_missing(self):
        tiles = pw.tile_grid((16, 16), 8)
        blocks = [(t, np.zeros((8, 8))) for t in tiles]
        with pytest.raises(ValueError, match="overlapping"):
            pw.reassemble(blocks + blocks[:1], (16, 16))
        with pytest.raises(ValueError, match="missing"):
            pw.reassemble(blocks[1:], (16, 16))

    def test_naive_patch_is_plain_crop(self):
        src = np.arange(400.0).reshape(20, 20)
        np.testing.assert_array_equal(pw.naive_patch(src, PatchSpec(8, 8, 1, 1), (3, 4)), src[3:11, 4:12])


class TestResize:
    def test_constant(self):
        np.testing.assert_allclose(pw.resize_full_map(np.full((105, 165), 4.0), (64, 64)), 4.0)

    def test_identity(self):
        g = np.random.default_rng(7).random((256, 256))
        np.testing.assert_allclose(pw.resize_full_map(g, (256, 256)), g, atol=1e-6)

    def test_planar_ramp(self):
        H, W, oh, ow = 60, 90, 24, 30
        r, c = np.mgrid[0:H, 0:W]
        g = 2.0 + 0.3 * r - 0.7 * c
        out = pw.resize_full_map(g, (oh, ow))
        rr = (np.arange(oh) + 0.5) * H / oh - 0.5
        cc = (np.arange(ow) + 0.5) * W / ow - 0.5
        np.testing.assert_allclose(out, 2.0 + 0.3 * rr[:, None] - 0.7 * cc[None, :], atol=1e-9)

    def test_stacked(self):
        g = np.random.default_rng(8).random((3, 2, 20, 20))
        out = pw.resize_full_map(g, (8, 8))
        assert out.shape == (3, 2, 8, 8)
        np.testing.assert_allclose(out[1, 1], pw.resize_full_map(g[1, 1], (8, 8)))
