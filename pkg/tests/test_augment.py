from __future__ import annotations

import numpy as np
import pytest

from evkit.augment import (
    AugmentConfig,
    SampledAugmentation,
    apply_to_boxes,
    apply_to_frame,
    augment_clip,
    sample_augmentation,
)
from evkit.codec import AnnotatedBox
from evkit.errors import ShapeMismatch
from evkit.geometry import AffineTransform
from evkit.representation import FrameTensor

from oracles import box_iou_ref, dense_point_hull


def geometric_only(**kwargs) -> AugmentConfig:
    return AugmentConfig(erase_p=0.0, **kwargs)


def manual_aug(height, width, transform, erasure=None, hflip=False) -> SampledAugmentation:
    return SampledAugmentation(
        height=height, width=width, hflip=hflip, angle_deg=None, translate_px=None,
        scale=None, shear_deg=None, transform=transform, erasure=erasure,
    )


class TestSampling:
    def test_all_probabilities_zero_is_identity(self):
        aug = sample_augmentation(AugmentConfig.disabled(), 24, 32, 0)
        assert aug.is_geometric_identity
        assert aug.erasure is None
        assert aug.transform == AffineTransform.identity()

    def test_fixed_seed_reproducible(self):
        cfg = AugmentConfig(hflip_p=1, rotate_p=1, translate_p=1, scale_p=1,
                            shear_p=1, erase_p=1)
        a = sample_augmentation(cfg, 24, 32, 7)
        b = sample_augmentation(cfg, 24, 32, 7)
        assert a == b
        assert a.hflip and a.angle_deg is not None and a.erasure is not None

    def test_magnitudes_within_ranges(self, rng):
        cfg = AugmentConfig(hflip_p=1, rotate_p=1, translate_p=1, scale_p=1,
                            shear_p=1, erase_p=1)
        for seed in range(50):
            a = sample_augmentation(cfg, 48, 64, seed)
            assert abs(a.angle_deg) <= cfg.rotate_deg
            assert abs(a.translate_px[0]) <= cfg.translate_frac * 64
            assert abs(a.translate_px[1]) <= cfg.translate_frac * 48
            assert cfg.scale_range[0] <= a.scale <= cfg.scale_range[1]
            assert abs(a.shear_deg[0]) <= cfg.shear_deg
            top, left, eh, ew = a.erasure
            assert 0 <= top and top + eh <= 48 and 0 <= left and left + ew <= 64

    def test_monte_carlo_applied_rates(self):
        cfg = AugmentConfig()
        n = 10_000
        master = np.random.default_rng(99)
        counts = {"hflip": 0, "rotate": 0, "translate": 0, "scale": 0,
                  "shear": 0, "erase": 0}
        for child in master.spawn(n):
            a = sample_augmentation(cfg, 24, 32, child)
            counts["hflip"] += a.hflip
            counts["rotate"] += a.angle_deg is not None
            counts["translate"] += a.translate_px is not None
            counts["scale"] += a.scale is not None
            counts["shear"] += a.shear_deg is not None
            counts["erase"] += a.erasure is not None
        assert counts["hflip"] / n == pytest.approx(0.5, abs=0.02)
        for key in ("rotate", "translate", "scale", "shear"):
            assert counts[key] / n == pytest.approx(0.6, abs=0.02)
        # erase can fall back to no-op when size draws don't fit; 24x32 fits easily
        assert counts["erase"] / n == pytest.approx(0.4, abs=0.02)

    def test_probability_validation(self):
        with pytest.raises(ValueError):
            AugmentConfig(hflip_p=1.5)
        with pytest.raises(ValueError):
            AugmentConfig(scale_range=(1.5, 0.5))


class TestApplyToFrame:
    def test_identity_returns_frame_unchanged(self, rng):
        frame = FrameTensor(rng.integers(0, 9, (2, 6, 8)).astype(np.uint16))
        aug = sample_augmentation(AugmentConfig.disabled(), 6, 8, 0)
        out = apply_to_frame(frame, aug)
        assert out is frame

    def test_double_hflip_is_identity(self, rng):
        values = rng.integers(0, 4_000, (4, 24, 32)).astype(np.uint16)
        frame = FrameTensor(values)
        aug = manual_aug(24, 32, AffineTransform.hflip(32), hflip=True)
        twice = apply_to_frame(apply_to_frame(frame, aug), aug)
        assert np.array_equal(twice.values, values)

    def test_integer_translation_shifts_exactly(self, rng):
        values = rng.integers(0, 99, (3, 10, 12)).astype(np.uint16)
        aug = manual_aug(10, 12, AffineTransform.translation(4.0, 3.0))
        out = apply_to_frame(FrameTensor(values), aug)
        assert np.array_equal(out.values[:, 3:, 4:], values[:, :-3, :-4])
        assert not out.values[:, :3, :].any()
        assert not out.values[:, :, :4].any()

    def test_erasure_zeroes_all_channels(self, rng):
        values = rng.integers(1, 9, (3, 10, 12)).astype(np.uint16)
        aug = manual_aug(10, 12, AffineTransform.identity(), erasure=(2, 3, 4, 5))
        out = apply_to_frame(FrameTensor(values), aug)
        assert not out.values[:, 2:6, 3:8].any()
        mask = np.ones((10, 12), dtype=bool)
        mask[2:6, 3:8] = False
        assert np.array_equal(out.values[:, mask], values[:, mask])
        assert out.values.dtype == np.uint16

    def test_shape_preserved_under_warp(self, rng):
        frame = FrameTensor(rng.uniform(size=(5, 20, 30)).astype(np.float32))
        cfg = AugmentConfig(hflip_p=1, rotate_p=1, translate_p=1, scale_p=1,
                            shear_p=1, erase_p=1)
        out = apply_to_frame(frame, sample_augmentation(cfg, 20, 30, 3))
        assert out.shape == frame.shape

    def test_size_mismatch_rejected(self, rng):
        frame = FrameTensor(np.zeros((1, 4, 4), dtype=np.uint16))
        aug = sample_augmentation(AugmentConfig(), 8, 8, 0)
        with pytest.raises(ShapeMismatch):
            apply_to_frame(frame, aug)

    def test_determinism_bit_for_bit(self, rng):
        frame = FrameTensor(rng.uniform(size=(2, 16, 16)).astype(np.float32))
        cfg = AugmentConfig()
        a = apply_to_frame(frame, sample_augmentation(cfg, 16, 16, 5))
        b = apply_to_frame(frame, sample_augmentation(cfg, 16, 16, 5))
        assert np.array_equal(a.values, b.values)


class TestApplyToBoxes:
    BOX = AnnotatedBox(t=0, x=10, y=20, w=30, h=40, class_id=0, score=0.9, track_id=4)

    def test_identity(self):
        aug = sample_augmentation(AugmentConfig.disabled(), 240, 304, 0)
        assert apply_to_boxes([self.BOX], aug) == [self.BOX]

    def test_hflip_box_in_304_image(self):
        aug = manual_aug(240, 304, AffineTransform.hflip(304), hflip=True)
        out = apply_to_boxes([self.BOX], aug)[0]
        assert (out.x, out.y, out.w, out.h) == (264, 20, 30, 40)
        assert (out.class_id, out.score, out.track_id) == (0, 0.9, 4)

    def test_rotation_matches_dense_point_hull(self, rng):
        for seed in range(30):
            r = np.random.default_rng(seed)
            box = AnnotatedBox(
                t=0,
                x=float(r.uniform(60, 120)), y=float(r.uniform(60, 100)),
                w=float(r.uniform(10, 40)), h=float(r.uniform(10, 40)),
                class_id=0,
            )
            angle = float(r.uniform(-30, 30))
            m = AffineTransform.rotation_deg(angle).about(152.0, 120.0)
            aug = SampledAugmentation(240, 304, False, angle, None, None, None, m, None)
            out = apply_to_boxes([box], aug)
            assert len(out) == 1
            x0, y0, x1, y1 = dense_point_hull((box.x, box.y, box.w, box.h),
                                              m.matrix.tolist())
            assert out[0].x == pytest.approx(x0, abs=1.0)
            assert out[0].y == pytest.approx(y0, abs=1.0)
            assert out[0].x + out[0].w == pytest.approx(x1, abs=1.0)
            assert out[0].y + out[0].h == pytest.approx(y1, abs=1.0)

    def test_erasure_never_touches_boxes(self):
        aug = manual_aug(240, 304, AffineTransform.identity(), erasure=(15, 5, 60, 60))
        assert apply_to_boxes([self.BOX], aug) == [self.BOX]

    def test_boxes_clipped_to_image(self):
        aug = manual_aug(240, 304, AffineTransform.translation(-20.0, 0.0))
        out = apply_to_boxes([self.BOX], aug)[0]
        assert out.x == 0.0
        assert out.w == pytest.approx(20.0)

    def test_out_of_frame_box_dropped(self):
        aug = manual_aug(240, 304, AffineTransform.translation(-500.0, 0.0))
        assert apply_to_boxes([self.BOX], aug) == []

    def test_low_visibility_dropped(self):
        # keep 5% of the box inside: below the 10% visibility default
        aug = manual_aug(240, 304, AffineTransform.translation(-38.5, 0.0))
        box = AnnotatedBox(t=0, x=10, y=20, w=30, h=40, class_id=0)
        assert apply_to_boxes([box], aug) == []

    def test_tiny_clipped_area_dropped(self):
        box = AnnotatedBox(t=0, x=0, y=0, w=4, h=4, class_id=0)
        aug = manual_aug(240, 304, AffineTransform.translation(-3.5, -3.5))
        # clipped area 0.25 px^2 < 4 px^2
        assert apply_to_boxes([box], aug) == []


class TestFrameBoxConsistency:
    def test_warped_mask_iou(self):
        cfg = geometric_only(
            hflip_p=0.5, rotate_p=1.0, translate_p=1.0, translate_frac=0.1,
            scale_p=1.0, scale_range=(0.8, 1.25), shear_p=1.0, shear_deg=15.0,
        )
        checked = 0
        for seed in range(200):
            r = np.random.default_rng(seed)
            h = w = 200
            bw, bh = float(r.uniform(50, 90)), float(r.uniform(50, 90))
            bx = float(r.uniform(10, w - bw - 10))
            by = float(r.uniform(10, h - bh - 10))
            values = np.zeros((1, h, w), dtype=np.float32)
            values[0, int(by) : int(by + bh), int(bx) : int(bx + bw)] = 1.0
            box = AnnotatedBox(t=0, x=bx, y=by, w=bw, h=bh, class_id=0)
            aug = sample_augmentation(cfg, h, w, r)
            corners = aug.transform.apply(
                np.array([[bx, by], [bx + bw, by], [bx, by + bh], [bx + bw, by + bh]])
            )
            if corners.min() < 1 or corners[:, 0].max() > w - 1 or corners[:, 1].max() > h - 1:
                continue  # only in-bounds results are comparable
            out_frame = apply_to_frame(FrameTensor(values), aug)
            out_box = apply_to_boxes([box], aug)
            assert len(out_box) == 1
            ys, xs = np.nonzero(out_frame.values[0] > 1e-3)
            mask_box = (xs.min(), ys.min(), xs.max() + 1 - xs.min(), ys.max() + 1 - ys.min())
            b = out_box[0]
            iou = box_iou_ref(mask_box, (b.x, b.y, b.w, b.h))
            assert iou >= 0.9, f"seed {seed}: IoU {iou:.3f}"
            checked += 1
        assert checked >= 100


class TestClipMode:
    def test_identical_frames_stay_identical(self, rng):
        frame = FrameTensor(rng.uniform(size=(2, 20, 24)).astype(np.float32))
        frames = [frame] * 5
        cfg = geometric_only(rotate_p=1.0, scale_p=1.0)
        out, _, log = augment_clip(frames, [[]] * 5, cfg, 11)
        for f in out[1:]:
            assert np.array_equal(f.values, out[0].values)
        assert all(l.transform == log[0].transform for l in log)

    def test_per_frame_erasure_varies(self, rng):
        frame = FrameTensor(np.ones((1, 40, 40), dtype=np.float32))
        cfg = AugmentConfig(hflip_p=0, rotate_p=0, translate_p=0, scale_p=0,
                            shear_p=0, erase_p=1.0)
        _, _, log = augment_clip([frame] * 21, [[]] * 21, cfg, 3)
        rects = {l.erasure for l in log}
        assert len(rects) >= 2

    def test_single_frame_clip_equals_frame_mode(self, rng):
        frame = FrameTensor(rng.uniform(size=(2, 12, 12)).astype(np.float32))
        cfg = AugmentConfig()
        direct = sample_augmentation(cfg, 12, 12, np.random.default_rng(21))
        _, _, log = augment_clip([frame], [[]], cfg, np.random.default_rng(21))
        assert log[0] == direct

    def test_frame_count_does_not_perturb_geometry(self):
        cfg = AugmentConfig()
        frame = FrameTensor(np.zeros((1, 16, 16), dtype=np.float32))
        logs = []
        for n in (1, 4, 21):
            _, _, log = augment_clip([frame] * n, [[]] * n, cfg,
                                     np.random.default_rng(5))
            logs.append(log[0])
        assert logs[0].transform == logs[1].transform == logs[2].transform
        assert logs[0].hflip == logs[1].hflip == logs[2].hflip

    def test_mixed_shapes_rejected(self):
        a = FrameTensor(np.zeros((1, 8, 8), dtype=np.float32))
        b = FrameTensor(np.zeros((1, 8, 10), dtype=np.float32))
        with pytest.raises(ShapeMismatch):
            augment_clip([a, b], [[], []], AugmentConfig(), 0)

    def test_empty_clip_rejected(self):
        with pytest.raises(ValueError):
            augment_clip([], [], AugmentConfig(), 0)
