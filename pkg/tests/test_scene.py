from __future__ import annotations

import numpy as np
import pytest

from dreamforge.datamodel import BBox, Category, ConfidenceMap, Origin, rle_encode
from dreamforge.errors import LayoutInductionError
from dreamforge.providers.base import MaskCandidate, ProviderSet
from dreamforge.providers.stubs import StubLayoutToImage, StubScorer
from dreamforge.scene import (
    LayoutItem,
    annotate_objects,
    layout_from_payload,
    layout_to_payload,
    make_layout,
    plan_layout,
    validate_layout,
)

from doubles import EmptyMaskGen, ScriptedLLM

DOG = Category(0, "dog", Origin.TRAIN)
CAT = Category(1, "cat", Origin.TRAIN)
CANVAS = (256, 256)


class TestPlanLayout:
    def test_stub_produces_valid_single_item_layout(self, stub_providers):
        layout = plan_layout([DOG], stub_providers, CANVAS, seed=3)
        assert len(layout.items) == 1
        assert layout.items[0].category_id == DOG.id
        box = layout.items[0].bbox
        assert box.right <= CANVAS[0] and box.bottom <= CANVAS[1]
        assert layout.description

    def test_class_not_in_sample_rejected(self, tmp_path):
        llm = ScriptedLLM(
            ["a scene", '{"objects": [{"class": "zebra", "box": [0.1, 0.1, 0.4, 0.4]}]}']
        )
        providers = ProviderSet(
            llm=llm,
            layout2image=StubLayoutToImage(tmp_path),
            maskgen=EmptyMaskGen(),
            scorer=StubScorer(),
        )
        with pytest.raises(LayoutInductionError, match="zebra"):
            plan_layout([DOG], providers, CANVAS, seed=0, retries=2)

    def test_unparseable_output_exhausts_retries(self, tmp_path):
        llm = ScriptedLLM(["a scene", "not json at all"])
        providers = ProviderSet(
            llm=llm,
            layout2image=StubLayoutToImage(tmp_path),
            maskgen=EmptyMaskGen(),
            scorer=StubScorer(),
        )
        with pytest.raises(LayoutInductionError, match="3 attempts"):
            plan_layout([DOG], providers, CANVAS, seed=0, retries=3)
        assert llm.calls == 4  # one description + three induction attempts

    def test_recovers_on_later_attempt(self, tmp_path):
        llm = ScriptedLLM(
            [
                "a scene",
                "garbage",
                '{"objects": [{"class": "dog", "box": [0.1, 0.1, 0.5, 0.5]}]}',
            ]
        )
        providers = ProviderSet(
            llm=llm,
            layout2image=StubLayoutToImage(tmp_path),
            maskgen=EmptyMaskGen(),
            scorer=StubScorer(),
        )
        layout = plan_layout([DOG], providers, CANVAS, seed=0, retries=3)
        assert layout.items[0].bbox == BBox(26, 26, 128, 128)

    def test_same_inputs_same_layout_id(self, stub_providers):
        one = plan_layout([DOG, CAT], stub_providers, CANVAS, seed=9)
        two = plan_layout([DOG, CAT], stub_providers, CANVAS, seed=9)
        assert one.layout_id == two.layout_id
        assert one == two

    def test_payload_round_trip(self, stub_providers):
        layout = plan_layout([DOG, CAT], stub_providers, CANVAS, seed=1)
        assert layout_from_payload(layout_to_payload(layout)) == layout


class TestValidateLayout:
    def test_out_of_bounds(self):
        layout = make_layout((100, 100), (LayoutItem(0, BBox(60, 10, 50, 40)),), "")
        verdict = validate_layout(layout)
        assert not verdict.accepted and verdict.reason == "out-of-bounds"

    def test_overlap_checked_by_direct_iou(self):
        a = BBox(0, 0, 100, 100)
        b = BBox(0, 50, 100, 100)  # intersection 100x50, union 15000, IoU 1/3
        layout = make_layout((200, 200), (LayoutItem(0, a), LayoutItem(1, b)), "")
        assert a.iou(b) == pytest.approx(5000 / 15000)
        verdict = validate_layout(layout, overlap_max=0.30)
        assert not verdict.accepted and verdict.reason == "overlap"
        assert validate_layout(layout, overlap_max=0.34).accepted

    def test_empty_layout_degenerate(self):
        verdict = validate_layout(make_layout((100, 100), (), ""))
        assert not verdict.accepted and verdict.reason == "degenerate"

    def test_small_box_degenerate(self):
        layout = make_layout((100, 100), (LayoutItem(0, BBox(0, 0, 10, 40)),), "")
        verdict = validate_layout(layout, min_box_px=32)
        assert not verdict.accepted and verdict.reason == "degenerate"

    def test_valid_layout_accepted(self):
        layout = make_layout(
            (200, 200),
            (LayoutItem(0, BBox(0, 0, 64, 64)), LayoutItem(1, BBox(100, 100, 64, 64))),
            "",
        )
        assert validate_layout(layout).accepted


class _ScriptedMaskGen:
    transport = "inproc"

    def __init__(self, areas):
        self.areas = areas

    def propose(self, image_uri, bbox):
        candidates = []
        for area in self.areas:
            grid = np.zeros((bbox.h, bbox.w), dtype=bool)
            grid.flat[:area] = True
            conf = ConfidenceMap(values=np.full((bbox.h, bbox.w), 0.5))
            candidates.append(MaskCandidate(rle_encode(grid), conf, area))
        return candidates


class TestAnnotate:
    def layout(self):
        return make_layout(
            CANVAS,
            (LayoutItem(0, BBox(10, 10, 40, 40)), LayoutItem(1, BBox(100, 100, 50, 50))),
            "",
        )

    def providers_with_maskgen(self, maskgen, tmp_path):
        return ProviderSet(
            llm=ScriptedLLM(["x"]),
            layout2image=StubLayoutToImage(tmp_path),
            maskgen=maskgen,
            scorer=StubScorer(),
        )

    def test_largest_area_candidate_chosen(self, tmp_path):
        providers = self.providers_with_maskgen(_ScriptedMaskGen([100, 250, 40]), tmp_path)
        objects, drops = annotate_objects("img", self.layout(), providers, [7, 8])
        assert not drops
        assert [o.mask.area for o in objects] == [250, 250]
        assert [o.object_id for o in objects] == [7, 8]
        assert [o.category_id for o in objects] == [0, 1]

    def test_area_tie_breaks_to_lowest_index(self, tmp_path):
        maskgen = _ScriptedMaskGen([100, 100])

        # distinguish the tied candidates by confidence
        def propose(image_uri, bbox, _orig=maskgen.propose):
            out = _orig(image_uri, bbox)
            values = [np.full((bbox.h, bbox.w), v) for v in (0.25, 0.75)]
            return [
                MaskCandidate(c.mask, ConfidenceMap(values=v), c.area)
                for c, v in zip(out, values)
            ]

        maskgen.propose = propose
        providers = self.providers_with_maskgen(maskgen, tmp_path)
        objects, _ = annotate_objects("img", self.layout(), providers, [1, 2])
        assert float(objects[0].confidence.values[0, 0]) == 0.25

    def test_stub_patch_recovered_bit_exactly(self, stub_providers, tmp_path):
        layout = self.layout()
        image = stub_providers.generate_image(layout, 11)
        objects, drops = annotate_objects(image.image_uri, layout, stub_providers, [0, 1])
        assert not drops
        for obj, item in zip(objects, layout.items):
            assert obj.mask.to_array().all()  # whole painted box
            assert (obj.mask.width, obj.mask.height) == (item.bbox.w, item.bbox.h)

    def test_zero_candidates_drops_object(self, tmp_path):
        providers = self.providers_with_maskgen(EmptyMaskGen(), tmp_path)
        objects, drops = annotate_objects("img", self.layout(), providers, [1, 2])
        assert objects == []
        assert len(drops) == 2
        assert drops[0].reason == "no mask candidates"

    def test_mask_stays_inside_layout_box(self, stub_providers):
        layout = self.layout()
        image = stub_providers.generate_image(layout, 11)
        objects, _ = annotate_objects(image.image_uri, layout, stub_providers, [0, 1])
        for obj in objects:
            ys, xs = np.nonzero(obj.mask.to_array())
            assert (xs + obj.bbox.x < obj.bbox.right).all()
            assert (ys + obj.bbox.y < obj.bbox.bottom).all()

    def test_one_object_per_item_at_most(self, stub_providers):
        layout = self.layout()
        image = stub_providers.generate_image(layout, 11)
        objects, drops = annotate_objects(image.image_uri, layout, stub_providers, [0, 1])
        assert len(objects) + len(drops) == len(layout.items)
