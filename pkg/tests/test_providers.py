from __future__ import annotations

import numpy as np
import pytest

from dreamforge import templates
from dreamforge.datamodel import BBox
from dreamforge.errors import ProviderError
from dreamforge.providers.base import ProviderEndpoint
from dreamforge.scene import LayoutItem, make_layout


@pytest.fixture
def layout():
    items = (
        LayoutItem(0, BBox(10, 10, 60, 60)),
        LayoutItem(1, BBox(120, 100, 80, 90)),
    )
    return make_layout((256, 256), items, "two patches")


class TestEndpoint:
    def test_validation(self):
        with pytest.raises(ValueError):
            ProviderEndpoint("llm", "http://x", timeout=0)
        with pytest.raises(ValueError):
            ProviderEndpoint("llm", "http://x", retries=-1)
        with pytest.raises(ValueError):
            ProviderEndpoint("widget", "http://x")


class TestStubLLM:
    def test_same_inputs_same_output(self, stub_providers):
        prompt = templates.association_prompt("dog")
        assert stub_providers.llm_complete(prompt, 1) == stub_providers.llm_complete(prompt, 1)

    def test_different_seeds_differ(self, stub_providers):
        prompt = templates.association_prompt("dog")
        assert stub_providers.llm_complete(prompt, 1) != stub_providers.llm_complete(prompt, 2)
        free = "tell me something"
        assert stub_providers.llm_complete(free, 1) != stub_providers.llm_complete(free, 2)

    def test_association_is_comma_separated_nouns_from_pool(self, stub_providers):
        from dreamforge.providers.stubs import association_pool

        text = stub_providers.llm_complete(templates.association_prompt("dog"), 3)
        names = [n.strip() for n in text.split(",")]
        assert len(names) >= 3
        assert set(names) <= set(association_pool("dog"))

    def test_empty_prompt_rejected(self, stub_providers):
        with pytest.raises(ValueError):
            stub_providers.llm_complete("", 1)


class TestStubImageGen:
    def test_dimensions_match_canvas(self, stub_providers, layout):
        image = stub_providers.generate_image(layout, 5)
        assert (image.width, image.height) == layout.canvas

    def test_empty_layout_is_plain_background(self, stub_providers, tmp_path):
        from PIL import Image

        empty = make_layout((64, 64), (), "nothing")
        image = stub_providers.generate_image(empty, 5)
        arr = np.asarray(Image.open(tmp_path / image.image_uri).convert("RGB"))
        assert len(np.unique(arr.reshape(-1, 3), axis=0)) == 1

    def test_disjoint_boxes_paint_exact_patches(self, stub_providers, layout, tmp_path):
        from PIL import Image

        image = stub_providers.generate_image(layout, 5)
        arr = np.asarray(Image.open(tmp_path / image.image_uri).convert("RGB"))
        for item in layout.items:
            b = item.bbox
            region = arr[b.y : b.bottom, b.x : b.right].reshape(-1, 3)
            assert len(np.unique(region, axis=0)) == 1  # solid patch
        # patch colors are distinguishable from each other and the background
        b0, b1 = layout.items[0].bbox, layout.items[1].bbox
        c0 = arr[b0.y, b0.x]
        c1 = arr[b1.y, b1.x]
        bg = arr[0, 0]
        assert not np.array_equal(c0, c1)
        assert not np.array_equal(c0, bg) and not np.array_equal(c1, bg)
        stats = image.region_stats
        assert stats[0].dominant_fraction == 1.0

    def test_same_layout_and_seed_is_byte_identical(self, stub_providers, layout, tmp_path):
        image1 = stub_providers.generate_image(layout, 5)
        bytes1 = (tmp_path / image1.image_uri).read_bytes()
        image2 = stub_providers.generate_image(layout, 5)
        bytes2 = (tmp_path / image2.image_uri).read_bytes()
        assert image1.image_uri == image2.image_uri
        assert bytes1 == bytes2


class TestStubMaskGen:
    def test_largest_candidate_is_painted_patch(self, stub_providers, layout):
        image = stub_providers.generate_image(layout, 5)
        box = layout.items[0].bbox
        candidates = stub_providers.propose_masks(image.image_uri, box)
        assert len(candidates) >= 1
        largest = max(candidates, key=lambda c: c.area)
        assert largest.area == box.area  # patch fills the box
        assert largest.mask.to_array().all()

    def test_unit_box_candidate_area_at_most_one(self, stub_providers, layout):
        image = stub_providers.generate_image(layout, 5)
        box = BBox(layout.items[0].bbox.x, layout.items[0].bbox.y, 1, 1)
        for candidate in stub_providers.propose_masks(image.image_uri, box):
            assert candidate.area <= 1

    def test_candidates_clipped_to_box(self, stub_providers, layout):
        image = stub_providers.generate_image(layout, 5)
        box = layout.items[1].bbox
        for candidate in stub_providers.propose_masks(image.image_uri, box):
            assert (candidate.mask.width, candidate.mask.height) == (box.w, box.h)
            assert (candidate.confidence.width, candidate.confidence.height) == (box.w, box.h)

    def test_repeated_call_identical(self, stub_providers, layout):
        image = stub_providers.generate_image(layout, 5)
        box = layout.items[0].bbox
        first = stub_providers.propose_masks(image.image_uri, box)
        second = stub_providers.propose_masks(image.image_uri, box)
        assert [c.mask for c in first] == [c.mask for c in second]
        assert all(
            np.array_equal(a.confidence.values, b.confidence.values)
            for a, b in zip(first, second)
        )

    def test_out_of_bounds_box_rejected(self, stub_providers, layout):
        image = stub_providers.generate_image(layout, 5)
        with pytest.raises(ProviderError):
            stub_providers.propose_masks(image.image_uri, BBox(250, 250, 20, 20))


class TestStubScorer:
    def test_repeatable_and_in_range(self, stub_providers):
        box = BBox(0, 0, 4, 4)
        a = stub_providers.score_crop("img.png", box, "dog")
        b = stub_providers.score_crop("img.png", box, "dog")
        assert a == b
        assert 0.0 <= a <= 1.0

    def test_stub_scores_are_uniform(self, stub_providers):
        box = BBox(0, 0, 4, 4)
        scores = [
            stub_providers.score_crop(f"img-{i}.png", box, "dog") for i in range(10_000)
        ]
        assert abs(float(np.mean(scores)) - 0.5) < 0.02

    def test_embedding_unit_norm_and_deterministic(self, stub_providers):
        a = stub_providers.embed_text("dog")
        b = stub_providers.embed_text("dog")
        assert abs(np.linalg.norm(a) - 1.0) < 1e-9
        assert float(np.dot(a, b)) == pytest.approx(1.0, abs=1e-12)

    def test_synonym_table_guarantees_high_cosine(self, stub_providers):
        sofa = stub_providers.embed_text("sofa")
        couch = stub_providers.embed_text("couch")
        assert float(np.dot(sofa, couch)) >= 0.95

    def test_unrelated_names_stay_apart(self, stub_providers):
        rng = np.random.default_rng(7)
        hits = 0
        pairs = 200
        for i in range(pairs):
            a = stub_providers.embed_text(f"thing-{i}")
            b = stub_providers.embed_text(f"object-{i}")
            if float(np.dot(a, b)) >= 0.9:
                hits += 1
        assert hits / pairs <= 0.01


class TestCallLog:
    def test_every_call_recorded_with_hash_and_outcome(self, stub_providers):
        stub_providers.llm_complete("hello", 1)
        stub_providers.embed_text("dog")
        calls = stub_providers.log.drain()
        assert len(calls) == 2
        assert all(c["outcome"] == "ok" for c in calls)
        assert all(c["latency_ms"] == 0.0 for c in calls)  # in-process transport
        assert len({c["request_hash"] for c in calls}) == 2
        assert stub_providers.log.drain() == []

    def test_failed_call_recorded_with_error_outcome(self, stub_providers, layout):
        image = stub_providers.generate_image(layout, 5)
        stub_providers.log.drain()
        with pytest.raises(ProviderError):
            stub_providers.propose_masks(image.image_uri, BBox(250, 250, 20, 20))
        calls = stub_providers.log.drain()
        assert len(calls) == 1
        assert calls[0]["outcome"].startswith("error:")
