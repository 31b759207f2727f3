import numpy as np
import pytest
from hypothesis import given, strategies as st

from guesswhat.core import (
    Answer,
    GameRecord,
    GeometryError,
    ImageMeta,
    ObjectRef,
    QAPair,
    Status,
    ValidationError,
    enclosing_bbox,
    is_eligible_image,
    is_eligible_object,
    spatial_features,
)

from conftest import make_game, make_object


class TestSpatialFeatures:
    def test_full_frame(self):
        image = ImageMeta(image_id=1, width=640, height=480)
        vec = spatial_features((0, 0, 640, 480), image)
        assert vec.as_tuple() == (-1, -1, 1, 1, 0, 0, 2, 2)

    def test_centered_half_box(self):
        image = ImageMeta(image_id=1, width=200, height=100)
        vec = spatial_features((50, 25, 100, 50), image)
        assert vec.as_tuple() == (-0.5, -0.5, 0.5, 0.5, 0, 0, 1, 1)

    def test_top_left_quadrant(self):
        image = ImageMeta(image_id=1, width=100, height=100)
        vec = spatial_features((0, 0, 50, 50), image)
        assert vec.as_tuple() == (-1, -1, 0, 0, -0.5, -0.5, 1, 1)

    def test_degenerate_box_rejected(self):
        image = ImageMeta(image_id=1, width=100, height=100)
        with pytest.raises(GeometryError):
            spatial_features((10, 10, 0, 5), image)

    @given(st.data())
    def test_invariants(self, data):
        width = data.draw(st.integers(10, 2000))
        height = data.draw(st.integers(10, 2000))
        x = data.draw(st.floats(0, width - 1))
        y = data.draw(st.floats(0, height - 1))
        w = data.draw(st.floats(0.5, width - x))
        h = data.draw(st.floats(0.5, height - y))
        vec = spatial_features((x, y, w, h), ImageMeta(image_id=1, width=width, height=height))
        assert vec.x_min <= vec.x_center <= vec.x_max
        assert vec.y_min <= vec.y_center <= vec.y_max
        for value in vec.as_tuple()[:6]:
            assert -1 - 1e-12 <= value <= 1 + 1e-12
        assert 0 < vec.w_box <= 2
        assert 0 < vec.h_box <= 2
        assert vec.x_center == pytest.approx((vec.x_min + vec.x_max) / 2)
        assert vec.y_center == pytest.approx((vec.y_min + vec.y_max) / 2)
        assert vec.w_box == pytest.approx(vec.x_max - vec.x_min)
        assert vec.h_box == pytest.approx(vec.y_max - vec.y_min)

    def test_translation_consistency(self):
        image = ImageMeta(image_id=1, width=400, height=300)
        base = spatial_features((40, 60, 80, 90), image)
        shifted = spatial_features((40 + 25, 60, 80, 90), image)
        delta = 2 * 25 / image.width
        assert shifted.x_min == pytest.approx(base.x_min + delta)
        assert shifted.x_max == pytest.approx(base.x_max + delta)
        assert shifted.x_center == pytest.approx(base.x_center + delta)
        assert shifted.y_min == base.y_min
        assert shifted.h_box == base.h_box


class TestEnclosingBbox:
    def test_triangle(self):
        assert enclosing_bbox([(10, 10), (20, 10), (15, 30)]) == (10, 10, 10, 20)

    def test_rectangle_is_own_hull(self):
        assert enclosing_bbox([(0, 0), (4, 0), (4, 4), (0, 4)]) == (0, 0, 4, 4)

    def test_collinear_rejected(self):
        with pytest.raises(GeometryError):
            enclosing_bbox([(1, 1), (2, 1), (3, 1)])

    def test_too_few_vertices(self):
        with pytest.raises(GeometryError):
            enclosing_bbox([(0, 0), (5, 5)])

    @given(
        st.lists(
            st.tuples(st.floats(0, 100), st.floats(0, 100)), min_size=3, max_size=12
        ),
        st.randoms(use_true_random=False),
    )
    def test_vertex_order_irrelevant(self, points, rnd):
        xs = [p[0] for p in points]
        ys = [p[1] for p in points]
        if max(xs) - min(xs) <= 0 or max(ys) - min(ys) <= 0:
            return
        shuffled = list(points)
        rnd.shuffle(shuffled)
        assert enclosing_bbox(points) == enclosing_bbox(shuffled)


class TestEligibility:
    def test_just_below_threshold(self):
        assert not is_eligible_object(make_object(area=499.9))

    def test_boundary_included(self):
        assert is_eligible_object(make_object(area=500.0))

    def test_large(self):
        assert is_eligible_object(make_object(area=10000))

    @pytest.mark.parametrize("count,expected", [(2, False), (3, True), (20, True), (21, False)])
    def test_image_object_count(self, count, expected):
        objects = [make_object(object_id=i) for i in range(count)]
        assert is_eligible_image(objects) == expected


class TestGameRecord:
    def test_valid_record(self):
        game = make_game()
        assert game.target.object_id == game.target_id
        assert game.object_count == 3

    def test_target_must_exist(self):
        game = make_game()
        with pytest.raises(ValidationError, match="target_id"):
            GameRecord(
                game_id=9,
                image=game.image,
                objects=game.objects,
                target_id=99999,
            )

    def test_success_needs_matching_guess(self):
        game = make_game()
        with pytest.raises(ValidationError, match="guess_id"):
            GameRecord(
                game_id=9,
                image=game.image,
                objects=game.objects,
                target_id=game.target_id,
                status=Status.SUCCESS,
                guess_id=game.objects[1].object_id,
            )

    def test_finished_needs_guess(self):
        game = make_game()
        with pytest.raises(ValidationError, match="guess_id"):
            GameRecord(
                game_id=9,
                image=game.image,
                objects=game.objects,
                target_id=game.target_id,
                status=Status.FAILURE,
            )

    def test_bbox_must_fit_image(self):
        image = ImageMeta(image_id=1, width=50, height=50)
        obj = make_object(bbox=(40, 10, 20, 10))
        with pytest.raises(ValidationError, match="bbox"):
            GameRecord(game_id=1, image=image, objects=(obj,), target_id=obj.object_id)

    def test_segment_must_match_bbox(self):
        image = ImageMeta(image_id=1, width=100, height=100)
        obj = ObjectRef(
            object_id=1,
            category_id=1,
            category_name="person",
            bbox=(0, 0, 30, 30),
            area=100.0,
            segment=((1, 1), (5, 1), (3, 9)),
        )
        with pytest.raises(ValidationError, match="segment"):
            GameRecord(game_id=1, image=image, objects=(obj,), target_id=1)
