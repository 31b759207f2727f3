"""Domain types for GuessWhat?! games plus the geometric helpers shared by all agents.

A game revolves around one image with K candidate objects; one object is the
hidden target.  The questioner asks yes/no questions, the oracle answers, and
the game ends with a guess.  All types here are immutable value objects and
safe to share across threads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

# Objects smaller than this many square pixels are too small to play with.
MIN_OBJECT_AREA = 500.0
# Playable images contain between MIN_OBJECTS and MAX_OBJECTS eligible objects.
MIN_OBJECTS = 3
MAX_OBJECTS = 20

# Width of the externally supplied image/crop feature vectors (final-layer
# output of an off-the-shelf image classifier).  Absent vectors are treated
# as all-zeros so feature-free configurations run without image files.
DEFAULT_IMAGE_FEATURE_DIM = 1000


class GeometryError(ValueError):
    """Raised for degenerate boxes or polygons."""


class ValidationError(ValueError):
    """Raised when a record violates a structural invariant."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field_name = field_name


class Answer(enum.Enum):
    YES = "Yes"
    NO = "No"
    NA = "N/A"


class Status(enum.Enum):
    SUCCESS = "success"
    FAILURE = "failure"
    INCOMPLETE = "incomplete"


@dataclass(frozen=True)
class ImageMeta:
    """Image descriptor.  ``features`` is an opaque, externally supplied vector."""

    image_id: int
    width: int
    height: int
    file_name: Optional[str] = None
    features: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.width <= 0:
            raise ValidationError("width", f"must be positive, got {self.width}")
        if self.height <= 0:
            raise ValidationError("height", f"must be positive, got {self.height}")


@dataclass(frozen=True)
class ObjectRef:
    """One candidate object: category, pixel bbox (top-left origin, y down), area."""

    object_id: int
    category_id: int
    category_name: str
    bbox: Tuple[float, float, float, float]
    area: float
    segment: Optional[Tuple[Tuple[float, float], ...]] = None
    crop_features: Optional[Tuple[float, ...]] = None

    def validate_in_image(self, image: ImageMeta) -> None:
        x, y, w, h = self.bbox
        if x < 0 or y < 0:
            raise ValidationError("bbox", f"negative origin {self.bbox}")
        if w <= 0 or h <= 0:
            raise ValidationError("bbox", f"degenerate box {self.bbox}")
        if x + w > image.width + 1e-6 or y + h > image.height + 1e-6:
            raise ValidationError(
                "bbox", f"{self.bbox} exceeds image {image.width}x{image.height}"
            )
        if self.area <= 0:
            raise ValidationError("area", f"must be positive, got {self.area}")
        if self.segment is not None:
            hull = enclosing_bbox(self.segment)
            if any(abs(a - b) > 1e-6 for a, b in zip(hull, self.bbox)):
                raise ValidationError(
                    "segment", f"bbox {self.bbox} is not the hull {hull} of the segment"
                )


@dataclass(frozen=True)
class SpatialVec8:
    """Normalized box descriptor: min/max corners, center, and size.

    Coordinates are normalized so both image axes span [-1, 1] with the origin
    at the image center; y grows downward like the pixel grid.
    """

    x_min: float
    y_min: float
    x_max: float
    y_max: float
    x_center: float
    y_center: float
    w_box: float
    h_box: float

    def as_tuple(self) -> Tuple[float, ...]:
        return (
            self.x_min,
            self.y_min,
            self.x_max,
            self.y_max,
            self.x_center,
            self.y_center,
            self.w_box,
            self.h_box,
        )


@dataclass(frozen=True)
class QAPair:
    question: str
    answer: Answer

    def __post_init__(self):
        if not isinstance(self.answer, Answer):
            raise ValidationError("answer", f"not an Answer: {self.answer!r}")


@dataclass(frozen=True)
class GameRecord:
    """One full game.  Object order is preserved from the input file and is the
    canonical order for guesser output indexing."""

    game_id: int
    image: ImageMeta
    objects: Tuple[ObjectRef, ...]
    target_id: int
    qas: Tuple[QAPair, ...] = field(default_factory=tuple)
    status: Status = Status.INCOMPLETE
    guess_id: Optional[int] = None

    def __post_init__(self):
        ids = [o.object_id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValidationError("objects", "duplicate object ids")
        if self.target_id not in ids:
            raise ValidationError("target_id", f"{self.target_id} not among objects")
        if self.guess_id is not None and self.guess_id not in ids:
            raise ValidationError("guess_id", f"{self.guess_id} not among objects")
        if self.status in (Status.SUCCESS, Status.FAILURE) and self.guess_id is None:
            raise ValidationError("guess_id", f"missing for finished game ({self.status.value})")
        if self.status is Status.SUCCESS and self.guess_id != self.target_id:
            raise ValidationError("guess_id", "successful game must guess the target")
        for obj in self.objects:
            obj.validate_in_image(self.image)

    @property
    def target(self) -> ObjectRef:
        return next(o for o in self.objects if o.object_id == self.target_id)

    @property
    def object_count(self) -> int:
        return len(self.objects)

    def target_index(self) -> int:
        return next(i for i, o in enumerate(self.objects) if o.object_id == self.target_id)


def spatial_features(bbox: Tuple[float, float, float, float], image: ImageMeta) -> SpatialVec8:
    """Normalize a pixel bbox to the 8-d location descriptor.

    Raises GeometryError for a box of zero width or height.
    """
    x, y, w, h = bbox
    if w <= 0 or h <= 0:
        raise GeometryError(f"degenerate bbox {bbox}")
    x_min = 2.0 * x / image.width - 1.0
    x_max = 2.0 * (x + w) / image.width - 1.0
    y_min = 2.0 * y / image.height - 1.0
    y_max = 2.0 * (y + h) / image.height - 1.0
    return SpatialVec8(
        x_min=x_min,
        y_min=y_min,
        x_max=x_max,
        y_max=y_max,
        x_center=(x_min + x_max) / 2.0,
        y_center=(y_min + y_max) / 2.0,
        w_box=x_max - x_min,
        h_box=y_max - y_min,
    )


def enclosing_bbox(segment: Sequence[Tuple[float, float]]) -> Tuple[float, float, float, float]:
    """Axis-aligned min/max hull of a polygon, as (x, y, w, h)."""
    if len(segment) < 3:
        raise GeometryError(f"polygon needs at least 3 vertices, got {len(segment)}")
    xs = [p[0] for p in segment]
    ys = [p[1] for p in segment]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 - x0 <= 0 or y1 - y0 <= 0:
        raise GeometryError("polygon hull has zero width or height")
    return (x0, y0, x1 - x0, y1 - y0)


def is_eligible_object(obj: ObjectRef) -> bool:
    """Objects below MIN_OBJECT_AREA px^2 are discarded; the boundary is kept."""
    return obj.area >= MIN_OBJECT_AREA


def is_eligible_image(objects: Sequence[ObjectRef]) -> bool:
    """True iff the (already object-filtered) list has a playable object count."""
    return MIN_OBJECTS <= len(objects) <= MAX_OBJECTS
