"""Static description of the five segmentation tasks.

Expected split counts and native sizes describe the published datasets; a
desk-scale synthetic tree with the same layout loads fine unless strict
count checking is requested.
"""

from __future__ import annotations

from dataclasses import dataclass

PATCH_SIZE = 14

TASK_NAMES = ("facies", "geobody", "crater", "das_event", "fault")


@dataclass(frozen=True)
class TaskSpec:
    name: str
    class_count: int
    native_size: tuple[int, int]
    expected_counts: tuple[int, int]  # (train, test)
    layout: str  # "pairs" | "volume"
    resize_to: tuple[int, int] | None = None
    volume_depth: int | None = None


TASKS: dict[str, TaskSpec] = {
    "facies": TaskSpec(
        name="facies",
        class_count=6,
        native_size=(1006, 782),
        expected_counts=(250, 45),
        layout="volume",
        volume_depth=590,
    ),
    "geobody": TaskSpec(
        name="geobody",
        class_count=2,
        native_size=(101, 101),
        expected_counts=(3000, 1000),
        layout="pairs",
        resize_to=(224, 224),
    ),
    "crater": TaskSpec(
        name="crater",
        class_count=2,
        native_size=(1022, 1022),
        expected_counts=(1000, 199),
        layout="pairs",
    ),
    "das_event": TaskSpec(
        name="das_event",
        class_count=2,
        native_size=(512, 512),
        expected_counts=(115, 28),
        layout="pairs",
    ),
    "fault": TaskSpec(
        name="fault",
        class_count=2,
        native_size=(896, 896),
        expected_counts=(1081, 269),
        layout="pairs",
    ),
}


def task_spec(name: str) -> TaskSpec:
    from ..errors import ConfigError

    spec = TASKS.get(name)
    if spec is None:
        raise ConfigError(f"unknown task {name!r}; expected one of {sorted(TASKS)}")
    return spec


def pad_to_multiple(value: int, multiple: int = PATCH_SIZE) -> int:
    """Smallest multiple of *multiple* that is >= value."""
    return ((value + multiple - 1) // multiple) * multiple
