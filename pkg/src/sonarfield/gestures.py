"""Gesture catalog and the standard subsets used throughout the package."""

from __future__ import annotations

from enum import Enum


class Gesture(str, Enum):
    """All recognizable states: the baseline plus 15 gestures."""

    NORMAL = "normal"

    # Held poses sensed from sustained field changes.
    WRIST_UP = "wrist_up"
    COVER_SCREEN = "cover_screen"
    BLOCK_LEFT = "block_left"
    CLOSE_TO_MOUTH = "close_to_mouth"
    HAND_IN_POCKET = "hand_in_pocket"
    PHONE_COVER_WATCH = "phone_cover_watch"

    # Transient touch actions located via acceleration peaks.
    CLICK_MIC = "click_mic"
    CLICK_MIC_ADD = "click_mic_add"
    CLICK_SPEAKER = "click_speaker"
    PINCH_SIDES = "pinch_sides"
    PINCH_DIAG = "pinch_diag"

    # Same-side hand gestures recognized from IMU only, on top of WRIST_UP.
    PINCH = "pinch"
    ROTATE_IN = "rotate_in"
    ROTATE_OUT = "rotate_out"
    BEND = "bend"

    def __str__(self) -> str:  # keep JSON/log output compact
        return self.value


STATIC_GESTURES = (
    Gesture.WRIST_UP,
    Gesture.COVER_SCREEN,
    Gesture.BLOCK_LEFT,
    Gesture.CLOSE_TO_MOUTH,
    Gesture.HAND_IN_POCKET,
    Gesture.PHONE_COVER_WATCH,
)

DYNAMIC_GESTURES = (
    Gesture.CLICK_MIC,
    Gesture.CLICK_MIC_ADD,
    Gesture.CLICK_SPEAKER,
    Gesture.PINCH_SIDES,
    Gesture.PINCH_DIAG,
)

INDIRECT_GESTURES = (
    Gesture.PINCH,
    Gesture.ROTATE_IN,
    Gesture.ROTATE_OUT,
    Gesture.BEND,
)

#: The five gestures that involve touching the watch body.
TOUCH_GESTURES = DYNAMIC_GESTURES

#: The default 12-way recognition target: baseline + 11 direct gestures.
MAIN_CLASSES = (Gesture.NORMAL,) + STATIC_GESTURES + DYNAMIC_GESTURES

#: Classes of the second-stage IMU-only model; WRIST_UP is its negative class.
INDIRECT_CLASSES = INDIRECT_GESTURES + (Gesture.WRIST_UP,)


def is_dynamic(gesture: Gesture) -> bool:
    return gesture in DYNAMIC_GESTURES


def is_touch(gesture: Gesture) -> bool:
    return gesture in TOUCH_GESTURES


def parse_gesture(name: str) -> Gesture:
    try:
        return Gesture(name)
    except ValueError:
        raise ValueError(f"unknown gesture {name!r}") from None
