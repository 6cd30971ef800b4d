from enum import IntEnum


class GraspState(IntEnum):
    SLIDING = 0
    APPROPRIATE = 1
    EXCESSIVE = 2

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, s: str) -> "GraspState":
        return cls[s.strip().upper()]


CLASS_NAMES = tuple(s.label for s in GraspState)
