"""Single-utterance test-time adaptation for speech recognition."""

from ._sgem import *  # noqa: F401,F403
from ._sgem import SgemError  # noqa: F401
