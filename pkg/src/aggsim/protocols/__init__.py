from .base import Protocol
from .drg import Gam, Gcm, Jack, RandomGrouping
from .pushpull import Pull, Push, PushPull, Variant
from .pushsum import PspShare, PushSum

PROTOCOLS = ("psp", "ppg", "ppbc", "ppow", "drg")

__all__ = [
    "PROTOCOLS",
    "Gam",
    "Gcm",
    "Jack",
    "Protocol",
    "Pull",
    "Push",
    "PushPull",
    "PushSum",
    "PspShare",
    "RandomGrouping",
    "Variant",
]
