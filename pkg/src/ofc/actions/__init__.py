"""Action catalog and registry assembly."""

from __future__ import annotations

from .base import ActionInstance, AttributeSpec, Category, Event, Registry
from .classify import ExactMatch, FirstMatch, LpmMatch, PatternMatch
from .device import Discard, FromDevice, ToDevice
from .schedule import SpScheduler, WrrScheduler
from .stateful import FtpIps, Nat, StatefulFirewall
from .straight import (
    Aes,
    ChangeDstIP,
    ChangeSrcIP,
    CipherAction,
    DecapHeader,
    DecTTL,
    EncapHeader,
    ESPEncap,
    IPsecEncap,
    Pad,
    PacketCounter,
    SetECN,
    SetIPChecksum,
    SetTCPChecksum,
    TCPSyncNotifier,
    Unpad,
)

_ALL_CLASSES = [
    FromDevice, ToDevice, Discard,
    ExactMatch, LpmMatch, FirstMatch, PatternMatch,
    SpScheduler, WrrScheduler,
    DecTTL, SetECN, DecapHeader, EncapHeader, ESPEncap, CipherAction, Aes,
    IPsecEncap, ChangeSrcIP, ChangeDstIP, SetIPChecksum, SetTCPChecksum,
    Pad, Unpad, PacketCounter, TCPSyncNotifier,
    Nat, StatefulFirewall, FtpIps,
]


def default_registry() -> Registry:
    reg = Registry()
    for cls in _ALL_CLASSES:
        reg.register(cls)
    return reg


__all__ = [
    "ActionInstance", "AttributeSpec", "Category", "Event", "Registry",
    "default_registry",
] + [cls.__name__ for cls in _ALL_CLASSES]
