"""Typed matrix-bearing messages exchanged by the three protocol roles."""

from __future__ import annotations

import enum
import uuid
from dataclasses import dataclass

import numpy as np

SESSION_ID_BYTES = 16
MAX_SEQ = 12


class Role(enum.IntEnum):
    SERVER = 0
    CLIENT_A = 1
    CLIENT_B = 2


class MessageKind(enum.IntEnum):
    """What a message carries; each kind recurs once per directional pass."""

    DATA_MASK = 1              # server -> data holder: additive mask for its rows
    KEY_MASKS = 2              # server -> key holder: key mask + cross-term mask
    BLINDED_DATA = 3           # data holder -> key holder: masked augmented data
    BLINDED_KEY_AND_CROSS = 4  # key holder -> data holder: masked key + masked product
    UNBLINDED_CROSS = 5        # data holder -> server: product with key mask removed
    OWN_PRODUCT_A = 6          # client A -> server: its own diagonal block
    OWN_PRODUCT_B = 7          # client B -> server: its own diagonal block


def new_session_id() -> bytes:
    return uuid.uuid4().bytes


@dataclass(frozen=True, eq=False)
class ProtocolMessage:
    session_id: bytes
    seq: int
    sender: Role
    receiver: Role
    kind: MessageKind
    payloads: tuple

    def __post_init__(self):
        if len(self.session_id) != SESSION_ID_BYTES:
            raise ValueError(f"session_id must be {SESSION_ID_BYTES} bytes")
        if not 1 <= self.seq <= MAX_SEQ:
            raise ValueError(f"seq must be in 1..{MAX_SEQ}, got {self.seq}")
        if self.sender == self.receiver:
            raise ValueError("sender and receiver must differ")
        if len(self.payloads) not in (1, 2):
            raise ValueError(f"payload count must be 1 or 2, got {len(self.payloads)}")
        for p in self.payloads:
            if not isinstance(p, np.ndarray) or p.ndim != 2 or p.dtype != np.float64:
                raise ValueError("payloads must be 2-D float64 arrays")
            if p.shape[0] < 1 or p.shape[1] < 1:
                raise ValueError(f"payload dimensions must be positive, got {p.shape}")
            if not np.all(np.isfinite(p)):
                raise ValueError("payloads must be finite")

    @property
    def encoded_size(self) -> int:
        """Exact byte length of this message's wire frame."""
        # header(27) + per payload dims(8) + entries(8 each) + crc32(4)
        return 27 + sum(8 + p.size * 8 for p in self.payloads) + 4

    def payload_shapes(self) -> list[tuple[int, int]]:
        return [tuple(p.shape) for p in self.payloads]
