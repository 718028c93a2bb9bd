"""Collections and channels over CoAP."""

from .broker import Broker, Channel, Subscription
from .client import ExchangeClient
from .endpoint import Endpoint, MessageProtection, Observation, TransmissionParams
from .message import CF_TINYSTIX, CF_TINYSTIX_COSE, Block, Code, Message, Opt, Type
from .repository import Collection, CollectionStore, Entry, Envelope, FilterSpec, Status
from .server import ExchangeServer, make_inspector
from .transport import LoopbackNetwork, LoopbackTransport, UdpTransport

__all__ = [
    "Block", "Broker", "CF_TINYSTIX", "CF_TINYSTIX_COSE", "Channel", "Code", "Collection",
    "CollectionStore", "Endpoint", "Entry", "Envelope", "ExchangeClient", "ExchangeServer",
    "FilterSpec", "LoopbackNetwork", "LoopbackTransport", "Message", "MessageProtection",
    "Observation", "Opt", "Status", "Subscription", "TransmissionParams", "Type",
    "UdpTransport", "make_inspector",
]
