"""Wire protocol and endpoint runtime between the RAN environment and the xApp."""

from .endpoints import (FALLBACK, FRESH, REUSED, RanStatus, RoundInfo, XappStatus,
                        run_ran_endpoint, run_xapp_endpoint)
from .messages import (Ack, Bye, DecodeError, E2Message, KpmReport, LineBuffer, SliceCommand,
                       Subscribe, UnsupportedMessageError, decode, encode, specs_digest)
from .transport import (QueueTransport, SocketTransport, Transport, TransportClosed,
                        inproc_pair, socket_accept, socket_connect, socket_listen)

__all__ = [
    "Ack", "Bye", "DecodeError", "E2Message", "FALLBACK", "FRESH", "KpmReport", "LineBuffer",
    "QueueTransport", "REUSED", "RanStatus", "RoundInfo", "SliceCommand", "SocketTransport",
    "Subscribe", "Transport", "TransportClosed", "UnsupportedMessageError", "XappStatus",
    "decode", "encode", "inproc_pair", "run_ran_endpoint", "run_xapp_endpoint",
    "socket_accept", "socket_connect", "socket_listen", "specs_digest",
]
