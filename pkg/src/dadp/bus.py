"""Message bus between the ETC and the players, with an information-flow audit.

Every ETC/player exchange is a ``Message`` on a dedicated channel. Each
payload field carries its owner and an information class; the auditor
replays the log and flags any field that reaches a party outside the set
of parties entitled to it.
"""
from __future__ import annotations

import enum
import itertools
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import RoutingError

ETC = "ETC"


class InfoClass(str, enum.Enum):
    PRIVATE = "private"
    SEMI_PUBLIC = "semi_public"
    PUBLIC = "public"


# Field names and their information class.
PRIVATE_FIELDS = frozenset({"p", "q", "mu", "omega", "z", "x", "d", "s"})
COEFFICIENT_FIELDS = frozenset({"alpha", "beta", "m", "n"})
SEMI_PUBLIC_FIELDS = frozenset({"est_total_supply", "est_total_demand"})
PUBLIC_FIELDS = frozenset({"b", "a"})

RULE_PRIVATE = "a"
RULE_COEFFICIENT = "b"
RULE_CROSS_SIDE = "c"


def field_class(name) -> InfoClass:
    if name in PRIVATE_FIELDS or name in COEFFICIENT_FIELDS:
        return InfoClass.PRIVATE
    if name in SEMI_PUBLIC_FIELDS:
        return InfoClass.SEMI_PUBLIC
    if name in PUBLIC_FIELDS:
        return InfoClass.PUBLIC
    raise ValueError(f"unknown payload field {name!r}")


@dataclass(frozen=True)
class Endpoint:
    role: str  # "ETC", "LA" or "ESP"
    id: str

    def __str__(self):
        return self.id if self.role == ETC else f"{self.role}:{self.id}"


ETC_ENDPOINT = Endpoint(ETC, ETC)


@dataclass(frozen=True)
class Field:
    """One tagged payload entry; ``owner`` is None for aggregates."""

    name: str
    value: float
    owner: Optional[str] = None
    info_class: InfoClass = None

    def __post_init__(self):
        if self.info_class is None:
            object.__setattr__(self, "info_class", field_class(self.name))


@dataclass(frozen=True)
class Channel:
    """Bidirectional ETC-to-player link; the only kind of link there is."""

    player: Endpoint
    visibility: InfoClass = InfoClass.PRIVATE

    @property
    def endpoints(self):
        return (ETC_ENDPOINT, self.player)


@dataclass(frozen=True)
class Message:
    id: int
    sender: Endpoint
    receiver: Endpoint
    m: int
    n: int
    k: int
    fields: tuple

    def to_dict(self):
        return {
            "id": self.id, "sender": [self.sender.role, self.sender.id],
            "receiver": [self.receiver.role, self.receiver.id],
            "m": self.m, "n": self.n, "k": self.k,
            "fields": [{"name": f.name, "value": f.value, "owner": f.owner,
                        "class": f.info_class.value} for f in self.fields],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            id=int(data["id"]), sender=Endpoint(*data["sender"]),
            receiver=Endpoint(*data["receiver"]), m=int(data["m"]), n=int(data["n"]),
            k=int(data["k"]),
            fields=tuple(Field(f["name"], f["value"], f["owner"], InfoClass(f["class"]))
                         for f in data["fields"]))


@dataclass(frozen=True)
class AuditViolation:
    message_id: int
    field: str
    owner: Optional[str]
    rule: str
    m: int
    n: int
    k: int
    detail: str = ""

    def __str__(self):
        return (f"message {self.message_id} (m={self.m}, n={self.n}, k={self.k}): "
                f"field {self.field} of {self.owner} breaks rule ({self.rule}): {self.detail}")


class MessageBus:
    """Routes messages over ETC/player channels and keeps the full log."""

    def __init__(self, la_ids=(), esp_ids=()):
        self.channels = {}
        for pid in la_ids:
            self.add_player("LA", pid)
        for pid in esp_ids:
            self.add_player("ESP", pid)
        self.log = []
        self.bulletin = []
        self.inboxes = {}
        self._ids = itertools.count()

    def add_player(self, role, pid):
        if role not in ("LA", "ESP"):
            raise ValueError(f"unknown role {role!r}")
        ep = Endpoint(role, pid)
        self.channels[ep] = Channel(ep)
        return ep

    def endpoint(self, pid) -> Endpoint:
        if pid == ETC:
            return ETC_ENDPOINT
        for ep in self.channels:
            if ep.id == pid:
                return ep
        raise RoutingError(f"unknown party {pid!r}")

    def channel_for(self, sender: Endpoint, receiver: Endpoint) -> Channel:
        if sender == ETC_ENDPOINT and receiver in self.channels:
            return self.channels[receiver]
        if receiver == ETC_ENDPOINT and sender in self.channels:
            return self.channels[sender]
        raise RoutingError(f"no channel between {sender} and {receiver}")

    def send(self, sender, receiver, fields, m=0, n=0, k=0) -> Message:
        msg = Message(next(self._ids), sender, receiver, m, n, k, tuple(fields))
        return self.route(msg)

    def route(self, msg: Message) -> Message:
        """Deliver, log, and mirror public fields to the bulletin."""
        self.channel_for(msg.sender, msg.receiver)
        self.log.append(msg)
        self.inboxes.setdefault(msg.receiver, []).append(msg)
        for f in msg.fields:
            if f.info_class is InfoClass.PUBLIC:
                self.bulletin.append((msg.id, f))
        return msg


def audit(log):
    """Flow-rule violations in a message log.

    Rules: (a) a private field of player X reaches someone other than X or
    the ETC; (b) a value or cost coefficient appears in any message;
    (c) a per-player quantity (an LA's ``d`` or an ESP's ``s``) reaches the
    other side of the market. A field triggers at most one rule, checked in
    the order (b), (c), (a).

    Args:
        log: messages in send order.
    """
    out = []
    for msg in log:
        for f in msg.fields:
            rule = detail = None
            if f.name in COEFFICIENT_FIELDS:
                rule, detail = RULE_COEFFICIENT, "coefficients never leave their owner"
            elif f.info_class is InfoClass.PRIVATE and f.owner is not None:
                # d only ever belongs to an LA and s to an ESP.
                crosses = ((f.name == "d" and msg.receiver.role == "ESP")
                           or (f.name == "s" and msg.receiver.role == "LA"))
                if crosses:
                    rule, detail = RULE_CROSS_SIDE, f"quantity sent to {msg.receiver}"
                elif msg.receiver.id not in (f.owner, ETC):
                    rule, detail = RULE_PRIVATE, f"private value sent to {msg.receiver}"
            if rule is not None:
                out.append(AuditViolation(msg.id, f.name, f.owner, rule, msg.m, msg.n, msg.k,
                                          detail))
    return out


class BusRelay:
    """Carries the DADP exchanges over a ``MessageBus``.

    The driver hands every outgoing signal to the relay and uses what comes
    back, so players act only on delivered message contents.
    """

    def __init__(self, bus: MessageBus, la_ids, esp_ids):
        self.bus = bus
        self.ids = {"demand": list(la_ids), "supply": list(esp_ids)}
        self.eps = {side: [bus.endpoint(pid) for pid in ids] for side, ids in self.ids.items()}
        self.m = 0
        self.n = 0

    def _names(self, side):
        if side == "demand":
            return "p", "z", "mu", "d", "b", "est_total_supply"
        return "q", "x", "omega", "s", "a", "est_total_demand"

    def weights(self, side, m, n, w, target):
        self.m, self.n = m, n
        wname, *_, total_name = self._names(side)
        out = np.empty(len(w))
        for i, (pid, ep) in enumerate(zip(self.ids[side], self.eps[side])):
            msg = self.bus.send(ETC_ENDPOINT, ep,
                                [Field(wname, float(w[i]), pid), Field(total_name, float(target))],
                                m, n, 0)
            out[i] = msg.fields[0].value
        return out

    def signals(self, side, k, est, price):
        _, ename, pname, *_ = self._names(side)
        est_out = np.empty(len(est))
        price_out = np.empty(len(price))
        for i, (pid, ep) in enumerate(zip(self.ids[side], self.eps[side])):
            msg = self.bus.send(ETC_ENDPOINT, ep,
                                [Field(ename, float(est[i]), pid), Field(pname, float(price[i]), pid)],
                                self.m, self.n, k)
            est_out[i] = msg.fields[0].value
            price_out[i] = msg.fields[1].value
        return est_out, price_out

    def responses(self, side, k, qty, quotes):
        *_, qname, quote_name, _ = self._names(side)
        q_out = np.empty(len(qty))
        quote_out = np.empty(len(quotes))
        for i, (pid, ep) in enumerate(zip(self.ids[side], self.eps[side])):
            msg = self.bus.send(ep, ETC_ENDPOINT,
                                [Field(qname, float(qty[i]), pid),
                                 Field(quote_name, float(quotes[i]), pid)],
                                self.m, self.n, k)
            q_out[i] = msg.fields[0].value
            quote_out[i] = msg.fields[1].value
        return q_out, quote_out

    def exchange(self, m, name, value):
        """Hand an aggregate estimate to the side that needs it."""
        side = "supply" if name in ("est_total_demand", "estimated_total_demand") else "demand"
        fname = "est_total_demand" if side == "supply" else "est_total_supply"
        for ep in self.eps[side]:
            self.bus.send(ETC_ENDPOINT, ep, [Field(fname, float(value))], m, 0, 0)


def seeded_violations(bus: MessageBus, la_ids, esp_ids, m=0):
    """Send ten rule-breaking messages, one per rule and field class.

    Six leak a private signal or weight to a peer (rule a), two carry a
    coefficient (rule b) and two move a per-player quantity across sides
    (rule c). Returns the messages sent.
    """
    la1, la2 = bus.endpoint(la_ids[0]), bus.endpoint(la_ids[1])
    esp1, esp2 = bus.endpoint(esp_ids[0]), bus.endpoint(esp_ids[1])
    plan = [
        (ETC_ENDPOINT, la2, Field("p", 0.5, la1.id)),
        (ETC_ENDPOINT, esp2, Field("q", 0.3, esp1.id)),
        (ETC_ENDPOINT, la2, Field("mu", 4.0, la1.id)),
        (ETC_ENDPOINT, esp2, Field("omega", 4.0, esp1.id)),
        (ETC_ENDPOINT, la2, Field("z", 2.0, la1.id)),
        (ETC_ENDPOINT, esp2, Field("x", 2.0, esp1.id)),
        (la1, ETC_ENDPOINT, Field("alpha", 10.0, la1.id)),
        (esp1, ETC_ENDPOINT, Field("m", 0.5, esp1.id)),
        (ETC_ENDPOINT, esp1, Field("d", 3.0, la_ids[-1])),
        (ETC_ENDPOINT, la1, Field("s", 3.0, esp_ids[-1])),
    ]
    return [bus.send(src, dst, [f], m, 0, 0) for src, dst, f in plan]


def write_log(log, path):
    with open(path, "w", encoding="utf-8") as fh:
        for msg in log:
            fh.write(json.dumps(msg.to_dict()) + "\n")


def read_log(path):
    with open(path, encoding="utf-8") as fh:
        return [Message.from_dict(json.loads(line)) for line in fh if line.strip()]
