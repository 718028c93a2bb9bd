"""Corpus loading: MITRE ATT&CK bundles and MISP feeds converted to STIX 2.1.

Both loaders end with the same preprocessing: objects of non-native types are
dropped and the rest lose every non-native property (``strip_non_native``).
"""

from __future__ import annotations

import json
import logging
import os
import re
import uuid
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping

import cbor2

from .codec import from_tinystix, to_tinystix
from .errors import (
    FileUnreadable,
    ManifestMissing,
    NotABundle,
    TinyStixError,
    UnsupportedAttributeType,
)
from .model import (
    Bundle,
    Identifier,
    StixObject,
    from_dict,
    is_native_type,
    make_bundle,
    strip_non_native,
)
from .vocab import Dictionary

log = logging.getLogger(__name__)

DATA_ENV_VAR = "TINYSTIX_DATA"
ATTACK_DOMAINS = ("enterprise", "ics", "mobile")
CORPORA = ("circl",) + ATTACK_DOMAINS


@dataclass
class CorpusSnapshot:
    name: str
    objects: list
    source_version: str = "unknown"
    warnings: list = field(default_factory=list)
    dropped: Counter = field(default_factory=Counter)

    def type_counts(self) -> Counter:
        return Counter(o.object_type for o in self.objects)

    def __len__(self) -> int:
        return len(self.objects)


def data_dir(path=None) -> Path:
    """Root of the pinned corpora: *path*, ``$TINYSTIX_DATA`` or ``./data``."""
    return Path(path or os.environ.get(DATA_ENV_VAR) or "data")


def read_pins(root=None) -> dict:
    """Upstream version labels from ``pins.json`` in *root* or its parent."""
    base = data_dir(root)
    for p in (base / "pins.json", base.parent / "pins.json"):
        if p.exists():
            return json.loads(p.read_text())
    return {}


# -- ATT&CK -----------------------------------------------------------------

def upgrade_to_21(raw: Mapping) -> dict:
    """Bring a STIX 2.0 object to 2.1 shape without inventing content.

    ``spec_version`` is inserted right after ``type``; malware without
    ``is_family`` gets ``true`` (ATT&CK software entries are families).
    """
    out = {}
    for k, v in raw.items():
        out[k] = v
        if k == "type" and "spec_version" not in raw and raw.get("type") != "bundle":
            out["spec_version"] = "2.1"
    if out.get("type") == "malware" and "is_family" not in out:
        out["is_family"] = True
    return out


def preprocess(raw_objects: Iterable[Mapping], snapshot: CorpusSnapshot) -> list:
    kept = []
    for raw in raw_objects:
        t = raw.get("type") if isinstance(raw, Mapping) else None
        if not isinstance(t, str) or not is_native_type(t) or t == "bundle":
            snapshot.dropped[str(t)] += 1
            continue
        try:
            obj = from_dict(upgrade_to_21(raw))
        except TinyStixError as exc:
            snapshot.warnings.append(f"{raw.get('id')}: {exc}")
            snapshot.dropped[t] += 1
            continue
        kept.append(strip_non_native(obj))
    return kept


def _read_json(path: Path):
    try:
        with open(path, "rb") as fh:
            return json.load(fh)
    except (OSError, ValueError) as exc:
        raise FileUnreadable(f"{path}: {exc}") from None


def attack_bundle_path(root, domain: str) -> Path:
    root = Path(root)
    if root.is_file():
        return root
    for candidate in (root / f"{domain}-attack.json", root / "attack" / f"{domain}-attack.json"):
        if candidate.exists():
            return candidate
    return root / "attack" / f"{domain}-attack.json"


def load_attack_corpus(path, domain: str, source_version: str | None = None) -> CorpusSnapshot:
    """Load one ATT&CK domain bundle.

    Parameters
    ----------
    path : path-like
        Bundle file, or a directory holding ``<domain>-attack.json``.
    domain : str
        ``enterprise``, ``ics`` or ``mobile``.
    source_version : str, optional
        Upstream release label; defaults to the entry in ``pins.json``.
    """
    file = attack_bundle_path(path, domain)
    data = _read_json(file)
    if not isinstance(data, dict) or data.get("type") != "bundle":
        raise NotABundle(f"{file} is not a STIX bundle")
    if source_version is None:
        pins = read_pins(Path(path) if Path(path).is_dir() else Path(path).parent)
        source_version = pins.get(domain, {}).get("version", "unknown")
    snap = CorpusSnapshot(name=domain, objects=[], source_version=source_version)
    snap.objects = preprocess(data.get("objects", []), snap)
    log.info("%s: %d objects kept, %d dropped", domain, len(snap.objects), sum(snap.dropped.values()))
    return snap


# -- MISP -> STIX 2.1 -------------------------------------------------------

_RELATIONSHIP_NS = uuid.UUID("76beed5f-7251-457e-8c2a-b45f7b589d3d")

TLP_MARKINGS = {
    "tlp:white": ("613f2e26-407d-48c7-9eca-b8e91df99dc9", "white"),
    "tlp:green": ("34098fce-860f-48ae-8e50-ebd3cc5e41da", "green"),
    "tlp:amber": ("f88d31f6-486f-44da-b317-01333bde0b82", "amber"),
    "tlp:red": ("5e57c739-391a-4eb3-b6be-7d15ca92d5ed", "red"),
}

_HASH_NAMES = {
    "md5": "MD5", "sha1": "SHA-1", "sha256": "SHA-256", "sha512": "SHA-512",
    "sha3-256": "SHA3-256", "sha3-512": "SHA3-512", "ssdeep": "SSDEEP",
    "tlsh": "TLSH",
}
_COMPOSITE_SEPARATORS = ("|", "-")


def _ts_ms(dt: datetime) -> str:
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{dt.microsecond // 1000:03d}Z"


def _ts(dt: datetime) -> str:
    if dt.microsecond:
        return dt.strftime("%Y-%m-%dT%H:%M:%S.%f").rstrip("0") + "Z"
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def _from_epoch(value) -> datetime:
    return datetime.fromtimestamp(int(value), timezone.utc)


def _from_misp_time(value: str) -> datetime:
    dt = datetime.fromisoformat(value.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def _pattern_value(value: str) -> str:
    return value.replace("\\", "\\\\").replace("'", "\\'")


def _split_composite(value: str):
    for sep in _COMPOSITE_SEPARATORS:
        if sep in value:
            return value.split(sep, 1)
    return None


_PATTERN_HASH_NAMES = {
    "SHA1": "SHA-1", "SHA224": "SHA-224", "SHA256": "SHA-256", "SHA384": "SHA-384", "SHA512": "SHA-512",
    "SHA3224": "SHA3-224", "SHA3256": "SHA3-256", "SHA3384": "SHA3-384", "SHA3512": "SHA3-512",
}
_KEYWORD_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def _hash_pattern_name(misp_type: str) -> str:
    """Hash key as a pattern path segment, e.g. ``sha256`` -> ``'SHA-256'``."""
    if "/" in misp_type:
        name = f"SHA{misp_type.split('/')[1]}"
    else:
        name = misp_type.replace("-", "").upper()
    name = _PATTERN_HASH_NAMES.get(name, name)
    return name if _KEYWORD_RE.match(name) else f"'{_pattern_value(name)}'"


def _address_type(value: str) -> str:
    return "ipv6-addr" if ":" in value else "ipv4-addr"


@dataclass
class MispEvent:
    uuid: str
    info: str = ""
    date: str = ""
    timestamp: int | None = None
    publish_timestamp: int | None = None
    published: bool = False
    orgc: dict = field(default_factory=dict)
    tags: list = field(default_factory=list)
    attributes: list = field(default_factory=list)
    objects: list = field(default_factory=list)

    @classmethod
    def from_dict(cls, data: Mapping) -> "MispEvent":
        ev = data.get("Event", data)
        return cls(
            uuid=ev["uuid"],
            info=ev.get("info", ""),
            date=ev.get("date", ""),
            timestamp=int(ev["timestamp"]) if ev.get("timestamp") is not None else None,
            publish_timestamp=int(ev["publish_timestamp"]) if ev.get("publish_timestamp") else None,
            published=bool(ev.get("published", False)),
            orgc=dict(ev.get("Orgc") or {}),
            tags=[t["name"] for t in ev.get("Tag", []) if "name" in t],
            attributes=list(ev.get("Attribute", [])),
            objects=list(ev.get("Object", [])),
        )


class _Converter:
    """One event's worth of state; mirrors the misp-stix object layout."""

    def __init__(self, event: MispEvent, warnings: list):
        self.event = event
        self.warnings = warnings
        self.objects: list[dict] = []
        self.object_refs: list[str] = []
        self.relationships: list[dict] = []
        self.markings: dict[str, dict] = {}
        self.event_time = _from_epoch(event.timestamp) if event.timestamp else datetime.now(timezone.utc)
        self.identity_id = None
        self.shared: dict = {}

    # -- helpers

    def _time(self, layer: Mapping) -> datetime:
        ts = layer.get("timestamp")
        return _from_epoch(ts) if ts is not None else self.event_time

    def _labels(self, attr: Mapping) -> list:
        return [f'misp:{f}="{attr[f]}"' for f in ("type", "category") if attr.get(f)]

    def _marking_refs(self, tags: Iterable[str], args: dict) -> None:
        refs = []
        for tag in tags:
            tlp = TLP_MARKINGS.get(tag.lower())
            if tlp is None:
                args.setdefault("labels", []).append(tag)
                continue
            mid = f"marking-definition--{tlp[0]}"
            if mid not in self.markings:
                self.markings[mid] = {
                    "type": "marking-definition", "spec_version": "2.1", "id": mid,
                    "created": "2017-01-20T00:00:00.000Z", "definition_type": "tlp",
                    "name": f"TLP:{tlp[1].upper()}", "definition": {"tlp": tlp[1]},
                }
            refs.append(mid)
        if refs:
            args["object_marking_refs"] = refs

    def _add(self, obj: dict, ref: bool = True) -> dict:
        self.objects.append(obj)
        if ref:
            self.object_refs.append(obj["id"])
        return obj

    # -- event level

    def identity(self) -> None:
        org = self.event.orgc
        if not org.get("uuid") or not org.get("name"):
            self.warnings.append(f"event {self.event.uuid}: missing Orgc")
            return
        self.identity_id = f"identity--{org['uuid']}"
        self.shared = {"created_by_ref": self.identity_id}
        self._add({
            "type": "identity", "spec_version": "2.1", "id": self.identity_id,
            "created": _ts_ms(self.event_time), "modified": _ts_ms(self.event_time),
            "name": org["name"], "identity_class": "organization",
        }, ref=False)

    def report(self) -> dict:
        ev = self.event
        args = {
            "type": "report", "spec_version": "2.1", "id": None, **self.shared,
            "created": _ts_ms(self.event_time), "modified": _ts_ms(self.event_time),
            "name": ev.info or "MISP Event",
            "labels": ["Threat-Report", 'misp:tool="MISP-STIX-Converter"'],
        }
        self._marking_refs(ev.tags, args)
        for rel in self.relationships:
            self._add(rel, ref=True)
        for marking in self.markings.values():
            self.objects.append(marking)
        if ev.published and ev.publish_timestamp:
            args["id"] = f"report--{ev.uuid}"
            args["published"] = _ts(_from_epoch(ev.publish_timestamp))
        else:
            args["id"] = f"grouping--{ev.uuid}"
            args["type"] = "grouping"
            args["context"] = "suspicious-activity"
        if not self.object_refs:
            self._add({
                "type": "note", "spec_version": "2.1", "id": f"note--{ev.uuid}", **self.shared,
                "created": _ts_ms(self.event_time), "modified": _ts_ms(self.event_time),
                "content": "This MISP Event is empty and contains no attribute, object, galaxy or tag.",
                "object_refs": [args["id"]],
            })
        args["object_refs"] = list(self.object_refs)
        return args

    # -- attribute level

    def observed(self, layer: Mapping, scos: list, labels: list, tags: Iterable[str]) -> dict:
        t = self._time(layer)
        first = _from_misp_time(layer["first_seen"]) if layer.get("first_seen") else t
        last = _from_misp_time(layer["last_seen"]) if layer.get("last_seen") else t
        if first > last:
            if layer.get("last_seen"):
                first = last
            else:
                last = first
        od = {
            "type": "observed-data", "spec_version": "2.1",
            "id": f"observed-data--{layer['uuid']}", **self.shared,
            "created": _ts_ms(t), "modified": _ts_ms(t),
            "first_observed": _ts(first), "last_observed": _ts(last),
            "number_observed": 1, "object_refs": [s["id"] for s in scos],
            "labels": labels,
        }
        self._marking_refs(tags, od)
        self._add(od)
        for sco in scos:
            self._add(sco)
        return od

    def indicator(self, layer: Mapping, pattern: str, labels: list, category: str,
                  tags: Iterable[str], pattern_type: str = "stix") -> dict:
        t = self._time(layer)
        ind = {
            "type": "indicator", "spec_version": "2.1",
            "id": f"indicator--{layer['uuid']}", **self.shared,
            "created": _ts_ms(t), "modified": _ts_ms(t),
            "pattern": pattern, "pattern_type": pattern_type,
            "pattern_version": "2.1", "valid_from": _ts(t),
            "kill_chain_phases": [{"kill_chain_name": "misp-category", "phase_name": category}],
            "labels": labels,
        }
        if layer.get("comment"):
            ind["description"] = layer["comment"]
        self._marking_refs(tags, ind)
        return self._add(ind)

    def based_on(self, indicator: dict, observed: dict) -> None:
        src, tgt = indicator["id"], observed["id"]
        rid = uuid.uuid5(_RELATIONSHIP_NS, f"{src} - based-on - {tgt}")
        self.relationships.append({
            "type": "relationship", "spec_version": "2.1", "id": f"relationship--{rid}",
            "created": indicator["modified"], "modified": indicator["modified"],
            "relationship_type": "based-on", "source_ref": src, "target_ref": tgt,
        })

    def attribute(self, attr: Mapping) -> None:
        atype = attr.get("type", "")
        handler = ATTRIBUTE_MAPPING.get(atype)
        if handler is None:
            raise UnsupportedAttributeType(atype)
        tags = [t["name"] for t in attr.get("Tag", []) if "name" in t]
        labels = self._labels(attr)
        result = handler(attr)
        if result is None:
            raise UnsupportedAttributeType(atype)
        kind, payload = result
        if kind == "sdo":
            t = self._time(attr)
            payload.update({"created": _ts_ms(t), "modified": _ts_ms(t), "labels": labels})
            payload = {k: payload[k] for k in _sdo_order(payload)}
            self._marking_refs(tags, payload)
            self._add(_with_shared(payload, self.shared))
            return
        if kind == "pattern-only":
            pattern, ptype = payload
            self.indicator(attr, pattern, labels, attr.get("category", ""), tags, ptype)
            return
        scos, pattern = payload
        od = self.observed(attr, scos, labels, tags)
        if attr.get("to_ids") and pattern:
            ind = self.indicator(attr, pattern, list(labels), attr.get("category", ""), tags)
            self.based_on(ind, od)

    def misp_object(self, mobj: Mapping) -> None:
        name = mobj.get("name", "")
        handler = OBJECT_MAPPING.get(name)
        if handler is None:
            raise UnsupportedAttributeType(f"object:{name}")
        attrs = mobj.get("Attribute", [])
        scos, _ = handler(mobj, attrs)
        if not scos:
            raise UnsupportedAttributeType(f"object:{name}")
        # the pattern only carries the attributes flagged for detection
        _, pattern_terms = handler(mobj, [a for a in attrs if a.get("to_ids")])
        labels = [f'misp:name="{name}"', f'misp:meta-category="{mobj.get("meta-category", "")}"']
        tags = [t["name"] for a in attrs for t in a.get("Tag", []) if "name" in t]
        od = self.observed(mobj, scos, labels, tags)
        if any(a.get("to_ids") for a in attrs) and pattern_terms:
            ind = self.indicator(
                mobj, "[" + " AND ".join(pattern_terms) + "]", list(labels),
                mobj.get("meta-category", ""), (),
            )
            self.based_on(ind, od)


def _sdo_order(d: dict) -> list:
    head = [k for k in ("type", "spec_version", "id", "created", "modified") if k in d]
    return head + [k for k in d if k not in head]


def _with_shared(obj: dict, shared: dict) -> dict:
    out = {}
    for k, v in obj.items():
        out[k] = v
        if k == "id":
            out.update(shared)
    return out


# attribute handlers return ("sco", (scos, pattern)), ("sdo", dict) or
# ("pattern-only", (pattern, pattern_type))

def _sco(t: str, uid: str, **props) -> dict:
    return {"type": t, "spec_version": "2.1", "id": f"{t}--{uid}", **props}


def _domain(a):
    v = a["value"]
    return "sco", ([_sco("domain-name", a["uuid"], value=v)], f"[domain-name:value = '{_pattern_value(v)}']")


def _domain_ip(a):
    parts = _split_composite(a["value"])
    if parts is None:
        return None
    domain, ip = parts
    atype = _address_type(ip)
    addr_id = f"{atype}--{a['uuid']}"
    scos = [
        _sco("domain-name", a["uuid"], value=domain, resolves_to_refs=[addr_id]),
        _sco(atype, a["uuid"], value=ip),
    ]
    pattern = (f"[domain-name:value = '{_pattern_value(domain)}' AND "
               f"domain-name:resolves_to_refs[*].value = '{_pattern_value(ip)}']")
    return "sco", (scos, pattern)


def _ip(a):
    value = a["value"]
    side = a["type"].split("-")[1]
    atype = _address_type(value)
    addr_id = f"{atype}--{a['uuid']}"
    scos = [
        _sco("network-traffic", a["uuid"], **{f"{side}_ref": addr_id}, protocols=["tcp"]),
        _sco(atype, a["uuid"], value=value),
    ]
    v = _pattern_value(value)
    pattern = (f"[network-traffic:{side}_ref.type = '{atype}' AND "
               f"network-traffic:{side}_ref.value = '{v}']")
    return "sco", (scos, pattern)


def _ip_port(a):
    parts = _split_composite(a["value"])
    if parts is None:
        return None
    ip, port = parts
    side = a["type"].split("|")[0].split("-")[1]
    atype = _address_type(ip)
    addr_id = f"{atype}--{a['uuid']}"
    port_value = int(port) if port.isdigit() else port
    scos = [
        _sco("network-traffic", a["uuid"], **{f"{side}_ref": addr_id, f"{side}_port": port_value},
             protocols=["tcp"]),
        _sco(atype, a["uuid"], value=ip),
    ]
    pattern = (f"[network-traffic:{side}_ref.type = '{atype}' AND "
               f"network-traffic:{side}_ref.value = '{_pattern_value(ip)}' AND "
               f"network-traffic:{side}_port = '{_pattern_value(port)}']")
    return "sco", (scos, pattern)


def _hostname_port(a):
    parts = _split_composite(a["value"])
    if parts is None:
        return None
    host, port = parts
    dom_id = f"domain-name--{a['uuid']}"
    scos = [
        _sco("domain-name", a["uuid"], value=host),
        _sco("network-traffic", a["uuid"], dst_port=int(port) if port.isdigit() else port,
             dst_ref=dom_id, protocols=["tcp"]),
    ]
    pattern = (f"[domain-name:value = '{_pattern_value(host)}' AND "
               f"network-traffic:dst_port = '{_pattern_value(port)}']")
    return "sco", (scos, pattern)


def _url(a):
    v = a["value"]
    return "sco", ([_sco("url", a["uuid"], value=v)], f"[url:value = '{_pattern_value(v)}']")


def _hash(a):
    htype = a["type"]
    name = _HASH_NAMES.get(htype, _hash_pattern_name(htype))
    v = a["value"].strip()
    return "sco", (
        [_sco("file", a["uuid"], hashes={name: v})],
        f"[file:hashes.{_hash_pattern_name(htype)} = '{_pattern_value(v)}']",
    )


def _filename_hash(a):
    htype = a["type"].split("|")[1]
    parts = _split_composite(a["value"]) if "|" in a["value"] else None
    if parts is None:
        return None
    fname, v = parts
    name = _HASH_NAMES.get(htype, _hash_pattern_name(htype))
    return "sco", (
        [_sco("file", a["uuid"], hashes={name: v}, name=fname)],
        f"[file:name = '{_pattern_value(fname)}' AND "
        f"file:hashes.{_hash_pattern_name(htype)} = '{_pattern_value(v)}']",
    )


def _filename(a):
    v = a["value"]
    return "sco", ([_sco("file", a["uuid"], name=v)], f"[file:name = '{_pattern_value(v)}']")


def _email(a):
    v = a["value"]
    return "sco", ([_sco("email-addr", a["uuid"], value=v)], f"[email-addr:value = '{_pattern_value(v)}']")


def _email_src(a):
    v = a["value"]
    addr_id = f"email-addr--{a['uuid']}"
    return "sco", (
        [_sco("email-message", a["uuid"], is_multipart=False, from_ref=addr_id),
         _sco("email-addr", a["uuid"], value=v)],
        f"[email-message:from_ref.value = '{_pattern_value(v)}']",
    )


def _email_dst(a):
    v = a["value"]
    addr_id = f"email-addr--{a['uuid']}"
    return "sco", (
        [_sco("email-message", a["uuid"], is_multipart=False, to_refs=[addr_id]),
         _sco("email-addr", a["uuid"], value=v)],
        f"[email-message:to_refs[*].value = '{_pattern_value(v)}']",
    )


def _email_field(prop: str, pattern_path: str, wrap=lambda v: v):
    def handler(a):
        v = a["value"]
        return "sco", (
            [_sco("email-message", a["uuid"], is_multipart=False, **{prop: wrap(v)})],
            f"[email-message:{pattern_path} = '{_pattern_value(v)}']",
        )
    return handler


def _email_attachment(a):
    v = a["value"]
    file_id = f"file--{a['uuid']}"
    return "sco", (
        [_sco("email-message", a["uuid"], is_multipart=True, body_multipart=[
            {"content_disposition": f"attachment; filename='{v}'", "body_raw_ref": file_id}]),
         _sco("file", a["uuid"], name=v)],
        f"[email-message:body_multipart[*].body_raw_ref.name = '{_pattern_value(v)}']",
    )


def _mutex(a):
    v = a["value"]
    return "sco", ([_sco("mutex", a["uuid"], name=v)], f"[mutex:name = '{_pattern_value(v)}']")


def _regkey(a):
    v = a["value"].strip()
    return "sco", (
        [_sco("windows-registry-key", a["uuid"], key=v)],
        f"[windows-registry-key:key = '{_pattern_value(v)}']",
    )


def _regkey_value(a):
    parts = a["value"].split("|", 1)
    if len(parts) != 2:
        return _regkey(a)
    key, data = (p.strip() for p in parts)
    return "sco", (
        [_sco("windows-registry-key", a["uuid"], key=key, values=[{"data": data}])],
        f"[windows-registry-key:key = '{_pattern_value(key)}' AND "
        f"windows-registry-key:values.data = '{_pattern_value(data)}']",
    )


def _as(a):
    digits = "".join(c for c in str(a["value"]) if c.isdigit())
    if not digits:
        return None
    return "sco", (
        [_sco("autonomous-system", a["uuid"], number=int(digits))],
        f"[autonomous-system:number = '{int(digits)}']",
    )


def _mac(a):
    v = a["value"].lower()
    return "sco", ([_sco("mac-addr", a["uuid"], value=v)], f"[mac-addr:value = '{_pattern_value(v)}']")


def _x509(a):
    htype = a["type"].split("-")[-1]
    v = a["value"]
    return "sco", (
        [_sco("x509-certificate", a["uuid"], hashes={_HASH_NAMES.get(htype, htype.upper()): v})],
        f"[x509-certificate:hashes.{_hash_pattern_name(htype)} = '{_pattern_value(v)}']",
    )


def _github_user(a):
    v = a["value"]
    return "sco", (
        [_sco("user-account", a["uuid"], account_type="github", account_login=v)],
        f"[user-account:account_type = 'github' AND user-account:account_login = '{_pattern_value(v)}']",
    )


def _attachment(a):
    if not a.get("data"):
        return _filename(a)
    v = a["value"]
    art_id = f"artifact--{a['uuid']}"
    return "sco", (
        [_sco("file", a["uuid"], name=v, content_ref=art_id),
         _sco("artifact", a["uuid"], payload_bin=a["data"])],
        f"[file:name = '{_pattern_value(v)}' AND file:content_ref.payload_bin = '{a['data']}']",
    )


def _malware_sample(a):
    parts = a["value"].split("|", 1)
    art_id = f"artifact--{a['uuid']}"
    fargs = {"content_ref": art_id} if a.get("data") else {}
    if len(parts) == 2:
        fargs = {"name": parts[0], "hashes": {"MD5": parts[1]}, **fargs}
    else:
        fargs = {"name": a["value"], **fargs}
    scos = [_sco("file", a["uuid"], **fargs)]
    if a.get("data"):
        scos.append(_sco("artifact", a["uuid"], payload_bin=a["data"], mime_type="application/zip",
                         encryption_algorithm="mime-type-indicated", decryption_key="infected"))
    pattern = f"[file:name = '{_pattern_value(fargs['name'])}'"
    if "hashes" in fargs:
        pattern += f" AND file:hashes.MD5 = '{parts[1]}'"
    return "sco", (scos, pattern + "]")


def _vulnerability(a):
    return "sdo", {
        "type": "vulnerability", "spec_version": "2.1", "id": f"vulnerability--{a['uuid']}",
        "name": a["value"], "external_references": [{"source_name": "cve", "external_id": a["value"]}],
    }


def _campaign(a):
    return "sdo", {
        "type": "campaign", "spec_version": "2.1", "id": f"campaign--{a['uuid']}", "name": a["value"],
    }


def _patterning(a):
    return "pattern-only", (f"[{a['value']}]", a["type"])


ATTRIBUTE_MAPPING = {
    "AS": _as, "attachment": _attachment, "campaign-name": _campaign,
    "domain": _domain, "hostname": _domain, "domain|ip": _domain_ip,
    "email": _email, "email-src": _email_src, "email-dst": _email_dst,
    "email-subject": _email_field("subject", "subject"),
    "email-body": _email_field("body", "body"),
    "email-header": _email_field("received_lines", "received_lines", lambda v: [v]),
    "email-reply-to": _email_field("additional_header_fields", "additional_header_fields.reply_to",
                                   lambda v: {"Reply-To": v}),
    "email-x-mailer": _email_field("additional_header_fields", "additional_header_fields.x_mailer",
                                   lambda v: {"X-Mailer": v}),
    "email-message-id": _email_field("message_id", "message_id"),
    "email-attachment": _email_attachment,
    "filename": _filename, "github-username": _github_user,
    "hostname|port": _hostname_port, "mac-address": _mac,
    "malware-sample": _malware_sample, "mutex": _mutex,
    "regkey": _regkey, "regkey|value": _regkey_value,
    "vulnerability": _vulnerability,
    "ip-src": _ip, "ip-dst": _ip, "ip-src|port": _ip_port, "ip-dst|port": _ip_port,
    "url": _url, "uri": _url, "link": _url,
    "x509-fingerprint-md5": _x509, "x509-fingerprint-sha1": _x509, "x509-fingerprint-sha256": _x509,
    "yara": _patterning, "sigma": _patterning, "snort": _patterning,
}
for _h in _HASH_NAMES:
    ATTRIBUTE_MAPPING[_h] = _hash
    ATTRIBUTE_MAPPING[f"filename|{_h}"] = _filename_hash


# MISP objects: a reduced template table. Relations without a native home
# travel as x_misp_* custom properties, on the observable and in the pattern.

_FILE_HASH_ORDER = ("md5", "sha1", "sha224", "sha256", "sha384", "sha512", "sha512/224", "sha512/256",
                    "ssdeep", "authentihash", "imphash", "sha3-224", "sha3-256", "sha3-384", "sha3-512",
                    "tlsh", "vhash")


def _relations(attrs) -> dict:
    out: dict = {}
    for a in attrs:
        out.setdefault(a.get("object_relation"), []).append(a)
    return out


def _custom_name(relation: str) -> str:
    return "x_misp_" + re.sub(r"[^a-z0-9_]", "_", relation.lower())


def _segment(name: str) -> str:
    return name if _KEYWORD_RE.match(name) else f"'{_pattern_value(name)}'"


def _take(rel: dict, key: str):
    """First value of *key*; further values stay behind for the custom pass."""
    items = rel.get(key)
    if not items:
        return None
    first = items.pop(0)
    if not items:
        del rel[key]
    return first


def _custom(rel: dict, prefix: str, args: dict, terms: list) -> None:
    for r, items in rel.items():
        vals = [a["value"] for a in items]
        name = _custom_name(r)
        args[name] = vals[0] if len(vals) == 1 else vals
        terms.extend(f"{prefix}:{_segment(name)} = '{_pattern_value(v)}'" for v in vals)
    rel.clear()


def _integer(rel: dict, key: str):
    items = rel.get(key)
    if items and str(items[0]["value"]).isdigit():
        return int(_take(rel, key)["value"])
    return None


def _obj_file(mobj, attrs):
    rel = _relations(attrs)
    args: dict = {}
    terms = []
    hashes = {}
    for h in _FILE_HASH_ORDER:
        a = _take(rel, h)
        if a:
            hashes[_HASH_NAMES.get(h, h.upper())] = a["value"]
            terms.append(f"file:hashes.{_hash_pattern_name(h)} = '{_pattern_value(a['value'])}'")
    if hashes:
        args["hashes"] = hashes
    for key, prop in (("filename", "name"), ("file-encoding", "name_enc"), ("mime-type", "mime_type")):
        a = _take(rel, key)
        if a:
            args[prop] = a["value"]
            terms.append(f"file:{prop} = '{_pattern_value(a['value'])}'")
        if key == "file-encoding":
            size = _integer(rel, "size-in-bytes")
            if size is not None:
                args["size"] = size
    if "size" in args:
        terms.append(f"file:size = '{args['size']}'")
    extra = []
    path = _take(rel, "path")
    if path:
        extra.append(_sco("directory", path["uuid"], path=path["value"]))
        args["parent_directory_ref"] = extra[0]["id"]
        terms.append(f"file:parent_directory_ref.path = '{_pattern_value(path['value'])}'")
    _custom(rel, "file", args, terms)
    if not args:
        return [], []
    return [_sco("file", mobj["uuid"], **args)] + extra, terms


def _obj_domain_ip(mobj, attrs):
    rel = _relations(attrs)
    domains, hostnames, ips = rel.pop("domain", []), rel.pop("hostname", []), rel.pop("ip", [])
    if not domains and not hostnames:
        return [], []
    terms = [f"domain-name:value = '{_pattern_value(a['value'])}'" for a in domains]
    host_field = "x_misp_hostname" if domains else "value"
    terms += [f"domain-name:{host_field} = '{_pattern_value(a['value'])}'" for a in hostnames]
    terms += [f"domain-name:resolves_to_refs[*].value = '{_pattern_value(a['value'])}'" for a in ips]
    scos, refs = [], []
    for a in ips:
        atype = _address_type(a["value"])
        scos.append(_sco(atype, a["uuid"], value=a["value"]))
        refs.append(f"{atype}--{a['uuid']}")
    extra = {"resolves_to_refs": refs} if refs else {}
    if rel:
        # non-standard relations: one domain named after the object
        names = domains + hostnames
        args = {**extra, "value": names[0]["value"]}
        rest = {}
        if len(domains) > 1 or (domains and hostnames):
            rest = {"domain": domains[1:], "hostname": hostnames} if domains else {"hostname": hostnames[1:]}
        rel.update({k: v for k, v in rest.items() if v})
        _custom(rel, "domain-name", args, terms)
        return [_sco("domain-name", mobj["uuid"], **args)] + scos, terms
    for a in hostnames[:1] + domains:
        scos.append(_sco("domain-name", a["uuid"], value=a["value"], **extra))
    return scos, terms


def _obj_ip_port(mobj, attrs):
    rel = _relations(attrs)
    terms = []
    for key, side in (("ip", "dst"), ("ip-src", "src"), ("ip-dst", "dst")):
        for a in rel.get(key, []):
            terms.append(f"(network-traffic:{side}_ref.type = '{_address_type(a['value'])}' AND "
                         f"network-traffic:{side}_ref.value = '{_pattern_value(a['value'])}')")
    for key in ("domain", "hostname"):
        for a in rel.get(key, []):
            terms.append(f"(network-traffic:dst_ref.type = 'domain-name' AND "
                         f"network-traffic:dst_ref.value = '{_pattern_value(a['value'])}')")
    scos, nt, protocols = [], {}, {}
    for key in ("ip-src", "ip-dst", "ip"):
        side = "src_ref" if key == "ip-src" else "dst_ref"
        if side in nt or not rel.get(key):
            continue
        a = _take(rel, key)
        atype = _address_type(a["value"])
        scos.append(_sco(atype, a["uuid"], value=a["value"]))
        nt[side] = f"{atype}--{a['uuid']}"
        protocols[atype.split("-")[0]] = None
    for key, side in (("dst-port", "dst"), ("src-port", "src")):
        port = _integer(rel, key)
        if port is not None:
            nt[f"{side}_port"] = port
            terms.append(f"network-traffic:{side}_port = '{port}'")
    proto = _take(rel, "protocol")
    if proto:
        protocols[proto["value"]] = None
        terms.append(f"network-traffic:x_misp_protocol = '{_pattern_value(proto['value'])}'")
    nt["protocols"] = list(protocols) or ["tcp"]
    # further addresses and domains are already in the pattern
    _custom({k: rel.pop(k) for k in ("ip-src", "ip-dst", "ip", "domain", "hostname") if k in rel},
            "network-traffic", nt, [])
    _custom(rel, "network-traffic", nt, terms)
    return [_sco("network-traffic", mobj["uuid"], **nt)] + scos, terms


def _obj_url(mobj, attrs):
    rel = _relations(attrs)
    a = _take(rel, "url")
    args = {"value": a["value"]} if a else {}
    terms = [f"url:value = '{_pattern_value(a['value'])}'"] if a else []
    _custom(rel, "url", args, terms)
    if not args:
        return [], []
    return [_sco("url", mobj["uuid"], **args)], terms


def _obj_email(mobj, attrs):
    rel = _relations(attrs)
    msg: dict = {"is_multipart": False}
    scos, terms = [], []
    for field in ("to", "cc", "bcc"):
        for n, a in enumerate(rel.get(field, [])):
            terms.append(f"email-message:{field}_refs[{n}].value = '{_pattern_value(a['value'])}'")
    for key, path in (("email-body", "body"), ("from", "from_ref.value"), ("message-id", "message_id"),
                      ("reply-to", "additional_header_fields.reply_to"), ("send-date", "date"),
                      ("subject", "subject"), ("x-mailer", "additional_header_fields.x_mailer")):
        terms.extend(f"email-message:{path} = '{_pattern_value(a['value'])}'" for a in rel.get(key, []))
    src = _take(rel, "from")
    if src:
        scos.append(_sco("email-addr", src["uuid"], value=src["value"]))
        msg["from_ref"] = f"email-addr--{src['uuid']}"
    for field in ("to", "cc", "bcc"):
        refs = []
        for a in rel.pop(field, []):
            scos.append(_sco("email-addr", a["uuid"], value=a["value"]))
            refs.append(f"email-addr--{a['uuid']}")
        if refs:
            msg[f"{field}_refs"] = refs
    for key, prop in (("message-id", "message_id"), ("subject", "subject")):
        a = _take(rel, key)
        if a:
            msg[prop] = a["value"]
    headers = {}
    for key, name in (("reply-to", "Reply-To"), ("x-mailer", "X-Mailer")):
        a = _take(rel, key)
        if a:
            headers[name] = a["value"]
    if headers:
        msg["additional_header_fields"] = headers
    try:
        if rel.get("send-date"):
            msg["date"] = _ts(_from_misp_time(rel["send-date"][0]["value"]))
            _take(rel, "send-date")
    except ValueError:
        pass
    _custom(rel, "email-message", msg, [])
    if len(msg) == 1:
        return [], []
    return [_sco("email-message", mobj["uuid"], **msg)] + scos, terms


def _obj_process(mobj, attrs):
    rel = _relations(attrs)
    args: dict = {}
    terms = []
    pid = _integer(rel, "pid")
    if pid is not None:
        args["pid"] = pid
    for key, prop in (("command-line", "command_line"), ("current-directory", "cwd")):
        a = _take(rel, key)
        if a:
            args[prop] = a["value"]
    for key, prop in (("command-line", "command_line"), ("pid", "pid"), ("current-directory", "cwd")):
        if prop in args:
            terms.append(f"process:{prop} = '{_pattern_value(str(args[prop]))}'")
    extra = []
    image = _take(rel, "image")
    if image:
        extra.append(_sco("file", image["uuid"], name=image["value"]))
        args["image_ref"] = extra[0]["id"]
        terms.append(f"process:image_ref.name = '{_pattern_value(image['value'])}'")
    _custom(rel, "process", args, terms)
    if not args:
        return [], []
    return [_sco("process", mobj["uuid"], **args)] + extra, terms


def _obj_registry_key(mobj, attrs):
    rel = _relations(attrs)
    a = _take(rel, "key")
    if not a:
        return [], []
    args: dict = {"key": a["value"]}
    terms = [f"windows-registry-key:key = '{_pattern_value(a['value'].strip())}'"]
    value: dict = {}
    for key, prop in (("data", "data"), ("data-type", "data_type"), ("name", "name")):
        v = _take(rel, key)
        if v:
            value[prop] = v["value"]
            terms.append(f"windows-registry-key:values[0].{prop} = '{_pattern_value(v['value'].strip())}'")
    if value:
        args["values"] = [value]
    _custom(rel, "windows-registry-key", args, terms)
    return [_sco("windows-registry-key", mobj["uuid"], **args)], terms


def _obj_user_account(mobj, attrs):
    rel = _relations(attrs)
    args = {}
    for rel_name, prop in (("account-type", "account_type"), ("display-name", "display_name"),
                           ("user-id", "user_id"), ("username", "account_login")):
        a = _take(rel, rel_name)
        if a:
            args[prop] = a["value"]
    terms = [f"user-account:{k} = '{_pattern_value(str(v))}'" for k, v in args.items()]
    ext = {}
    for rel_name in ("home_dir", "shell"):
        a = _take(rel, rel_name)
        if a:
            ext[rel_name] = a["value"]
            terms.append(f"user-account:extensions.'unix-account-ext'.{rel_name} = '{_pattern_value(a['value'])}'")
    if ext:
        args["extensions"] = {"unix-account-ext": ext}
    _custom(rel, "user-account", args, terms)
    if not args:
        return [], []
    return [_sco("user-account", mobj["uuid"], **args)], terms


def _obj_x509(mobj, attrs):
    rel = _relations(attrs)
    args: dict = {}
    terms = []
    hashes = {}
    for h in ("md5", "sha1", "sha256"):
        a = _take(rel, f"x509-fingerprint-{h}")
        if a:
            hashes[_HASH_NAMES[h]] = a["value"]
            terms.append(f"x509-certificate:hashes.{_hash_pattern_name(h)} = '{_pattern_value(a['value'])}'")
    if hashes:
        args["hashes"] = hashes
    for rel_name, prop in (("issuer", "issuer"), ("pubkey-info-algorithm", "subject_public_key_algorithm"),
                           ("serial-number", "serial_number"), ("signature_algorithm", "signature_algorithm"),
                           ("subject", "subject"), ("version", "version")):
        a = _take(rel, rel_name)
        if a:
            args[prop] = a["value"]
            terms.append(f"x509-certificate:{prop} = '{_pattern_value(a['value'])}'")
    _custom(rel, "x509-certificate", args, terms)
    if not args:
        return [], []
    return [_sco("x509-certificate", mobj["uuid"], **args)], terms


OBJECT_MAPPING = {
    "file": _obj_file, "domain-ip": _obj_domain_ip, "ip-port": _obj_ip_port,
    "url": _obj_url, "email": _obj_email, "process": _obj_process,
    "registry-key": _obj_registry_key, "user-account": _obj_user_account,
    "x509": _obj_x509,
}


def misp_to_stix(event, warnings: list | None = None) -> Bundle:
    """Convert one MISP event (dict or :class:`MispEvent`) to a STIX 2.1 bundle.

    Unsupported attribute or object types are skipped and reported through
    *warnings* (and the module logger); they never abort the conversion.
    """
    if not isinstance(event, MispEvent):
        event = MispEvent.from_dict(event)
    warnings = warnings if warnings is not None else []
    conv = _Converter(event, warnings)
    conv.identity()
    for attr in event.attributes:
        try:
            conv.attribute(attr)
        except UnsupportedAttributeType as exc:
            warnings.append(f"event {event.uuid}: {exc}")
            log.debug("%s", exc)
        except (KeyError, ValueError, TypeError) as exc:
            warnings.append(f"event {event.uuid}: attribute {attr.get('uuid')}: {exc!r}")
    for mobj in event.objects:
        try:
            conv.misp_object(mobj)
        except UnsupportedAttributeType as exc:
            warnings.append(f"event {event.uuid}: {exc}")
        except (KeyError, ValueError, TypeError) as exc:
            warnings.append(f"event {event.uuid}: object {mobj.get('uuid')}: {exc!r}")
    report = conv.report()
    raw = [o for o in conv.objects if o["type"] == "identity"] + [report]
    raw += [o for o in conv.objects if o["type"] != "identity"]
    objs = []
    seen = set()
    for r in raw:
        if r["id"] in seen:
            continue
        seen.add(r["id"])
        objs.append(from_dict(r))
    return make_bundle(objs, Identifier("bundle", uuid.UUID(event.uuid)))


def _load_event_file(path: Path):
    with open(path, "rb") as fh:
        return json.load(fh)


def load_misp_feed(directory, source_version: str | None = None, workers: int = 4) -> CorpusSnapshot:
    """Convert every event of a MISP feed directory (manifest + per-event JSON).

    Events are read in parallel and merged in file-name order.
    """
    root = Path(directory)
    manifest = root / "manifest.json"
    if not manifest.exists():
        raise ManifestMissing(f"{manifest} not found")
    try:
        entries = json.loads(manifest.read_text())
    except ValueError as exc:
        raise ManifestMissing(f"manifest unreadable: {exc}") from None
    names = sorted(f"{u}.json" for u in entries)
    if source_version is None:
        source_version = read_pins(root).get("circl", {}).get("version", "unknown")
    snap = CorpusSnapshot(name="circl", objects=[], source_version=source_version)

    def work(name):
        warns: list = []
        try:
            bundle = misp_to_stix(_load_event_file(root / name), warns)
        except (OSError, ValueError, KeyError, TinyStixError) as exc:
            return None, [f"{name}: {exc}"]
        return bundle, warns

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(work, names))
    raw, seen = [], set()
    for bundle, warns in results:
        snap.warnings.extend(warns)
        if bundle is None:
            continue
        # the organisation identity and TLP markings recur in every event
        for o in bundle.objects:
            if str(o.id) not in seen:
                seen.add(str(o.id))
                raw.append(o.properties)
    snap.objects = preprocess(raw, snap)
    return snap


def load_corpus(name: str, root=None) -> CorpusSnapshot:
    """Load a named corpus (``circl``, ``enterprise``, ``ics``, ``mobile``) from the data root."""
    base = data_dir(root)
    if name == "circl":
        return load_misp_feed(base / "circl")
    if name in ATTACK_DOMAINS:
        return load_attack_corpus(base / "attack", name)
    raise ValueError(f"unknown corpus {name!r}")


# -- snapshot cache ---------------------------------------------------------

def save_snapshot(snapshot: CorpusSnapshot, path, d: Dictionary) -> None:
    """Write a snapshot as a CBOR map of tinySTIX payloads."""
    doc = {
        "name": snapshot.name,
        "source_version": snapshot.source_version,
        "dict_version": d.version_id,
        "objects": [to_tinystix(o, d).to_bytes() for o in snapshot.objects],
    }
    Path(path).write_bytes(cbor2.dumps(doc))


def load_snapshot(path, d: Dictionary) -> CorpusSnapshot:
    doc = cbor2.loads(Path(path).read_bytes())
    objs = [from_tinystix(p, d) for p in doc["objects"]]
    return CorpusSnapshot(name=doc["name"], objects=objs, source_version=doc["source_version"])
