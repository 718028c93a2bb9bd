"""Exception hierarchy shared by all tinystix modules."""

from __future__ import annotations


class TinyStixError(Exception):
    """Base class for every domain error raised by tinystix."""


# -- object model -----------------------------------------------------------

class MalformedJson(TinyStixError):
    pass


class MissingRequiredProperty(TinyStixError):
    def __init__(self, name: str):
        super().__init__(f"missing required property: {name}")
        self.name = name


class BadIdentifier(TinyStixError):
    def __init__(self, value):
        super().__init__(f"bad identifier: {value!r}")
        self.value = value


class BadPropertyName(TinyStixError):
    pass


class UnknownType(TinyStixError):
    def __init__(self, name: str):
        super().__init__(f"unknown STIX type: {name}")
        self.name = name


class DuplicateObjectId(TinyStixError):
    pass


# -- dictionary -------------------------------------------------------------

class DuplicateEntry(TinyStixError):
    def __init__(self, name: str):
        super().__init__(f"duplicate dictionary entry: {name}")
        self.name = name


class UnsupportedVersion(TinyStixError):
    pass


class CorruptFile(TinyStixError):
    pass


# -- codec ------------------------------------------------------------------

class UnknownCode(TinyStixError):
    def __init__(self, code, context: str):
        super().__init__(f"unknown code {code!r} in {context}")
        self.code = code
        self.context = context


class MalformedCbor(TinyStixError):
    pass


class DictVersionMismatch(TinyStixError):
    def __init__(self, found, expected):
        super().__init__(f"dictionary version mismatch: payload {found}, local {expected}")
        self.found = found
        self.expected = expected


class UnencodableValue(TinyStixError):
    """A value cannot be mapped without becoming ambiguous on decode."""


# -- security ---------------------------------------------------------------

class UnknownKeyId(TinyStixError):
    def __init__(self, kid: bytes):
        super().__init__(f"unknown key id: {kid.hex()}")
        self.kid = kid


class SignatureInvalid(TinyStixError):
    pass


class AlgorithmMismatch(TinyStixError):
    pass


class DecryptionFailed(TinyStixError):
    pass


class MalformedCose(TinyStixError):
    pass


# -- exchange ---------------------------------------------------------------

class ExchangeError(TinyStixError):
    """Error carrying a CoAP response code (class, detail)."""

    code = (5, 0)

    def __init__(self, message: str = ""):
        super().__init__(message or self.__class__.__name__)


class CollectionNotFound(ExchangeError):
    code = (4, 4)


class TopicNotFound(ExchangeError):
    code = (4, 4)


class BadFilter(ExchangeError):
    code = (4, 0)


class PayloadRejected(ExchangeError):
    code = (4, 0)


class SubscriptionRefused(ExchangeError):
    code = (5, 3)


class RequestTimeout(ExchangeError):
    code = (5, 4)


class CoapFormatError(TinyStixError):
    pass


# -- ingest / benchmark -----------------------------------------------------

class FileUnreadable(TinyStixError):
    pass


class NotABundle(TinyStixError):
    pass


class ManifestMissing(TinyStixError):
    pass


class UnsupportedAttributeType(TinyStixError):
    def __init__(self, attr_type: str):
        super().__init__(f"unsupported MISP attribute type: {attr_type}")
        self.attr_type = attr_type


class EmptyCorpus(TinyStixError):
    pass
