"""tinySTIX: compact CBOR encoding of STIX 2.1 objects with COSE protection and CoAP exchange."""

__version__ = "0.1.0"
