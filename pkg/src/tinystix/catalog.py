"""STIX 2.1 object catalog: type names, property names and controlled vocabularies.

This is the public listing from which the integer dictionary is derived.
Everything here is plain data; ``tinystix.vocab.default_entry_set`` turns it
into the input of ``build_dictionary``.
"""

from __future__ import annotations

SDO_TYPES = (
    "attack-pattern", "campaign", "course-of-action", "grouping", "identity",
    "incident", "indicator", "infrastructure", "intrusion-set", "location",
    "malware", "malware-analysis", "note", "observed-data", "opinion",
    "report", "threat-actor", "tool", "vulnerability",
)

SCO_TYPES = (
    "artifact", "autonomous-system", "directory", "domain-name", "email-addr",
    "email-message", "file", "ipv4-addr", "ipv6-addr", "mac-addr", "mutex",
    "network-traffic", "process", "software", "url", "user-account",
    "windows-registry-key", "x509-certificate",
)

SRO_TYPES = ("relationship", "sighting")

MARKING_TYPES = ("marking-definition",)

META_TYPES = ("language-content", "extension-definition")

BUNDLE_TYPE = "bundle"

ALL_TYPES = SDO_TYPES + SCO_TYPES + SRO_TYPES + MARKING_TYPES + META_TYPES + (BUNDLE_TYPE,)

SDO_COMMON = (
    "type", "spec_version", "id", "created_by_ref", "created", "modified",
    "revoked", "labels", "confidence", "lang", "external_references",
    "object_marking_refs", "granular_markings", "extensions",
)
SRO_COMMON = SDO_COMMON
SCO_COMMON = (
    "type", "spec_version", "id", "object_marking_refs", "granular_markings",
    "defanged", "extensions",
)

# required on top of the per-class common requirements
SDO_REQUIRED = ("type", "spec_version", "id", "created", "modified")
SCO_REQUIRED = ("type", "id")
MARKING_REQUIRED = ("type", "spec_version", "id", "created")

TYPE_REQUIRED = {
    "attack-pattern": ("name",),
    "campaign": ("name",),
    "course-of-action": ("name",),
    "grouping": ("context", "object_refs"),
    "identity": ("name",),
    "incident": ("name",),
    "indicator": ("pattern", "pattern_type", "valid_from"),
    "infrastructure": ("name",),
    "intrusion-set": ("name",),
    "malware": ("is_family",),
    "malware-analysis": ("product",),
    "note": ("content", "object_refs"),
    "observed-data": ("first_observed", "last_observed", "number_observed"),
    "opinion": ("opinion", "object_refs"),
    "report": ("name", "published", "object_refs"),
    "threat-actor": ("name",),
    "tool": ("name",),
    "vulnerability": ("name",),
    "relationship": ("relationship_type", "source_ref", "target_ref"),
    "sighting": ("sighting_of_ref",),
    "artifact": (),
    "autonomous-system": ("number",),
    "directory": ("path",),
    "domain-name": ("value",),
    "email-addr": ("value",),
    "email-message": ("is_multipart",),
    "ipv4-addr": ("value",),
    "ipv6-addr": ("value",),
    "mac-addr": ("value",),
    "mutex": ("name",),
    "network-traffic": ("protocols",),
    "software": ("name",),
    "url": ("value",),
    "windows-registry-key": (),
    "language-content": ("object_ref", "contents"),
    "extension-definition": ("name", "schema", "version", "extension_types", "created_by_ref"),
}

# type-specific properties (common ones are added per class)
TYPE_PROPERTIES = {
    "attack-pattern": ("name", "description", "aliases", "kill_chain_phases"),
    "campaign": ("name", "description", "aliases", "first_seen", "last_seen", "objective"),
    "course-of-action": ("name", "description", "action"),
    "grouping": ("name", "description", "context", "object_refs"),
    "identity": ("name", "description", "roles", "identity_class", "sectors", "contact_information"),
    "incident": ("name", "description", "kill_chain_phases"),
    "indicator": (
        "name", "description", "indicator_types", "pattern", "pattern_type",
        "pattern_version", "valid_from", "valid_until", "kill_chain_phases",
    ),
    "infrastructure": (
        "name", "description", "infrastructure_types", "aliases",
        "kill_chain_phases", "first_seen", "last_seen",
    ),
    "intrusion-set": (
        "name", "description", "aliases", "first_seen", "last_seen", "goals",
        "resource_level", "primary_motivation", "secondary_motivations",
    ),
    "location": (
        "name", "description", "latitude", "longitude", "precision", "region",
        "country", "administrative_area", "city", "street_address", "postal_code",
    ),
    "malware": (
        "name", "description", "malware_types", "is_family", "aliases",
        "kill_chain_phases", "first_seen", "last_seen", "operating_system_refs",
        "architecture_execution_envs", "implementation_languages",
        "capabilities", "sample_refs",
    ),
    "malware-analysis": (
        "product", "version", "host_vm_ref", "operating_system_ref",
        "installed_software_refs", "configuration_version", "modules",
        "analysis_engine_version", "analysis_definition_version", "submitted",
        "analysis_started", "analysis_ended", "result_name", "result",
        "analysis_sco_refs", "sample_ref",
    ),
    "note": ("abstract", "content", "authors", "object_refs"),
    "observed-data": ("first_observed", "last_observed", "number_observed", "objects", "object_refs"),
    "opinion": ("explanation", "authors", "opinion", "object_refs"),
    "report": ("name", "description", "report_types", "published", "object_refs"),
    "threat-actor": (
        "name", "description", "threat_actor_types", "aliases", "first_seen",
        "last_seen", "roles", "goals", "sophistication", "resource_level",
        "primary_motivation", "secondary_motivations", "personal_motivations",
    ),
    "tool": ("name", "description", "tool_types", "aliases", "kill_chain_phases", "tool_version"),
    "vulnerability": ("name", "description"),
    "relationship": (
        "relationship_type", "description", "source_ref", "target_ref",
        "start_time", "stop_time",
    ),
    "sighting": (
        "description", "first_seen", "last_seen", "count", "sighting_of_ref",
        "observed_data_refs", "where_sighted_refs", "summary",
    ),
    "artifact": ("mime_type", "payload_bin", "url", "hashes", "encryption_algorithm", "decryption_key"),
    "autonomous-system": ("number", "name", "rir"),
    "directory": ("path", "path_enc", "ctime", "mtime", "atime", "contains_refs"),
    "domain-name": ("value", "resolves_to_refs"),
    "email-addr": ("value", "display_name", "belongs_to_ref"),
    "email-message": (
        "is_multipart", "date", "content_type", "from_ref", "sender_ref",
        "to_refs", "cc_refs", "bcc_refs", "message_id", "subject",
        "received_lines", "additional_header_fields", "body", "body_multipart",
        "raw_email_ref",
    ),
    "file": (
        "hashes", "size", "name", "name_enc", "magic_number_hex", "mime_type",
        "ctime", "mtime", "atime", "parent_directory_ref", "contains_refs",
        "content_ref",
    ),
    "ipv4-addr": ("value", "resolves_to_refs", "belongs_to_refs"),
    "ipv6-addr": ("value", "resolves_to_refs", "belongs_to_refs"),
    "mac-addr": ("value",),
    "mutex": ("name",),
    "network-traffic": (
        "start", "end", "is_active", "src_ref", "dst_ref", "src_port",
        "dst_port", "protocols", "src_byte_count", "dst_byte_count",
        "src_packets", "dst_packets", "ipfix", "src_payload_ref",
        "dst_payload_ref", "encapsulates_refs", "encapsulated_by_ref",
    ),
    "process": (
        "is_hidden", "pid", "created_time", "cwd", "command_line",
        "environment_variables", "opened_connection_refs", "creator_user_ref",
        "image_ref", "parent_ref", "child_refs",
    ),
    "software": ("name", "cpe", "swid", "languages", "vendor", "version"),
    "url": ("value",),
    "user-account": (
        "user_id", "credential", "account_login", "account_type",
        "display_name", "is_service_account", "is_privileged",
        "can_escalate_privs", "is_disabled", "account_created",
        "account_expires", "credential_last_changed", "account_first_login",
        "account_last_login",
    ),
    "windows-registry-key": ("key", "values", "modified_time", "creator_user_ref", "number_of_subkeys"),
    "x509-certificate": (
        "is_self_signed", "hashes", "version", "serial_number",
        "signature_algorithm", "issuer", "validity_not_before",
        "validity_not_after", "subject", "subject_public_key_algorithm",
        "subject_public_key_modulus", "subject_public_key_exponent",
        "x509_v3_extensions",
    ),
    "marking-definition": (
        "type", "spec_version", "id", "created_by_ref", "created",
        "external_references", "object_marking_refs", "granular_markings",
        "extensions", "name", "definition_type", "definition",
    ),
    "language-content": ("object_ref", "object_modified", "contents"),
    "extension-definition": (
        "name", "description", "schema", "version", "extension_types",
        "extension_properties",
    ),
    "bundle": ("type", "id", "objects", "spec_version"),
}

# property names of the nested data types (external references, kill chain
# phases, markings, predefined extensions and their sub-structures)
NESTED_PROPERTIES = (
    # external-reference, kill-chain-phase, granular-marking, extension
    "source_name", "description", "url", "hashes", "external_id",
    "kill_chain_name", "phase_name",
    "lang", "marking_ref", "selectors",
    "extension_type",
    # marking definitions
    "tlp", "statement",
    # email mime part
    "body", "body_raw_ref", "content_type", "content_disposition",
    # archive-ext, ntfs-ext, alternate data stream
    "contains_refs", "comment", "sid", "alternate_data_streams", "name", "size",
    # pdf-ext
    "version", "is_optimized", "document_info_dict", "pdfid0", "pdfid1",
    # raster-image-ext
    "image_height", "image_width", "bits_per_pixel", "exif_tags",
    # windows-pebinary-ext
    "pe_type", "imphash", "machine_hex", "number_of_sections",
    "time_date_stamp", "pointer_to_symbol_table_hex", "number_of_symbols",
    "size_of_optional_header", "characteristics_hex", "file_header_hashes",
    "optional_header", "sections", "entropy",
    "magic_hex", "major_linker_version", "minor_linker_version",
    "size_of_code", "size_of_initialized_data", "size_of_uninitialized_data",
    "address_of_entry_point", "base_of_code", "base_of_data", "image_base",
    "section_alignment", "file_alignment", "major_os_version",
    "minor_os_version", "major_image_version", "minor_image_version",
    "major_subsystem_version", "minor_subsystem_version",
    "win32_version_value_hex", "size_of_image", "size_of_headers",
    "checksum_hex", "subsystem_hex", "dll_characteristics_hex",
    "size_of_stack_reserve", "size_of_stack_commit", "size_of_heap_reserve",
    "size_of_heap_commit", "loader_flags_hex", "number_of_rva_and_sizes",
    # http-request-ext, icmp-ext, socket-ext, tcp-ext
    "request_method", "request_value", "request_version", "request_header",
    "message_body_length", "message_body_data_ref",
    "icmp_type_hex", "icmp_code_hex",
    "address_family", "is_blocking", "is_listening", "options", "socket_type",
    "socket_descriptor", "socket_handle",
    "src_flags_hex", "dst_flags_hex",
    # windows-process-ext, windows-service-ext
    "aslr_enabled", "dep_enabled", "priority", "owner_sid", "window_title",
    "startup_info", "integrity_level",
    "service_name", "descriptions", "display_name", "group_name",
    "start_type", "service_dll_refs", "service_type", "service_status",
    # unix-account-ext
    "gid", "groups", "home_dir", "shell",
    # windows registry value
    "data", "data_type",
    # x509 v3 extensions
    "basic_constraints", "name_constraints", "policy_constraints",
    "key_usage", "extended_key_usage", "subject_key_identifier",
    "authority_key_identifier", "subject_alternative_name",
    "issuer_alternative_name", "subject_directory_attributes",
    "crl_distribution_points", "inhibit_any_policy",
    "private_key_usage_period_not_before",
    "private_key_usage_period_not_after", "certificate_policies",
    "policy_mappings",
)

# names of the predefined extensions; they appear as keys of ``extensions``
EXTENSION_NAMES = (
    "archive-ext", "ntfs-ext", "pdf-ext", "raster-image-ext",
    "windows-pebinary-ext", "http-request-ext", "icmp-ext", "socket-ext",
    "tcp-ext", "windows-process-ext", "windows-service-ext",
    "unix-account-ext",
)

VOCABULARIES = {
    "account-type-ov": (
        "facebook", "ldap", "nis", "openid", "radius", "skype", "tacacs",
        "twitter", "unix", "windows-local", "windows-domain",
    ),
    "attack-motivation-ov": (
        "accidental", "coercion", "dominance", "ideology", "notoriety",
        "organizational-gain", "personal-gain", "personal-satisfaction",
        "revenge", "unpredictable",
    ),
    "attack-resource-level-ov": (
        "individual", "club", "contest", "team", "organization", "government",
    ),
    "encryption-algorithm-enum": ("AES-256-GCM", "ChaCha20-Poly1305", "mime-type-indicated"),
    "extension-type-enum": (
        "new-sdo", "new-sco", "new-sro", "property-extension",
        "toplevel-property-extension",
    ),
    "grouping-context-ov": ("suspicious-activity", "malware-analysis", "unspecified"),
    "hash-algorithm-ov": (
        "MD5", "SHA-1", "SHA-256", "SHA-512", "SHA3-256", "SHA3-512", "SSDEEP", "TLSH",
    ),
    "identity-class-ov": ("individual", "group", "system", "organization", "class", "unknown"),
    "implementation-language-ov": (
        "applescript", "bash", "c", "c++", "c#", "go", "java", "javascript",
        "lua", "objective-c", "perl", "php", "powershell", "python", "ruby",
        "scala", "swift", "typescript", "visual-basic", "x86-32", "x86-64",
    ),
    "indicator-type-ov": (
        "anomalous-activity", "anonymization", "benign", "compromised",
        "malicious-activity", "attribution", "unknown",
    ),
    "industry-sector-ov": (
        "agriculture", "aerospace", "automotive", "chemical", "commercial",
        "communications", "construction", "defense", "education", "energy",
        "entertainment", "financial-services", "government",
        "government-emergency-services", "government-local",
        "government-national", "government-public-services",
        "government-regional", "healthcare", "hospitality-leisure",
        "infrastructure", "infrastructure-dams", "infrastructure-nuclear",
        "infrastructure-water", "insurance", "manufacturing", "mining",
        "non-profit", "pharmaceuticals", "retail", "technology",
        "telecommunications", "transportation", "utilities",
    ),
    "infrastructure-type-ov": (
        "amplification", "anonymization", "botnet", "command-and-control",
        "control-system", "exfiltration", "firewall", "hosting-malware",
        "hosting-target-lists", "phishing", "reconnaissance",
        "routers-switches", "staging", "workstation", "unknown",
    ),
    "malware-capabilities-ov": (
        "accesses-remote-machines", "anti-debugging", "anti-disassembly",
        "anti-emulation", "anti-memory-forensics", "anti-sandbox", "anti-vm",
        "captures-input-peripherals", "captures-output-peripherals",
        "captures-system-state-data", "cleans-traces-of-infection",
        "commits-fraud", "communicates-with-c2",
        "compromises-data-availability", "compromises-data-integrity",
        "compromises-system-availability", "controls-local-machine",
        "degrades-security-software", "degrades-system-updates",
        "determines-c2-server", "emails-spam", "escalates-privileges",
        "evades-av", "exfiltrates-data", "fingerprints-host",
        "hides-artifacts", "hides-executing-code", "infects-files",
        "infects-remote-machines", "installs-other-components",
        "persists-after-system-reboot", "prevents-artifact-access",
        "prevents-artifact-deletion", "probes-network-environment",
        "self-modifies", "steals-authentication-credentials",
        "violates-system-operational-integrity",
    ),
    "malware-result-ov": ("malicious", "suspicious", "benign", "unknown"),
    "malware-type-ov": (
        "adware", "backdoor", "bot", "bootkit", "ddos", "downloader", "dropper",
        "exploit-kit", "keylogger", "ransomware", "remote-access-trojan",
        "resource-exploitation", "rogue-security-software", "rootkit",
        "screen-capture", "spyware", "trojan", "unknown", "virus", "webshell",
        "wiper", "worm",
    ),
    "marking-definition-type": ("statement", "tlp"),
    "network-socket-address-family-enum": (
        "AF_UNSPEC", "AF_INET", "AF_IPX", "AF_APPLETALK", "AF_NETBIOS",
        "AF_INET6", "AF_IRDA", "AF_BTH",
    ),
    "network-socket-type-enum": (
        "SOCK_STREAM", "SOCK_DGRAM", "SOCK_RAW", "SOCK_RDM", "SOCK_SEQPACKET",
    ),
    "opinion-enum": ("strongly-disagree", "disagree", "neutral", "agree", "strongly-agree"),
    "pattern-type-ov": ("stix", "pcre", "sigma", "snort", "suricata", "yara"),
    "pattern-version": ("2.0", "2.1"),
    "processor-architecture-ov": (
        "alpha", "arm", "ia-64", "mips", "powerpc", "sparc", "x86", "x86-64",
    ),
    "region-ov": (
        "africa", "eastern-africa", "middle-africa", "northern-africa",
        "southern-africa", "western-africa", "americas", "caribbean",
        "central-america", "latin-america-caribbean", "northern-america",
        "south-america", "asia", "central-asia", "eastern-asia",
        "southern-asia", "south-eastern-asia", "western-asia", "europe",
        "eastern-europe", "northern-europe", "southern-europe",
        "western-europe", "oceania", "antarctica", "australia-new-zealand",
        "melanesia", "micronesia", "polynesia",
    ),
    # relationship names declared by the SDO/SCO relationship tables
    "relationship-type": (
        "attributed-to", "authored-by", "av-analysis-of", "based-on",
        "beacons-to", "belongs-to", "characterizes", "communicates-with",
        "compromises", "consists-of", "controls", "delivers", "derived-from",
        "downloads", "drops", "duplicate-of", "dynamic-analysis-of",
        "exfiltrates-to", "exploits", "has", "hosts", "impersonates",
        "indicates", "investigates", "located-at", "mitigates",
        "originates-from", "owns", "related-to", "remediates", "resolves-to",
        "static-analysis-of", "targets", "uses", "variant-of",
    ),
    "report-type-ov": (
        "attack-pattern", "campaign", "identity", "indicator", "intrusion-set",
        "malware", "observed-data", "threat-actor", "threat-report", "tool",
        "vulnerability",
    ),
    "spec-version": ("2.0", "2.1"),
    "threat-actor-role-ov": (
        "agent", "director", "independent", "infrastructure-architect",
        "infrastructure-operator", "malware-author", "sponsor",
    ),
    "threat-actor-sophistication-ov": (
        "none", "minimal", "intermediate", "advanced", "expert", "innovator", "strategic",
    ),
    "threat-actor-type-ov": (
        "activist", "competitor", "crime-syndicate", "criminal", "hacker",
        "insider-accidental", "insider-disgruntled", "nation-state",
        "sensationalist", "spy", "terrorist", "unknown",
    ),
    "tlp-level": ("white", "green", "amber", "red", "clear", "amber+strict"),
    "tool-type-ov": (
        "denial-of-service", "exploitation", "information-gathering",
        "network-capture", "credential-exploitation", "remote-access",
        "vulnerability-scanning", "unknown",
    ),
    "windows-integrity-level-enum": ("low", "medium", "high", "system"),
    "windows-pebinary-type-ov": ("dll", "exe", "sys"),
    "windows-registry-datatype-enum": (
        "REG_NONE", "REG_SZ", "REG_EXPAND_SZ", "REG_BINARY", "REG_DWORD",
        "REG_DWORD_BIG_ENDIAN", "REG_DWORD_LITTLE_ENDIAN", "REG_LINK",
        "REG_MULTI_SZ", "REG_RESOURCE_LIST", "REG_FULL_RESOURCE_DESCRIPTION",
        "REG_RESOURCE_REQUIREMENTS_LIST", "REG_QWORD", "REG_INVALID_TYPE",
    ),
    "windows-service-start-type-enum": (
        "SERVICE_AUTO_START", "SERVICE_BOOT_START", "SERVICE_DEMAND_START",
        "SERVICE_DISABLED", "SERVICE_SYSTEM_ALERT",
    ),
    "windows-service-status-enum": (
        "SERVICE_CONTINUE_PENDING", "SERVICE_PAUSE_PENDING", "SERVICE_PAUSED",
        "SERVICE_RUNNING", "SERVICE_START_PENDING", "SERVICE_STOP_PENDING",
        "SERVICE_STOPPED",
    ),
    "windows-service-type-enum": (
        "SERVICE_KERNEL_DRIVER", "SERVICE_FILE_SYSTEM_DRIVER",
        "SERVICE_WIN32_OWN_PROCESS", "SERVICE_WIN32_SHARE_PROCESS",
    ),
}

# property name -> vocabulary, valid wherever the property occurs
PROPERTY_VOCABULARY = {
    "spec_version": "spec-version",
    "indicator_types": "indicator-type-ov",
    "pattern_type": "pattern-type-ov",
    "pattern_version": "pattern-version",
    "relationship_type": "relationship-type",
    "malware_types": "malware-type-ov",
    "tool_types": "tool-type-ov",
    "report_types": "report-type-ov",
    "threat_actor_types": "threat-actor-type-ov",
    "infrastructure_types": "infrastructure-type-ov",
    "identity_class": "identity-class-ov",
    "sectors": "industry-sector-ov",
    "context": "grouping-context-ov",
    "region": "region-ov",
    "opinion": "opinion-enum",
    "result": "malware-result-ov",
    "capabilities": "malware-capabilities-ov",
    "implementation_languages": "implementation-language-ov",
    "architecture_execution_envs": "processor-architecture-ov",
    "resource_level": "attack-resource-level-ov",
    "primary_motivation": "attack-motivation-ov",
    "secondary_motivations": "attack-motivation-ov",
    "personal_motivations": "attack-motivation-ov",
    "sophistication": "threat-actor-sophistication-ov",
    "account_type": "account-type-ov",
    "encryption_algorithm": "encryption-algorithm-enum",
    "extension_types": "extension-type-enum",
    "extension_type": "extension-type-enum",
    "definition_type": "marking-definition-type",
    "tlp": "tlp-level",
    "integrity_level": "windows-integrity-level-enum",
    "pe_type": "windows-pebinary-type-ov",
    "data_type": "windows-registry-datatype-enum",
    "start_type": "windows-service-start-type-enum",
    "service_status": "windows-service-status-enum",
    "service_type": "windows-service-type-enum",
    "address_family": "network-socket-address-family-enum",
    "socket_type": "network-socket-type-enum",
}

# (object type, property) bindings that only hold on one object type
TYPE_PROPERTY_VOCABULARY = {
    ("threat-actor", "roles"): "threat-actor-role-ov",
}

# ``hashes`` dictionaries are keyed by hash-algorithm names; those names are
# registered as keys so they code like any other property name
HASH_KEY_VOCABULARY = "hash-algorithm-ov"

REF_SUFFIXES = ("_ref", "_refs")


def properties_for(object_type: str) -> tuple[str, ...]:
    """All STIX 2.1 property names defined for *object_type* (common + specific)."""
    specific = TYPE_PROPERTIES.get(object_type)
    if specific is None:
        return ()
    if object_type in SDO_TYPES:
        return SDO_COMMON + specific
    if object_type in SRO_TYPES:
        return SRO_COMMON + specific
    if object_type in SCO_TYPES:
        return SCO_COMMON + specific
    if object_type in META_TYPES:
        return SDO_COMMON + specific
    return specific


def required_for(object_type: str) -> tuple[str, ...]:
    if object_type in SCO_TYPES:
        base = SCO_REQUIRED
    elif object_type in MARKING_TYPES:
        base = MARKING_REQUIRED
    elif object_type == BUNDLE_TYPE:
        base = ("type", "id")
    else:
        base = SDO_REQUIRED
    return base + tuple(p for p in TYPE_REQUIRED.get(object_type, ()) if p not in base)


def all_property_names() -> list[str]:
    names = set(NESTED_PROPERTIES) | set(EXTENSION_NAMES) | set(VOCABULARIES[HASH_KEY_VOCABULARY])
    for t in ALL_TYPES:
        names.update(properties_for(t))
    return sorted(names)


def vocabulary_for(object_type: str | None, prop: str) -> str | None:
    """Vocabulary bound to *prop* inside an object of *object_type*, if any."""
    if object_type is not None:
        vocab = TYPE_PROPERTY_VOCABULARY.get((object_type, prop))
        if vocab is not None:
            return vocab
    return PROPERTY_VOCABULARY.get(prop)
