"""Small shared helpers: canonical JSON and config hashing."""

import hashlib
import json


def canonical_json(obj) -> str:
    """Serialize deterministically: sorted keys, no whitespace drift."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(obj) -> str:
    """Short stable fingerprint of a JSON-serializable config."""
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:16]
