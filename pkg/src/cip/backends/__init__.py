from .protocol import (
    BackendEndpoint,
    GenerationConfig,
    RewriteParams,
    canonical_json_bytes,
    canonical_request_bytes,
    request_digest,
    request_digest_for,
)
from .replay import ReplayStore
from .client import (
    AsgiTransport,
    HttpTransport,
    RecordingTransport,
    ReplayTransport,
    caption_sample,
    generate_sample,
    rewrite_caption,
)
from .stub import decode_vector_payload, make_stub_app
from .conformance import HttpConformanceTarget, conformance_failures, run_conformance

__all__ = [
    "BackendEndpoint",
    "GenerationConfig",
    "RewriteParams",
    "canonical_json_bytes",
    "canonical_request_bytes",
    "request_digest",
    "request_digest_for",
    "ReplayStore",
    "AsgiTransport",
    "HttpTransport",
    "RecordingTransport",
    "ReplayTransport",
    "caption_sample",
    "generate_sample",
    "rewrite_caption",
    "decode_vector_payload",
    "make_stub_app",
    "HttpConformanceTarget",
    "conformance_failures",
    "run_conformance",
]
