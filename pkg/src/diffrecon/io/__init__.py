"""Binary formats, run manifests and human-readable exports."""

from diffrecon.io.formats import (
    content_hash,
    decode_adapters,
    decode_checkpoint,
    decode_image,
    decode_labels,
    decode_sinogram,
    encode_adapters,
    encode_checkpoint,
    encode_image,
    encode_labels,
    encode_sinogram,
    load_adapters,
    load_checkpoint,
    load_image,
    load_labels,
    load_sinogram,
    save_adapters,
    save_checkpoint,
    save_image,
    save_labels,
    save_sinogram,
)
from diffrecon.io.manifest import (
    MANIFEST_NAME,
    RunManifest,
    manifest_json,
    parse_manifest,
    read_manifest,
    reproducible_json,
)

__all__ = [
    "MANIFEST_NAME",
    "RunManifest",
    "content_hash",
    "decode_adapters",
    "decode_checkpoint",
    "decode_image",
    "decode_labels",
    "decode_sinogram",
    "encode_adapters",
    "encode_checkpoint",
    "encode_image",
    "encode_labels",
    "encode_sinogram",
    "load_adapters",
    "load_checkpoint",
    "load_image",
    "load_labels",
    "load_sinogram",
    "manifest_json",
    "parse_manifest",
    "read_manifest",
    "reproducible_json",
    "save_adapters",
    "save_checkpoint",
    "save_image",
    "save_labels",
    "save_sinogram",
]
