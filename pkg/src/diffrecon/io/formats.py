"""
Little-endian binary files for images, sinograms, label maps, checkpoints and adapters.

Every file starts with a 4-byte magic and a u32 version. Images ("DRIM") and
sinograms ("DRSN") follow with two u32 dims and an f64 spacing, then f32 values
row-major. Label maps ("DRLB") use the image header with u8 values.
Checkpoints ("DRNN") carry the architecture and a tensor table before the f32
blobs; adapter files ("DRLA") name their base checkpoint by SHA-256.
"""

import hashlib
import logging
from pathlib import Path

import numpy as np
import torch

from diffrecon.errors import ConfigurationError, FormatError
from diffrecon.geometry.models import GridSpec, Image, ProjSpec, Sinogram
from diffrecon.score.lora import LoraAdapterSet
from diffrecon.score.network import ConvScoreNet


logger = logging.getLogger(__name__)

VERSION = 1
MAX_TENSOR_RANK = 4

GRID_HEADER = np.dtype(
    [("magic", "S4"), ("version", "<u4"), ("dims", "<u4", (2,)), ("spacing", "<f8")]
)
NET_HEADER = np.dtype(
    [
        ("magic", "S4"),
        ("version", "<u4"),
        ("hidden", "<u4"),
        ("time_dim", "<u4"),
        ("n_tensors", "<u4"),
    ]
)
TENSOR_ENTRY = np.dtype([("rank", "<u4"), ("shape", "<u4", (MAX_TENSOR_RANK,))])
ADAPTER_HEADER = np.dtype(
    [
        ("magic", "S4"),
        ("version", "<u4"),
        ("base_sha256", "S32"),
        ("rank", "<u4"),
        ("n_layers", "<u4"),
    ]
)


def _check_header(header: np.ndarray, magic: bytes) -> None:
    if header["magic"] != magic:
        raise FormatError(f"Expected magic {magic!r}, found {bytes(header['magic'])!r}")
    if header["version"] != VERSION:
        raise FormatError(f"Unsupported {magic.decode()} version {int(header['version'])}")


def _read_header(data: bytes, dtype: np.dtype, magic: bytes) -> np.ndarray:
    if len(data) < dtype.itemsize:
        raise FormatError(f"File too short for a {magic.decode()} header")
    header = np.frombuffer(data, dtype=dtype, count=1)[0]
    _check_header(header, magic)
    return header


def _payload(data: bytes, offset: int, dtype: str, count: int, magic: bytes) -> np.ndarray:
    expected = offset + np.dtype(dtype).itemsize * count
    if len(data) != expected:
        raise FormatError(f"{magic.decode()} file has {len(data)} bytes, expected {expected}")
    return np.frombuffer(data, dtype=dtype, count=count, offset=offset)


def _grid_header(magic: bytes, dims: tuple[int, int], spacing: float) -> bytes:
    header = np.zeros(1, dtype=GRID_HEADER)
    header["magic"] = magic
    header["version"] = VERSION
    header["dims"] = dims
    header["spacing"] = spacing
    return header.tobytes()


# =============================================================================
# Images, sinograms, label maps
# =============================================================================


def encode_image(img: Image) -> bytes:
    grid = img.grid
    header = _grid_header(b"DRIM", (grid.nx, grid.ny), grid.voxel_size)
    return header + img.values.astype("<f4").tobytes()


def decode_image(data: bytes) -> Image:
    header = _read_header(data, GRID_HEADER, b"DRIM")
    nx, ny = (int(d) for d in header["dims"])
    grid = GridSpec(nx=nx, ny=ny, voxel_size=float(header["spacing"]))
    values = _payload(data, GRID_HEADER.itemsize, "<f4", nx * ny, b"DRIM")
    return Image(grid, values.reshape(ny, nx).astype(np.float64))


def encode_sinogram(sino: Sinogram) -> bytes:
    proj = sino.proj
    header = _grid_header(b"DRSN", (proj.n_angles, proj.n_bins), proj.bin_width)
    return header + sino.values.astype("<f4").tobytes()


def decode_sinogram(data: bytes) -> Sinogram:
    header = _read_header(data, GRID_HEADER, b"DRSN")
    n_angles, n_bins = (int(d) for d in header["dims"])
    proj = ProjSpec(n_angles=n_angles, n_bins=n_bins, bin_width=float(header["spacing"]))
    values = _payload(data, GRID_HEADER.itemsize, "<f4", n_angles * n_bins, b"DRSN")
    return Sinogram(proj, values.reshape(n_angles, n_bins).astype(np.float64))


def encode_labels(labels: np.ndarray, grid: GridSpec) -> bytes:
    if labels.shape != grid.shape:
        raise ConfigurationError(f"Label map shape {labels.shape} does not match {grid.shape}")
    header = _grid_header(b"DRLB", (grid.nx, grid.ny), grid.voxel_size)
    return header + labels.astype(np.uint8).tobytes()


def decode_labels(data: bytes) -> tuple[np.ndarray, GridSpec]:
    header = _read_header(data, GRID_HEADER, b"DRLB")
    nx, ny = (int(d) for d in header["dims"])
    grid = GridSpec(nx=nx, ny=ny, voxel_size=float(header["spacing"]))
    values = _payload(data, GRID_HEADER.itemsize, "u1", nx * ny, b"DRLB")
    return values.reshape(ny, nx).copy(), grid


def save_image(path: Path, img: Image) -> None:
    Path(path).write_bytes(encode_image(img))


def load_image(path: Path) -> Image:
    return decode_image(Path(path).read_bytes())


def save_sinogram(path: Path, sino: Sinogram) -> None:
    Path(path).write_bytes(encode_sinogram(sino))


def load_sinogram(path: Path) -> Sinogram:
    return decode_sinogram(Path(path).read_bytes())


def save_labels(path: Path, labels: np.ndarray, grid: GridSpec) -> None:
    Path(path).write_bytes(encode_labels(labels, grid))


def load_labels(path: Path) -> tuple[np.ndarray, GridSpec]:
    return decode_labels(Path(path).read_bytes())


# =============================================================================
# Checkpoints and adapters
# =============================================================================


def content_hash(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def encode_checkpoint(net: ConvScoreNet) -> bytes:
    """Architecture, tensor table, then every parameter as f32 in declaration order."""
    tensors = [p.detach().cpu().numpy() for p in net.state_dict().values()]
    header = np.zeros(1, dtype=NET_HEADER)
    header["magic"] = b"DRNN"
    header["version"] = VERSION
    header["hidden"] = net.hidden
    header["time_dim"] = net.time_dim
    header["n_tensors"] = len(tensors)
    table = np.zeros(len(tensors), dtype=TENSOR_ENTRY)
    for i, array in enumerate(tensors):
        table["rank"][i] = array.ndim
        table["shape"][i, : array.ndim] = array.shape
    blobs = b"".join(a.astype("<f4").tobytes() for a in tensors)
    return header.tobytes() + table.tobytes() + blobs


def decode_checkpoint(data: bytes) -> ConvScoreNet:
    header = _read_header(data, NET_HEADER, b"DRNN")
    net = ConvScoreNet(hidden=int(header["hidden"]), time_dim=int(header["time_dim"]))
    state = net.state_dict()
    n_tensors = int(header["n_tensors"])
    if n_tensors != len(state):
        raise FormatError(f"Checkpoint holds {n_tensors} tensors, network has {len(state)}")

    offset = NET_HEADER.itemsize
    table = np.frombuffer(data, dtype=TENSOR_ENTRY, count=n_tensors, offset=offset)
    offset += TENSOR_ENTRY.itemsize * n_tensors
    sizes = [int(np.prod(e["shape"][: e["rank"]])) for e in table]
    flat = _payload(data, offset, "<f4", sum(sizes), b"DRNN")

    loaded, start = {}, 0
    for (name, reference), entry, size in zip(state.items(), table, sizes):
        shape = tuple(int(d) for d in entry["shape"][: entry["rank"]])
        if shape != tuple(reference.shape):
            expected = tuple(reference.shape)
            raise FormatError(f"Tensor {name} has shape {shape}, expected {expected}")
        loaded[name] = torch.from_numpy(flat[start : start + size].reshape(shape).copy())
        start += size
    net.load_state_dict(loaded)
    net.eval()
    return net


def save_checkpoint(path: Path, net: ConvScoreNet) -> str:
    """Write a checkpoint and return its SHA-256 content hash."""
    data = encode_checkpoint(net)
    Path(path).write_bytes(data)
    return content_hash(data)


def load_checkpoint(path: Path) -> tuple[ConvScoreNet, str]:
    data = Path(path).read_bytes()
    return decode_checkpoint(data), content_hash(data)


def encode_adapters(adapters: LoraAdapterSet, base_hash: str) -> bytes:
    pairs = adapters.state_arrays()
    header = np.zeros(1, dtype=ADAPTER_HEADER)
    header["magic"] = b"DRLA"
    header["version"] = VERSION
    header["base_sha256"] = bytes.fromhex(base_hash)
    header["rank"] = adapters.rank
    header["n_layers"] = len(pairs)
    blobs = b"".join(u.astype("<f4").tobytes() + v.astype("<f4").tobytes() for u, v in pairs)
    return header.tobytes() + blobs


def decode_adapters(data: bytes, net: ConvScoreNet, base_hash: str) -> LoraAdapterSet:
    """
    Rebuild adapters for `net`.

    Raises:
        FormatError: If the file was written against a different base checkpoint
    """
    header = _read_header(data, ADAPTER_HEADER, b"DRLA")
    # fixed-width bytes fields drop trailing NULs on read
    if bytes(header["base_sha256"]).ljust(32, b"\0").hex() != base_hash:
        raise FormatError("Adapter file belongs to a different base checkpoint")
    rank = int(header["rank"])
    shapes = net.layer_shapes()
    if int(header["n_layers"]) != len(shapes):
        raise FormatError(f"Adapter has {int(header['n_layers'])} layers, net has {len(shapes)}")
    count = sum(rank * (d + k) for d, k in shapes)
    flat = _payload(data, ADAPTER_HEADER.itemsize, "<f4", count, b"DRLA")

    pairs, start = [], 0
    for d, k in shapes:
        u = flat[start : start + d * rank].reshape(d, rank)
        start += d * rank
        v = flat[start : start + rank * k].reshape(rank, k)
        start += rank * k
        pairs.append((u.astype(np.float32), v.astype(np.float32)))
    adapters = LoraAdapterSet(net, rank)
    adapters.load_arrays(pairs)
    return adapters


def save_adapters(path: Path, adapters: LoraAdapterSet, base_hash: str) -> None:
    Path(path).write_bytes(encode_adapters(adapters, base_hash))


def load_adapters(path: Path, net: ConvScoreNet, base_hash: str) -> LoraAdapterSet:
    return decode_adapters(Path(path).read_bytes(), net, base_hash)
