"""
On-disk view formats.

csv:    first line holds the dimension count n, then one sample per line with
        n comma-separated reals.
binary: b"DSCCA1", u32 rows, u32 cols (little-endian), then rows·cols
        little-endian float64 in column-major order.
idx:    MNIST image files (optionally gzipped); pixels scaled to [0, 1].
"""
import csv
import gzip
import struct
from pathlib import Path
from typing import Union

import numpy as np

from dscca.config.constants import ExceptionConstants, FormatConstants
from dscca.data.datasets import ViewPairDataset
from dscca.numerics.linalg import Matrix, as_matrix
from dscca.utils.exception_handler import DataFormatError, ExceptionHandler, ShapeError
from dscca.utils.logging_utils import LoggingUtils

PathLike = Union[str, Path]
_BINARY_HEADER = struct.Struct("<II")


def read_csv_view(path: PathLike) -> Matrix:
    path = str(path)
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(path, "empty file", line=1)
        try:
            dim = int(header[0].strip()) if len(header) == 1 else -1
        except ValueError:
            dim = -1
        if dim < 1:
            raise DataFormatError(path, f"header must be a positive dimension count, got {','.join(header)!r}", line=1)
        for record in reader:
            line = reader.line_num
            if not record or all(not cell.strip() for cell in record):
                continue
            if len(record) != dim:
                raise DataFormatError(path, f"expected {dim} values, got {len(record)}", line=line)
            try:
                rows.append([float(cell) for cell in record])
            except ValueError as e:
                ExceptionHandler.handle_data_parsing_error(e, "Formats")
                raise DataFormatError(path, f"unparseable value: {e}", line=line) from e
    if not rows:
        return np.zeros((dim, 0))
    return np.asarray(rows, dtype=np.float64).T.copy()


def write_csv_view(path: PathLike, X: Matrix) -> Path:
    X = as_matrix(X, "X")
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow([X.shape[0]])
        for column in X.T:
            writer.writerow([repr(float(v)) for v in column])
    return path


def read_binary_view(path: PathLike) -> Matrix:
    path = str(path)
    with open(path, "rb") as f:
        data = f.read()
    magic = FormatConstants.VIEW_MAGIC
    if data[: len(magic)] != magic:
        raise DataFormatError(path, f"bad magic {data[:len(magic)]!r}", offset=0)
    offset = len(magic)
    if len(data) < offset + _BINARY_HEADER.size:
        raise DataFormatError(path, "truncated header", offset=offset)
    rows, cols = _BINARY_HEADER.unpack_from(data, offset)
    offset += _BINARY_HEADER.size
    expected = rows * cols * 8
    if len(data) - offset != expected:
        raise DataFormatError(path, f"expected {expected} payload bytes, found {len(data) - offset}", offset=offset)
    values = np.frombuffer(data, dtype="<f8", count=rows * cols, offset=offset)
    return values.reshape((rows, cols), order="F").astype(np.float64)


def write_binary_view(path: PathLike, X: Matrix) -> Path:
    X = as_matrix(X, "X")
    path = Path(path)
    payload = np.asarray(X, dtype="<f8").tobytes(order="F")
    path.write_bytes(FormatConstants.VIEW_MAGIC + _BINARY_HEADER.pack(*X.shape) + payload)
    return path


def read_idx_images(path: PathLike, max_samples: int = 0) -> Matrix:
    """
    MNIST IDX image file as an (h·w) × N matrix of pixels in [0, 1],
    each image flattened row by row.
    """
    path = str(path)
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "rb") as f:
        data = f.read()
    if len(data) < 16:
        raise DataFormatError(path, "truncated IDX header", offset=0)
    magic, count, height, width = struct.unpack(">IIII", data[:16])
    if magic != FormatConstants.IDX_IMAGE_MAGIC:
        raise DataFormatError(path, f"bad IDX magic 0x{magic:08x}", offset=0)
    if max_samples:
        count = min(count, max_samples)
    needed = count * height * width
    if len(data) - 16 < needed:
        raise DataFormatError(path, f"expected {needed} pixel bytes, found {len(data) - 16}", offset=16)
    pixels = np.frombuffer(data, dtype=np.uint8, count=needed, offset=16)
    return pixels.reshape(count, height * width).T.astype(np.float64) / 255.0


def read_view(path: PathLike, fmt: str) -> Matrix:
    readers = {"csv": read_csv_view, "binary": read_binary_view}
    if fmt not in readers:
        raise ValueError(f"unknown view format {fmt!r}")
    try:
        return readers[fmt](path)
    except ExceptionConstants.FILE_OPERATION_EXCEPTIONS as e:
        ExceptionHandler.handle_file_operation_error(e, "Formats")
        raise DataFormatError(str(path), f"cannot read file: {e}") from e


def load_views(path1: PathLike, path2: PathLike, fmt: str = "csv", name: str = "") -> ViewPairDataset:
    """Load two precomputed view files holding the same samples in the same order"""
    view1 = read_view(path1, fmt)
    view2 = read_view(path2, fmt)
    if view1.shape[1] != view2.shape[1]:
        raise DataFormatError(str(path2), f"holds {view2.shape[1]} samples, {path1} holds {view1.shape[1]}")
    LoggingUtils.log_info(
        "Formats", "Loaded views {n1}x{n} and {n2}x{n}", n1=view1.shape[0], n2=view2.shape[0], n=view1.shape[1]
    )
    return ViewPairDataset(view1, view2, name or Path(path1).stem)


def split_halves(images: Matrix, height: int, width: int, name: str = "halves") -> ViewPairDataset:
    """Left and right halves of row-major flattened images as two views"""
    images = as_matrix(images, "images")
    if width % 2:
        raise ShapeError(f"image width must be even, got {width}")
    if images.shape[0] != height * width:
        raise ShapeError(f"images have {images.shape[0]} rows, expected {height}x{width}")
    grid = images.reshape(height, width, -1)
    half = width // 2
    left = grid[:, :half, :].reshape(height * half, -1)
    right = grid[:, half:, :].reshape(height * half, -1)
    return ViewPairDataset(left, right, name)


def join_halves(dataset: ViewPairDataset, height: int, width: int) -> Matrix:
    """Inverse of split_halves"""
    half = width // 2
    left = dataset.view1.reshape(height, half, -1)
    right = dataset.view2.reshape(height, half, -1)
    return np.concatenate([left, right], axis=1).reshape(height * width, -1)
