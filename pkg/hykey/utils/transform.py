# -*- coding: utf-8 -*-
"""
(C) HyKey authors
All rights reserved
create time '2026/10/18 09:20'

Usage:
format conversions shared by the cube, checkpoint and report writers
"""

import base64
import io
import json
import struct

import numpy as np
from PIL import Image

from ..exception import HeaderError, PayloadLengthError

LE_F32 = np.dtype('<f4')
# uint32 little endian length prefix
LENGTH_PREFIX = struct.Struct('<I')


def to_jsonable(value):
    """
    convert numpy scalars/arrays, tuples and dataclass-like values into plain json types
    :param value:
    :return:
    """
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        # json has no inf/nan
        return None if np.isnan(value) else ('inf' if value > 0 else '-inf')
    return value


def dump_json(value, indent=None):
    """
    deterministic json text (sorted keys)
    :param value:
    :param indent:
    :return:
    """
    return json.dumps(to_jsonable(value), sort_keys=True, indent=indent)


def pack_header(header: dict):
    """
    length-prefixed utf-8 json
    :param header:
    :return: bytes

    Usage:
    >>> pack_header({'bands': 16})[:4]
    >>> b'\x0d\x00\x00\x00'
    """
    body = dump_json(header).encode('utf-8')
    return LENGTH_PREFIX.pack(len(body)) + body


def unpack_header(buffer: bytes, offset=0):
    """
    reverse of pack_header
    :param buffer:
    :param offset: where the length prefix starts
    :return: (header dict, offset after the header)
    """
    end = offset + LENGTH_PREFIX.size
    if len(buffer) < end:
        raise HeaderError('truncated header length prefix')
    (length,) = LENGTH_PREFIX.unpack(buffer[offset:end])
    if len(buffer) < end + length:
        raise HeaderError(f'header declares {length} bytes, {len(buffer) - end} available')
    try:
        header = json.loads(buffer[end:end + length].decode('utf-8'))
    except (UnicodeDecodeError, ValueError) as e:
        raise HeaderError(f'header is not valid utf-8 json: {e}')
    if not isinstance(header, dict):
        raise HeaderError('header must be a json object')
    return header, end + length


def array_to_bytes(array):
    """
    float32 little endian row-major bytes
    :param array:
    :return:
    """
    return np.ascontiguousarray(array, dtype=LE_F32).tobytes()


def bytes_to_array(buffer, shape, offset=0):
    """
    reverse of array_to_bytes, checks the payload length
    :param buffer:
    :param shape:
    :param offset:
    :return: (float32 native array, offset after the blob)
    """
    count = int(np.prod(shape, dtype=np.int64))
    end = offset + count * LE_F32.itemsize
    if len(buffer) < end:
        raise PayloadLengthError(f'expected {count * LE_F32.itemsize} payload bytes for shape {tuple(shape)}, '
                                 f'got {len(buffer) - offset}')
    array = np.frombuffer(buffer, dtype=LE_F32, count=count, offset=offset)
    return array.astype(np.float32).reshape(shape), end


def rgb_to_png_base64(rgb):
    """
    [H, W, 3] floats in [0, 1] to a base64 png, used as an svg data uri
    :param rgb:
    :return:
    """
    pixels = (np.clip(rgb, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    stream = io.BytesIO()
    Image.fromarray(pixels).save(stream, format='PNG')
    return base64.b64encode(stream.getvalue()).decode('ascii')
