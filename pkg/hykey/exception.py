# -*- coding: utf-8 -*-
"""
(C) HyKey authors
All rights reserved
create time '2026/10/18 09:12'

Usage:
every error raised by the package derives from HyKeyException and carries a stable `code`
"""


class HyKeyException(Exception):
    """base error"""
    code = 'E_HYKEY'

    def __init__(self, message='', code=None):
        super(HyKeyException, self).__init__(message)
        if code is not None:
            self.code = code

    def __str__(self):
        return f'[{self.code}] {super(HyKeyException, self).__str__()}'


class InvalidConfigException(HyKeyException):
    """configuration error, `field` is the dotted path of the offending key"""
    code = 'E_CONFIG'

    def __init__(self, message='', field=None):
        if field:
            message = f'{field}: {message}'
        super(InvalidConfigException, self).__init__(message)
        self.field = field


class DimensionError(HyKeyException):
    code = 'E_DIMENSION'


class NonFiniteError(HyKeyException):
    code = 'E_NON_FINITE'


class UsageError(HyKeyException):
    code = 'E_USAGE'


class UnsupportedInputError(HyKeyException):
    code = 'E_UNSUPPORTED_INPUT'


class FormatError(HyKeyException):
    """file format errors, each subclass has its own code"""
    code = 'E_FORMAT'


class BadMagicError(FormatError):
    code = 'E_MAGIC'


class UnsupportedVersionError(FormatError):
    code = 'E_VERSION'


class HeaderError(FormatError):
    code = 'E_HEADER'


class PayloadLengthError(FormatError):
    code = 'E_PAYLOAD'


class WavelengthOrderError(FormatError):
    code = 'E_WAVELENGTH'


class MosaicShapeError(FormatError):
    code = 'E_MOSAIC'


class ManifestError(FormatError):
    code = 'E_MANIFEST'


class CheckpointError(FormatError):
    code = 'E_CHECKPOINT'


class GeometryError(HyKeyException):
    code = 'E_GEOMETRY'


class PointAtInfinityError(GeometryError):
    code = 'E_POINT_AT_INFINITY'


class DegenerateMotionError(GeometryError):
    code = 'E_DEGENERATE_MOTION'


class EpipoleDegenerateError(GeometryError):
    code = 'E_EPIPOLE_DEGENERATE'


class AmbiguityError(GeometryError):
    code = 'E_AMBIGUITY'


class DegenerateSampleError(HyKeyException):
    """a random draw was unusable, the sampler is retried"""
    code = 'E_DEGENERATE_SAMPLE'
