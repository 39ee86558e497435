# -*- coding: utf-8 -*-
"""
(C) HyKey authors
All rights reserved
create time '2026/10/18 09:18'

Usage:

"""
from functools import wraps

from ..exception import DegenerateSampleError
from ..log_obj import log


def try_times(repeat_times, exceptions=DegenerateSampleError):
    """
    retry the wrapped sampler when it raises one of `exceptions`, re-raise after the last attempt
    :param repeat_times: attempts
    :param exceptions: exception class or tuple
    :return:

    Usage:
    >>> @try_times(20)
    >>> def draw(rng):
    >>>     h = sample(rng)
    >>>     if abs(np.linalg.det(h)) < 1e-8:
    >>>         raise DegenerateSampleError('singular')
    >>>     return h
    """

    def wrap(f):

        @wraps(f)
        def decorator(*args, **kwargs):
            for attempt in range(repeat_times):
                try:
                    return f(*args, **kwargs)
                except exceptions as e:
                    if attempt + 1 != repeat_times:
                        log.debug(f'{f.__name__} retry {attempt + 1}: {e}')
                    else:
                        log.warning(f'{f.__name__} failed after {attempt + 1} attempts')
                        raise

        return decorator

    return wrap


# default attempts for geometric samplers
try_times_default = try_times(50)
