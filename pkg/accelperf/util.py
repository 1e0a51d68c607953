# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <http://www.gnu.org/licenses/>.
import numbers

import numpy

__all__ = [
    'ceil_div',
    'ceil_to_multiple',
    'check_fraction',
    'check_positive',
    'is_power_of_two',
]


def ceil_div(a, b):
    """Integer division rounding towards positive infinity."""
    return -(-int(a) // int(b))


def ceil_to_multiple(value, multiple):
    """Round `value` up to the next multiple of `multiple`.

    Parameters
    ----------
    value : int
        Non-negative integer.

    multiple : int
        Positive integer.

    Returns
    -------
    rounded : int
        Smallest multiple of `multiple` that is greater than or equal to `value`.
    """
    return ceil_div(value, multiple) * int(multiple)


def is_power_of_two(value):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        return False
    return bool(value > 0 and (value & (value - 1)) == 0)


def check_positive(value, name, integral=False, allow_zero=False):
    """Check that `value` is a finite positive number.

    Parameters
    ----------
    value : object
        The value to check.

    name : str
        Name of the quantity, used in the error message.

    integral : bool, optional, default: False
        Whether `value` must be an integer.

    allow_zero : bool, optional, default: False
        Whether zero is accepted.

    Returns
    -------
    value : int or float
        The validated value.
    """
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise ValueError("{} must be a number, but got {!r}".format(name, value))
    if integral and not isinstance(value, numbers.Integral):
        raise ValueError("{} must be an integer, but got {!r}".format(name, value))
    if not numpy.isfinite(value):
        raise ValueError("{} must be finite, but got {!r}".format(name, value))
    if value < 0 or (value == 0 and not allow_zero):
        kind = "non-negative" if allow_zero else "positive"
        raise ValueError("{} must be {}, but got {!r}".format(name, kind, value))
    return value


def check_fraction(value, name, allow_zero=False):
    """Check that `value` lies in (0, 1], or [0, 1] if `allow_zero` is set."""
    check_positive(value, name, allow_zero=allow_zero)
    if value > 1:
        raise ValueError("{} must be at most 1, but got {!r}".format(name, value))
    return value
