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

__all__ = ['ScenarioError', 'SpecValidationError']


class SpecValidationError(ValueError):
    """An error indicating that a device specification document
    does not conform to the schema.

    The message names the offending field using dotted notation,
    e.g. ``memory.peak_bandwidth``.
    """


class ScenarioError(ValueError):
    """An error indicating that a scenario cannot be evaluated,
    because an axis is empty or has the wrong type, a device cannot
    be resolved, or two reports do not share the same axes.
    """
