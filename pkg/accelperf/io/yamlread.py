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
import os

import yaml

from ..exceptions import SpecValidationError

__all__ = ['load_document']


def load_document(source):
    """Read a YAML document whose top level is a mapping.

    Parameters
    ----------
    source : str, path-like, file-like object or dict
        Path to a YAML file, an open file handle, or an already
        parsed mapping, which is returned unchanged.

    Returns
    -------
    document : dict
        The parsed document.
    """
    if isinstance(source, dict):
        return source

    if isinstance(source, (str, os.PathLike)):
        with open(source, 'r') as fp:
            text = fp.read()
        origin = os.fspath(source)
    else:
        text = source.read()
        origin = getattr(source, "name", "<stream>")

    try:
        document = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise SpecValidationError("malformed document {}: {}".format(origin, e)) from e

    if not isinstance(document, dict):
        raise SpecValidationError(
            "document {} must contain a mapping at the top level, but got {}".format(
                origin, type(document).__name__))
    return document
