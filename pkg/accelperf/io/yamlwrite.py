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

__all__ = ['dump_document']


def dump_document(document, destination=None):
    """Write a mapping as a block-style YAML document.

    Keys are written in insertion order and floats use their shortest
    round-trip representation, so reading the document back yields
    identical values.

    Parameters
    ----------
    document : dict
        Mapping containing only YAML-representable values.

    destination : str, path-like, file-like object or None
        Where to write to. If None, the document is returned as string.
        A file handle passed in is left open.

    Returns
    -------
    text : str or None
        The serialized document if `destination` is None.
    """
    text = yaml.safe_dump(document, default_flow_style=False, sort_keys=False)
    if destination is None:
        return text

    if isinstance(destination, (str, os.PathLike)):
        with open(destination, 'w') as fp:
            fp.write(text)
    else:
        destination.write(text)
    return None
