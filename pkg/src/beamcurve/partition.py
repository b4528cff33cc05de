"""Rectangle partition tree: hierarchical binary tiling of the image grid.

Tiles are inclusive pixel rectangles. A tile is split through its longer
axis (columns for squares) and the split line belongs to both children, so
sub-curves from sibling tiles meet exactly on interface pixels.
"""

from dataclasses import dataclass, field

import numpy as np

TOP, RIGHT, BOTTOM, LEFT = 1, 2, 4, 8
SIDE_NAMES = {TOP: "top", RIGHT: "right", BOTTOM: "bottom", LEFT: "left"}
SIDE_BITS = (TOP, RIGHT, BOTTOM, LEFT)

DEFAULT_N_MIN = 5


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class Tile:
    id: int
    level: int
    x0: int
    y0: int
    x1: int
    y1: int

    @property
    def width(self):
        return self.x1 - self.x0 + 1

    @property
    def height(self):
        return self.y1 - self.y0 + 1

    @property
    def area(self):
        return self.width * self.height

    @property
    def bounds(self):
        return (self.x0, self.y0, self.x1, self.y1)

    def contains(self, x, y):
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1


def split_bounds(x0, y0, x1, y1):
    """Split an inclusive rectangle in two along its longer axis.

    Returns ``(b1, b2, axis, line)``: child bounds, the axis of the interface
    (0 = a column, 1 = a row) and its coordinate.
    """
    w, h = x1 - x0 + 1, y1 - y0 + 1
    if w >= h:
        xm = (x0 + x1) // 2
        return (x0, y0, xm, y1), (xm, y0, x1, y1), 0, xm
    ym = (y0 + y1) // 2
    return (x0, y0, x1, ym), (x0, ym, x1, y1), 1, ym


def boundary_pixels(x0, y0, x1, y1):
    """Clockwise boundary walk from the top-left corner.

    Returns an ``(n, 2)`` int array of (x, y) and the side bitmask of each
    pixel; corners carry two bits.
    """
    pts = [(x, y0) for x in range(x0, x1 + 1)]
    pts += [(x1, y) for y in range(y0 + 1, y1 + 1)]
    pts += [(x, y1) for x in range(x1 - 1, x0 - 1, -1)]
    pts += [(x0, y) for y in range(y1 - 1, y0, -1)]
    pix = np.array(pts, dtype=np.int32)
    mask = np.zeros(len(pix), dtype=np.int8)
    mask[pix[:, 1] == y0] |= TOP
    mask[pix[:, 0] == x1] |= RIGHT
    mask[pix[:, 1] == y1] |= BOTTOM
    mask[pix[:, 0] == x0] |= LEFT
    return pix, mask


def side_pixels(tile, side):
    """Ordered pixel list of one side (left to right, top to bottom)."""
    x0, y0, x1, y1 = tile.bounds
    if side == TOP:
        return np.array([(x, y0) for x in range(x0, x1 + 1)], dtype=np.int32)
    if side == BOTTOM:
        return np.array([(x, y1) for x in range(x0, x1 + 1)], dtype=np.int32)
    if side == LEFT:
        return np.array([(x0, y) for y in range(y0, y1 + 1)], dtype=np.int32)
    if side == RIGHT:
        return np.array([(x1, y) for y in range(y0, y1 + 1)], dtype=np.int32)
    raise ValueError(f"unknown side {side!r}")


@dataclass
class PartitionTree:
    width: int
    height: int
    n_min: int
    tiles: list = field(default_factory=list)
    children: dict = field(default_factory=dict)
    interfaces: dict = field(default_factory=dict)
    axes: dict = field(default_factory=dict)

    @property
    def root(self):
        return self.tiles[0]

    @property
    def depth(self):
        return max(t.level for t in self.tiles)

    def is_leaf(self, tile):
        return tile.id not in self.children

    def leaves(self):
        return [t for t in self.tiles if t.id not in self.children]

    def level(self, j):
        return [t for t in self.tiles if t.level == j]

    def dump(self):
        """Line-oriented text dump (bounds, children, interface ends)."""
        lines = [f"partition {self.width}x{self.height} n_min={self.n_min}"]
        for t in self.tiles:
            line = f"tile {t.id} level={t.level} bounds={t.x0},{t.y0},{t.x1},{t.y1}"
            if t.id in self.children:
                c1, c2 = self.children[t.id]
                iface = self.interfaces[t.id]
                line += (
                    f" children={c1.id},{c2.id}"
                    f" interface={iface[0][0]},{iface[0][1]}-{iface[-1][0]},{iface[-1][1]}"
                )
            lines.append(line)
        return "\n".join(lines) + "\n"


def split(tile, n_min=DEFAULT_N_MIN, next_id=0):
    """Split a tile into two children and the shared interface line.

    Children get ids ``next_id`` and ``next_id + 1``.
    """
    if max(tile.width, tile.height) <= n_min:
        raise PartitionError(f"tile {tile.bounds} is a leaf for n_min={n_min}")
    b1, b2, axis, line = split_bounds(*tile.bounds)
    c1 = Tile(next_id, tile.level + 1, *b1)
    c2 = Tile(next_id + 1, tile.level + 1, *b2)
    if axis == 0:
        iface = np.array([(line, y) for y in range(tile.y0, tile.y1 + 1)], dtype=np.int32)
    else:
        iface = np.array([(x, line) for x in range(tile.x0, tile.x1 + 1)], dtype=np.int32)
    return c1, c2, iface


def build_partition(width, height, n_min=DEFAULT_N_MIN):
    if n_min < 3:
        raise PartitionError("n_min must be at least 3")
    if width < n_min or height < n_min:
        raise PartitionError(f"image {width}x{height} is smaller than n_min={n_min}")
    tree = PartitionTree(width, height, n_min)
    root = Tile(0, 0, 0, 0, width - 1, height - 1)
    tree.tiles.append(root)
    # breadth-first so ids increase with level
    queue = [root]
    while queue:
        nxt = []
        for tile in queue:
            if max(tile.width, tile.height) <= n_min:
                continue
            c1, c2, iface = split(tile, n_min, len(tree.tiles))
            tree.tiles.extend((c1, c2))
            tree.children[tile.id] = (c1, c2)
            tree.interfaces[tile.id] = iface
            tree.axes[tile.id] = 0 if iface[0][0] == iface[-1][0] else 1
            nxt.extend((c1, c2))
        queue = nxt
    return tree


def boundary_pairs(tile, child1, child2):
    """Parent-boundary pixel pairs split across the two children.

    ``p1`` lies on the parent boundary inside ``child1`` and ``p2`` inside
    ``child2``. Pairs on a common parent side and pairs with ``p1 == p2``
    (the interface ends belong to both children) are excluded.
    """
    pix, mask = boundary_pixels(*tile.bounds)
    in1 = [i for i, (x, y) in enumerate(pix) if child1.contains(x, y)]
    in2 = [i for i, (x, y) in enumerate(pix) if child2.contains(x, y)]
    pairs = []
    for i in in1:
        for j in in2:
            if i == j or mask[i] & mask[j]:
                continue
            pairs.append((tuple(pix[i]), tuple(pix[j])))
    return pairs


def stored_pair_count(tile):
    """Number of unordered boundary pairs lying on different sides."""
    _, mask = boundary_pixels(*tile.bounds)
    m = mask[:, None] & mask[None, :]
    return int(np.count_nonzero(np.triu(m == 0, 1)))
