"""Full binary Merkle tree with self-contained membership proofs.

Leaves are hashed once at the leaf level (digest(data)), internal nodes
hash the concatenation of their children, so leaf data can never be
confused with an internal node. Proof entries carry an explicit side flag
rather than deriving sides from the index, which keeps verification
independent of the prover.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .crypto import DIGEST_LEN, Digest, digest
from .wire import read_u32le, u32le

_MAGIC = b"MKT1"
_VERSION = 1


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class MerkleProof:
    """Sibling path from leaf to root; is_left marks siblings on the left."""

    leaf_index: int
    siblings: tuple[tuple[Digest, bool], ...]

    def to_bytes(self) -> bytes:
        out = [u32le(self.leaf_index), u32le(len(self.siblings))]
        for node, is_left in self.siblings:
            out.append(b"\x01" if is_left else b"\x00")
            out.append(node)
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "MerkleProof":
        leaf_index, off = read_u32le(data, 0)
        count, off = read_u32le(data, off)
        siblings = []
        for _ in range(count):
            if off + 1 + DIGEST_LEN > len(data):
                raise ValueError("truncated proof")
            is_left = data[off] == 1
            node = data[off + 1:off + 1 + DIGEST_LEN]
            siblings.append((node, is_left))
            off += 1 + DIGEST_LEN
        return cls(leaf_index=leaf_index, siblings=tuple(siblings))


@dataclass(frozen=True)
class MerkleTree:
    """Complete tree in heap order: nodes[0] is the root, leaf i sits at
    nodes[leaf_count - 1 + i]."""

    leaf_count: int
    nodes: tuple[Digest, ...]

    @property
    def root(self) -> Digest:
        return self.nodes[0]

    def to_bytes(self) -> bytes:
        header = _MAGIC + bytes([_VERSION]) + u32le(self.leaf_count)
        return header + b"".join(self.nodes)

    @classmethod
    def from_bytes(cls, data: bytes) -> "MerkleTree":
        if data[:4] != _MAGIC:
            raise ValueError("bad tree magic")
        if data[4] != _VERSION:
            raise ValueError(f"unsupported tree version {data[4]}")
        leaf_count, off = read_u32le(data, 5)
        n_nodes = 2 * leaf_count - 1
        if len(data) != off + n_nodes * DIGEST_LEN:
            raise ValueError("tree payload length mismatch")
        nodes = tuple(
            data[off + i * DIGEST_LEN: off + (i + 1) * DIGEST_LEN] for i in range(n_nodes)
        )
        return cls(leaf_count=leaf_count, nodes=nodes)


def build_tree(leaves: Sequence[bytes]) -> MerkleTree:
    """Build the complete tree over a power-of-two number of data leaves."""
    n = len(leaves)
    if not _is_power_of_two(n) or n < 2:
        raise ValueError(f"leaf count must be a power of two >= 2, got {n}")
    nodes: list[Digest] = [b""] * (2 * n - 1)
    for i, leaf in enumerate(leaves):
        nodes[n - 1 + i] = digest(leaf)
    for k in range(n - 2, -1, -1):
        nodes[k] = digest(nodes[2 * k + 1] + nodes[2 * k + 2])
    return MerkleTree(leaf_count=n, nodes=tuple(nodes))


def prove(tree: MerkleTree, leaf_index: int) -> MerkleProof:
    if not 0 <= leaf_index < tree.leaf_count:
        raise IndexError(f"leaf index {leaf_index} out of range 0..{tree.leaf_count - 1}")
    siblings = []
    k = tree.leaf_count - 1 + leaf_index
    while k > 0:
        if k % 2 == 1:  # left child; sibling on the right
            siblings.append((tree.nodes[k + 1], False))
        else:
            siblings.append((tree.nodes[k - 1], True))
        k = (k - 1) // 2
    return MerkleProof(leaf_index=leaf_index, siblings=tuple(siblings))


def verify_proof(root: Digest, leaf: bytes, proof: MerkleProof) -> bool:
    """Recompute the root from the leaf along the proof path and compare."""
    current = digest(leaf)
    for node, is_left in proof.siblings:
        if len(node) != DIGEST_LEN:
            return False
        current = digest(node + current) if is_left else digest(current + node)
    return current == root
