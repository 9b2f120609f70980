"""Binary Merkle tree over SHA-256 with domain-separated leaves and interior nodes.

Leaves hash as ``sha256(0x00 || data)`` and interior nodes as
``sha256(0x01 || left || right)``. A node without a sibling on its level is
promoted unchanged rather than duplicated.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import List, Sequence, Tuple

LEAF_PREFIX = b"\x00"
NODE_PREFIX = b"\x01"
HASH_NAME = "sha256"


def hash_leaf(data: bytes) -> bytes:
    return hashlib.sha256(LEAF_PREFIX + data).digest()


def hash_node(left: bytes, right: bytes) -> bytes:
    return hashlib.sha256(NODE_PREFIX + left + right).digest()


@dataclass(frozen=True)
class MerkleProof:
    leaf_hash: bytes
    # (sibling digest, side of the sibling: "L" or "R")
    path: Tuple[Tuple[bytes, str], ...]
    root: bytes

    def to_dict(self) -> dict:
        return {
            "leaf_hash": self.leaf_hash.hex(),
            "path": [{"sibling": s.hex(), "side": side} for s, side in self.path],
            "root": self.root.hex(),
        }

    @classmethod
    def from_dict(cls, d) -> "MerkleProof":
        path = []
        for step in d["path"]:
            if step["side"] not in ("L", "R"):
                raise ValueError(f"bad side {step['side']!r}")
            path.append((bytes.fromhex(step["sibling"]), step["side"]))
        return cls(bytes.fromhex(d["leaf_hash"]), tuple(path), bytes.fromhex(d["root"]))


def _levels(leaf_hashes: Sequence[bytes]) -> List[List[bytes]]:
    if not leaf_hashes:
        raise ValueError("cannot build a Merkle tree with no leaves")
    levels = [list(leaf_hashes)]
    while len(levels[-1]) > 1:
        cur = levels[-1]
        nxt = [hash_node(cur[i], cur[i + 1]) for i in range(0, len(cur) - 1, 2)]
        if len(cur) % 2:
            nxt.append(cur[-1])
        levels.append(nxt)
    return levels


class MerkleTree:
    def __init__(self, leaves: Sequence[bytes]):
        self.leaves = [bytes(l) for l in leaves]
        self.levels = _levels([hash_leaf(l) for l in self.leaves])

    @property
    def root(self) -> bytes:
        return self.levels[-1][0]

    def proof(self, index: int) -> MerkleProof:
        if not 0 <= index < len(self.leaves):
            raise IndexError(index)
        path = []
        i = index
        for level in self.levels[:-1]:
            sib = i ^ 1
            if sib < len(level):
                path.append((level[sib], "L" if sib < i else "R"))
            i //= 2
        return MerkleProof(self.levels[0][index], tuple(path), self.root)


def compute_root(leaf_hash: bytes, path) -> bytes:
    acc = leaf_hash
    for sibling, side in path:
        acc = hash_node(sibling, acc) if side == "L" else hash_node(acc, sibling)
    return acc


def verify(data: bytes, proof: MerkleProof, root: bytes) -> bool:
    return (
        hash_leaf(data) == proof.leaf_hash
        and proof.root == root
        and compute_root(proof.leaf_hash, proof.path) == root
    )
