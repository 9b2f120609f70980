import hashlib

import pytest
from hypothesis import given, strategies as st

from icnsim.merkle import MerkleProof, MerkleTree, compute_root, hash_leaf, hash_node, verify


def test_single_leaf_root_is_leaf_hash():
    t = MerkleTree([b"only"])
    assert t.root == hashlib.sha256(b"\x00only").digest()
    assert verify(b"only", t.proof(0), t.root)


def test_three_leaves_promote_odd_node():
    a, b, c = (hash_leaf(x) for x in (b"a", b"b", b"c"))
    expected = hash_node(hash_node(a, b), c)
    t = MerkleTree([b"a", b"b", b"c"])
    assert t.root == expected
    proof = t.proof(2)
    assert proof.path == ((hash_node(a, b), "L"),)
    assert compute_root(proof.leaf_hash, proof.path) == expected


def test_empty_tree_rejected():
    with pytest.raises(ValueError):
        MerkleTree([])


@given(st.lists(st.binary(max_size=40), min_size=1, max_size=17), st.data())
def test_every_leaf_proves_and_others_do_not(leaves, data):
    t = MerkleTree(leaves)
    i = data.draw(st.integers(0, len(leaves) - 1))
    proof = t.proof(i)
    assert verify(leaves[i], proof, t.root)
    assert not verify(leaves[i] + b"x", proof, t.root)
    assert not verify(leaves[i], proof, bytes(32))
    again = MerkleProof.from_dict(proof.to_dict())
    assert again == proof


def test_leaf_and_interior_hashes_are_domain_separated():
    # an interior digest presented as leaf data must not verify
    t = MerkleTree([b"a", b"b"])
    inner = hash_leaf(b"a") + hash_leaf(b"b")
    assert not verify(inner, MerkleProof(hash_leaf(inner), (), t.root), t.root)


def test_malformed_proof_side_rejected():
    with pytest.raises(ValueError):
        MerkleProof.from_dict({"leaf_hash": "00", "path": [{"sibling": "00", "side": "X"}], "root": "00"})
