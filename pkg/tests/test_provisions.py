import random
from collections import Counter

import pytest

import ecref
from taxledger.crypto import Q, ScalarSource, keygen, pedersen_commit
from taxledger.provisions import (
    MAX_BALANCE,
    AnonymitySet,
    AssetWitness,
    ShapeError,
    WitnessIncomplete,
    aggregate_commitment,
    balance_commitment,
    build_asset_commitments,
    commitment_set_from_text,
    commitment_set_to_text,
    decode_commitment_set,
    encode_commitment_set,
    load_commitment_set,
    random_instance,
    save_commitment_set,
    total_assets,
    witness_from_text,
    witness_to_text,
)


def _keys(n, tag=b"k"):
    return [keygen(tag + bytes([i])) for i in range(n)]


def test_balance_commitment_cases(params):
    assert balance_commitment(0, params).is_identity()
    assert balance_commitment(1, params) == params.g
    assert balance_commitment(9, params) == pedersen_commit(9, 0, params)
    with pytest.raises(ValueError):
        balance_commitment(-1, params)


def test_all_unowned_commitments_are_pure_blinders(params):
    kps = _keys(3)
    aset = AnonymitySet([k.vk for k in kps], [5, 6, 7])
    wit = AssetWitness([0, 0, 0], {}, [11, 12, 13], [21, 22, 23])
    comms = build_asset_commitments(aset, wit, params)
    for i in range(3):
        assert comms.p[i] == params.h ** wit.blinders_v[i]
        assert comms.l[i] == params.h ** wit.blinders_t[i]


def test_zero_blinders_expose_balance_and_key(params):
    kp = keygen(b"single")
    aset = AnonymitySet([kp.vk], [42])
    wit = AssetWitness([1], {0: kp.sk}, [0], [0])
    comms = build_asset_commitments(aset, wit, params)
    assert comms.p[0] == balance_commitment(42, params)
    assert comms.l[0] == kp.vk


def test_random_commitments_match_recomputation(params):
    inst = random_instance(4, b"recompute", owned=[0, 2])
    h = ecref.decode(params.h.to_bytes())
    for i in range(4):
        s = inst.witness.ownership_bits[i]
        bal = inst.aset.balances[i]
        x_hat = inst.witness.x_hat(i)
        p = pedersen_commit(bal * s, inst.witness.blinders_v[i], params)
        l = pedersen_commit(x_hat, inst.witness.blinders_t[i], params)
        assert inst.commitments.p[i] == p
        assert inst.commitments.l[i] == l
        # and once more on the slow reference curve
        ref_l = ecref.add(ecref.mul(ecref.G, x_hat), ecref.mul(h, inst.witness.blinders_t[i]))
        assert inst.commitments.l[i].to_bytes() == ecref.encode(ref_l)


def test_owned_without_key_is_incomplete(params):
    kps = _keys(2)
    aset = AnonymitySet([k.vk for k in kps], [1, 2])
    with pytest.raises(WitnessIncomplete):
        build_asset_commitments(aset, AssetWitness([1, 0], {}, [1, 1], [1, 1]), params)
    with pytest.raises(WitnessIncomplete):
        build_asset_commitments(
            aset, AssetWitness([1, 0], {0: kps[1].sk}, [1, 1], [1, 1]), params
        )


def test_shape_errors():
    kps = _keys(2)
    aset = AnonymitySet([k.vk for k in kps], [1, 2])
    with pytest.raises(ShapeError):
        build_asset_commitments(aset, AssetWitness([0], {}, [1], [1]))
    with pytest.raises(ShapeError):
        AnonymitySet([kps[0].vk], [1, 2])
    with pytest.raises(ShapeError):
        AnonymitySet([], [])
    with pytest.raises(ShapeError):
        AssetWitness([0, 1], {}, [1], [1, 2])
    with pytest.raises(ValueError):
        AnonymitySet([kps[0].vk], [MAX_BALANCE])
    with pytest.raises(ValueError):
        AssetWitness([2], {}, [1], [1])


def test_aggregate_single_entry(params):
    inst = random_instance(1, b"one")
    assert aggregate_commitment(inst.commitments) == inst.commitments.p[0]


def test_aggregate_identity_without_ownership_or_blinders(params):
    kps = _keys(4)
    aset = AnonymitySet([k.vk for k in kps], [3, 1, 4, 1])
    wit = AssetWitness([0] * 4, {}, [0] * 4, [9] * 4)
    assert aggregate_commitment(build_asset_commitments(aset, wit)).is_identity()


def test_aggregate_matches_witness_side(params):
    inst = random_instance(5, b"agg5")
    theta = sum(s * b for s, b in zip(inst.witness.ownership_bits, inst.aset.balances))
    v = sum(inst.witness.blinders_v) % Q
    assert aggregate_commitment(inst.commitments) == params.g ** theta * params.h ** v


def test_total_assets_cases():
    kps = _keys(2)
    aset = AnonymitySet([k.vk for k in kps], [3, 4])
    assert total_assets(aset, AssetWitness([0, 0], {}, [0, 0], [0, 0])) == 0
    assert total_assets(aset, AssetWitness([1, 1], {0: 1, 1: 1}, [0, 0], [0, 0])) == 7


def test_total_assets_brute_force():
    inst = random_instance(10, b"ten")
    expected = 0
    for i in range(10):
        if inst.witness.ownership_bits[i] == 1:
            expected += inst.aset.balances[i]
    assert total_assets(inst.aset, inst.witness) == expected


def test_aggregation_identity_property(params):
    rng = random.Random(2024)
    for trial in range(100):
        inst = random_instance(rng.randint(1, 64), f"agg-{trial}")
        z = aggregate_commitment(inst.commitments)
        assert z == pedersen_commit(inst.theta, inst.witness.v_sum, params)


def test_binding_spot_check(params):
    # falsification only: look for two distinct totals with the same aggregate
    src = ScalarSource(b"binding")
    seen = {}
    for _ in range(10_000):
        theta, v = src.below(2**40), src.scalar()
        z = pedersen_commit(theta, v, params).to_bytes()
        assert seen.setdefault(z, theta) == theta
    assert len(seen) == 10_000


def test_hiding_spot_check_byte_frequencies(params):
    # x-coordinate bytes of p_i look uniform whether or not s_i is set
    kp = keygen(b"hiding")
    src = ScalarSource(b"hiding")
    for s in (0, 1):
        counts = Counter()
        for _ in range(2000):
            aset = AnonymitySet([kp.vk], [1000])
            wit = AssetWitness([s], {0: kp.sk} if s else {}, [src.scalar()], [src.scalar()])
            p = build_asset_commitments(aset, wit, params).p[0].to_bytes()
            counts.update(p[1:])
        total = sum(counts.values())
        expected = total / 256
        chi2 = sum((counts[b] - expected) ** 2 / expected for b in range(256))
        # 255 degrees of freedom; 400 is far beyond the 0.9999 quantile
        assert chi2 < 400


def test_commitment_set_file_roundtrip(tmp_path):
    inst = random_instance(6, b"file")
    data = encode_commitment_set(inst.aset, inst.commitments)
    assert len(data) == 4 + 6 * (33 + 8 + 33 + 33)
    aset, comms = decode_commitment_set(data)
    assert aset == inst.aset and comms == inst.commitments
    aset2, comms2 = commitment_set_from_text(commitment_set_to_text(inst.aset, inst.commitments))
    assert aset2 == inst.aset and comms2 == inst.commitments
    for fmt in ("binary", "text"):
        path = tmp_path / f"c.{fmt}"
        save_commitment_set(path, inst.aset, inst.commitments, fmt)
        assert load_commitment_set(path) == (inst.aset, inst.commitments)


def test_commitment_set_truncated_rejected():
    inst = random_instance(2, b"trunc")
    data = encode_commitment_set(inst.aset, inst.commitments)
    with pytest.raises(ValueError):
        decode_commitment_set(data[:-1])


def test_witness_text_roundtrip():
    inst = random_instance(5, b"wit")
    aset, wit = witness_from_text(witness_to_text(inst.aset, inst.witness))
    assert aset == inst.aset
    assert wit == inst.witness
