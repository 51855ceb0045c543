"""Small fixtures for ledger tests: named accounts and one authority."""

from taxledger.crypto import hash_to_address, keygen
from taxledger.ledger import (
    Block,
    TaxPeriodConfig,
    apply_block,
    certify,
    genesis,
    make_transaction,
)


class World:
    def __init__(self, names, funding, period=4, authority_seed=b"authority"):
        self.cfg = TaxPeriodConfig(period)
        self.keys = {n: keygen(f"acct/{n}".encode()) for n in names}
        self.addr = {n: hash_to_address(kp.vk) for n, kp in self.keys.items()}
        self.auth = keygen(authority_seed)
        self.state = genesis({0: self.auth.vk}, {self.addr[n]: b for n, b in funding.items()})

    def cert(self, name, sk=None):
        return certify(self.addr[name], sk or self.auth.sk, 0)

    def tx(self, src, dst, amount, nonce=None, certified=False, state=None):
        state = state or self.state
        dest = self.cert(dst) if certified else self.addr[dst]
        if nonce is None:
            nonce = state.nonce_of(self.addr[src])
        return make_transaction(self.keys[src], dest, amount, nonce)

    def block(self, txs=(), state=None, **kw):
        state = state or self.state
        return Block(state.height + 1, state.tip, tuple(txs), **kw)

    def advance(self, txs=(), **kw):
        self.state = apply_block(self.state, self.block(txs, **kw), self.cfg)
        return self.state

    def advance_to(self, height):
        while self.state.height < height:
            self.advance()
        return self.state
