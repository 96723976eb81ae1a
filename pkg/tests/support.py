"""Shared wiring for protocol-level tests: one ledger, one identity
provider, one service provider with a deployed registry contract."""

from __future__ import annotations

import random
from dataclasses import dataclass

from chainotp import (
    Authenticator,
    DidRegistry,
    IdentityProvider,
    Ledger,
    PROFILES,
    ProtocolOutcome,
    SecureChannel,
    ServiceProvider,
    Transcript,
    User,
    create_did,
    generate_keypair,
    run_authentication,
    run_bootstrap,
)
from chainotp.otp import ClientWallet
from chainotp.protocol import DEFAULT_SCHEME, ProviderUserRecord


@dataclass
class Member:
    user: User
    authenticator: Authenticator
    wallet: ClientWallet
    record: ProviderUserRecord
    channel: SecureChannel


class World:
    def __init__(
        self,
        seed: int = 0,
        n: int = 16,
        profile: str = "mainnet",
        abandon_after_blocks: int = 10,
    ) -> None:
        self.rng = random.Random(seed)
        self.n = n
        self.ledger = Ledger(PROFILES[profile])
        self.registry = DidRegistry()
        self.idp = IdentityProvider(
            create_did(self.registry, DEFAULT_SCHEME), generate_keypair(self.rng), self.registry
        )
        self.provider = ServiceProvider(
            "provider",
            self.ledger,
            self.idp.public_key,
            revocations_source=lambda: self.idp.revocations,
            abandon_after_blocks=abandon_after_blocks,
        )
        self.provider.deploy()
        self.ledger.seal_block()
        self.transcript = Transcript()

    def enroll(self, name: str = "user0", n: int | None = None) -> Member:
        user = User(name)
        authenticator = Authenticator(f"{name}-authenticator", self.rng)
        result = run_bootstrap(
            user, authenticator, self.idp, self.provider, self.ledger,
            n if n is not None else self.n, self.rng, transcript=self.transcript,
        )
        assert result.ok, result.reason
        assert result.wallet is not None and result.record is not None
        return Member(
            user=user,
            authenticator=authenticator,
            wallet=result.wallet,
            record=result.record,
            channel=SecureChannel(name, self.provider.name),
        )

    def auth(self, member: Member, **kwargs) -> ProtocolOutcome:
        return run_authentication(
            member.user, member.authenticator, member.wallet, self.provider, self.ledger,
            transcript=self.transcript, channel=member.channel, **kwargs,
        )

    @property
    def contract(self):
        assert self.provider.contract is not None
        return self.provider.contract
