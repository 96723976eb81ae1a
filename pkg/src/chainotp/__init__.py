"""Ledger-backed two-and-a-half-factor authentication, desk-scale.

Factor one is an Ed25519 signing key bound to a DID through an
issuer-signed credential. Factor one-and-a-half is a tree of one-time
passwords: the 16-byte OTP presented with a Merkle proof, then its
precursor revealed from an air-gapped authenticator. Every OTP
publication goes through a per-provider registry contract on a simulated
chain, so stolen-client logins fail at the precursor step while leaving
immediate, checkable on-chain evidence.
"""

from .crypto import (
    DIGEST_LEN,
    OTP_LEN,
    SEED_LEN,
    Digest,
    KeyPair,
    OtpValue,
    Seed,
    digest,
    generate_keypair,
    generate_seed,
    prf,
    sign,
    truncate_to_otp,
    verify,
)
from .identity import (
    Did,
    DidRegistry,
    IdentityProvider,
    VerifiableCredential,
    create_did,
    verify_credential,
)
from .ledger import (
    DEPLOY_GAS,
    INSERT_OTP_GAS,
    PROFILES,
    ChainProfile,
    InclusionProof,
    Ledger,
    LedgerBlock,
    LedgerTx,
    RegistryContract,
    light_verify,
    max_auth_per_second,
    state_storage_bytes,
)
from .merkle import MerkleProof, MerkleTree, build_tree, prove, verify_proof
from .mnemonic import (
    ChecksumError,
    Mnemonic,
    MnemonicError,
    UnknownWordError,
    WordCountError,
    WORDLIST,
)
from .mnemonic import decode as mnemonic_decode
from .mnemonic import encode as mnemonic_encode
from .otp import (
    AuthenticatorState,
    ClientWallet,
    OtpExhaustedError,
    PrecursorReveal,
    bootstrap_client,
    derive_all_otps,
    derive_precursor,
    new_authenticator,
)
from .protocol import (
    ABORTED_INVALID,
    ABORTED_MISUSE,
    EXHAUSTION,
    GRANTED,
    Authenticator,
    BootstrapResult,
    MisuseEvidence,
    ProtocolOutcome,
    ProviderUserRecord,
    SecureChannel,
    ServiceProvider,
    Transcript,
    User,
    check_misuse,
    reinitialize,
    run_authentication,
    run_bootstrap,
)
from .scenario import (
    CostReport,
    ScenarioConfig,
    ScenarioParseError,
    bundled_scenario_names,
    emit_cost_report,
    load_bundled_scenario,
    parse_scenario,
    run_scenario,
)

__version__ = "0.1.0"
