"""Scenario configs, the deterministic runner, and the cost report.

A scenario file is line-oriented: a `scenario v1` header, `key = value`
settings, then a `[schedule]` section with one action per line. Runs are
fully determined by the RNG seed, so transcripts serialize byte-for-byte
identically across runs.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

from . import attack as attacks
from .crypto import OTP_LEN, generate_keypair
from .identity import DidRegistry, IdentityProvider, create_did
from .ledger import (
    DEPLOY_GAS,
    INSERT_OTP_GAS,
    Ledger,
    PROFILES,
    max_auth_per_second,
    state_storage_bytes,
)
from .otp import ClientWallet
from .protocol import (
    DEFAULT_SCHEME,
    Authenticator,
    SecureChannel,
    ServiceProvider,
    Transcript,
    User,
    reinitialize,
    run_authentication,
    run_bootstrap,
)

FORMAT_VERSION = "chainotp-transcript-v1"
ATTACK_KINDS = ("stolen_client", "stolen_authenticator", "replay", "delay", "malware_demo")
REINIT_MODES = {"fresh": "fresh_identity", "rekey": "rekey_signed_by_old"}


class ScenarioParseError(ValueError):
    def __init__(self, line_no: int, message: str) -> None:
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class Action:
    kind: str
    user: Optional[int] = None
    arg: Optional[str] = None
    line_no: int = 0


@dataclass(frozen=True)
class ScenarioConfig:
    rng_seed: int
    n_otps: int
    users: int
    chain_profile: str
    schedule: tuple[Action, ...]
    name: str = ""


def parse_scenario(text: str) -> ScenarioConfig:
    lines = text.splitlines()
    header_seen = False
    in_schedule = False
    settings: dict[str, str] = {}
    setting_lines: dict[str, int] = {}
    schedule: list[Action] = []

    for line_no, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if not header_seen:
            if line != "scenario v1":
                raise ScenarioParseError(line_no, "expected header 'scenario v1'")
            header_seen = True
            continue
        if line == "[schedule]":
            in_schedule = True
            continue
        if not in_schedule:
            if "=" not in line:
                raise ScenarioParseError(line_no, f"expected 'key = value', got {line!r}")
            key, _, value = line.partition("=")
            settings[key.strip()] = value.strip()
            setting_lines[key.strip()] = line_no
            continue
        schedule.append(_parse_action(line, line_no))

    if not header_seen:
        raise ScenarioParseError(1, "missing 'scenario v1' header")

    def intval(key: str, default: Optional[int] = None) -> int:
        if key not in settings:
            if default is None:
                raise ScenarioParseError(1, f"missing required setting '{key}'")
            return default
        try:
            return int(settings[key])
        except ValueError:
            raise ScenarioParseError(setting_lines[key], f"'{key}' must be an integer") from None

    seed = intval("seed", 0)
    if not 0 <= seed < 2**64:
        raise ScenarioParseError(setting_lines["seed"], "'seed' must fit in 64 bits")
    n_otps = intval("n_otps", 16)
    if n_otps < 2 or n_otps & (n_otps - 1):
        raise ScenarioParseError(setting_lines["n_otps"], "'n_otps' must be a power of two >= 2")
    users = intval("users", 1)
    if users < 0:
        raise ScenarioParseError(setting_lines["users"], "'users' must be >= 0")
    profile = settings.get("chain_profile", "mainnet")
    if profile not in PROFILES:
        raise ScenarioParseError(
            setting_lines["chain_profile"],
            f"unknown chain_profile {profile!r}; choose from {sorted(PROFILES)}",
        )
    for action in schedule:
        if action.user is not None and not 0 <= action.user < users:
            raise ScenarioParseError(
                action.line_no, f"action references user {action.user}, but users = {users}"
            )
    return ScenarioConfig(
        rng_seed=seed,
        n_otps=n_otps,
        users=users,
        chain_profile=profile,
        schedule=tuple(schedule),
        name=settings.get("name", ""),
    )


def _parse_action(line: str, line_no: int) -> Action:
    parts = line.split()
    kind = parts[0]
    if kind == "seal":
        if len(parts) != 1:
            raise ScenarioParseError(line_no, "'seal' takes no arguments")
        return Action(kind="seal", line_no=line_no)
    if kind in ("bootstrap", "auth"):
        if len(parts) != 2:
            raise ScenarioParseError(line_no, f"'{kind}' needs exactly one user index")
        return Action(kind=kind, user=_user_index(parts[1], line_no), line_no=line_no)
    if kind == "reinit":
        if len(parts) != 3 or parts[2] not in REINIT_MODES:
            raise ScenarioParseError(line_no, "'reinit' needs a user index and a mode (fresh|rekey)")
        return Action(kind="reinit", user=_user_index(parts[1], line_no), arg=parts[2], line_no=line_no)
    if kind == "attack":
        if len(parts) < 3 or parts[1] not in ATTACK_KINDS:
            raise ScenarioParseError(
                line_no, f"'attack' needs a kind from {ATTACK_KINDS} and a user index"
            )
        arg = parts[1]
        if parts[1] == "delay":
            if len(parts) != 4:
                raise ScenarioParseError(line_no, "'attack delay' needs a user index and a block count")
            try:
                blocks = int(parts[3])
            except ValueError:
                raise ScenarioParseError(line_no, "delay block count must be an integer") from None
            arg = f"delay:{blocks}"
        elif len(parts) != 3:
            raise ScenarioParseError(line_no, f"'attack {parts[1]}' takes exactly one user index")
        return Action(kind="attack", user=_user_index(parts[2], line_no), arg=arg, line_no=line_no)
    raise ScenarioParseError(line_no, f"unknown action {kind!r}")


def _user_index(token: str, line_no: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise ScenarioParseError(line_no, f"user index must be an integer, got {token!r}") from None


# ---------------------------------------------------------------------------
# Cost report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CostReport:
    deploy_gas: int
    auth_gas: int
    throughput: dict[str, int]
    users: int
    state_bytes: int
    state_bytes_million_users: int

    def as_dict(self) -> dict:
        return {
            "deploy_gas": self.deploy_gas,
            "auth_gas": self.auth_gas,
            "throughput_auth_per_second": dict(sorted(self.throughput.items())),
            "users": self.users,
            "state_bytes": self.state_bytes,
            "state_bytes_million_users": self.state_bytes_million_users,
        }

    def text_lines(self) -> list[str]:
        lines = [
            "cost report",
            f"  contract deployment gas : {self.deploy_gas}",
            f"  per-authentication gas  : {self.auth_gas}",
            "  throughput (auth/s), from floor(gas limit / auth gas / block interval):",
        ]
        for name in sorted(self.throughput):
            profile = PROFILES[name]
            lines.append(
                f"    {name:<12} {self.throughput[name]:>6}"
                f"  (limit {profile.block_gas_limit}, interval {profile.block_interval_seconds}s)"
            )
        lines.append(f"  registry state for {self.users} user(s): {self.state_bytes} bytes")
        lines.append(
            f"  registry state for 1,000,000 users: {self.state_bytes_million_users} bytes"
        )
        return lines


def emit_cost_report(config: ScenarioConfig) -> CostReport:
    return CostReport(
        deploy_gas=DEPLOY_GAS,
        auth_gas=INSERT_OTP_GAS,
        throughput={
            name: max_auth_per_second(profile, INSERT_OTP_GAS)
            for name, profile in PROFILES.items()
        },
        users=config.users,
        state_bytes=state_storage_bytes(config.users, OTP_LEN),
        state_bytes_million_users=state_storage_bytes(1_000_000, OTP_LEN),
    )


# ---------------------------------------------------------------------------
# Runner
# ---------------------------------------------------------------------------


@dataclass
class _UserSlot:
    user: User
    authenticator: Authenticator
    channel: SecureChannel
    wallet: Optional[ClientWallet] = None


@dataclass
class RunResult:
    exit_status: int
    transcript: Transcript
    actions: list[dict] = field(default_factory=list)
    report: Optional[CostReport] = None
    registry_size: int = 0
    chain_height: int = 0
    chain_dump: list[str] = field(default_factory=list)
    config: Optional[ScenarioConfig] = None

    def to_json(self) -> str:
        assert self.config is not None and self.report is not None
        doc = {
            "format": FORMAT_VERSION,
            "scenario": self.config.name,
            "seed": self.config.rng_seed,
            "n_otps": self.config.n_otps,
            "users": self.config.users,
            "chain_profile": self.config.chain_profile,
            "exit_status": self.exit_status,
            "actions": self.actions,
            "transcript": self.transcript.as_dicts(),
            "registry_size": self.registry_size,
            "chain_height": self.chain_height,
            "chain": [json.loads(line) for line in self.chain_dump],
            "cost_report": self.report.as_dict(),
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    def text_lines(self) -> list[str]:
        lines = []
        if self.config and self.config.name:
            lines.append(f"scenario: {self.config.name}")
        for entry in self.transcript.entries:
            step = f"step {entry.step:>2}" if entry.step is not None else "-------"
            status = "ok" if entry.ok else "FAIL"
            lines.append(f"  [{entry.phase:<9} {step}] {entry.actor:<22} {entry.action}  [{status}]")
        lines.append("")
        for action in self.actions:
            lines.append(f"action: {action['summary']}")
        lines.append("")
        lines.append(f"registry size: {self.registry_size}; chain height: {self.chain_height}")
        if self.report is not None:
            lines.extend(self.report.text_lines())
        lines.append(f"exit status: {self.exit_status}")
        return lines


def run_scenario(config: ScenarioConfig, *, seed_override: Optional[int] = None) -> RunResult:
    """Execute the schedule. Exit status is nonzero iff a scheduled honest
    step fails or an attack violates its expected outcome."""
    if seed_override is not None:
        config = ScenarioConfig(
            rng_seed=seed_override,
            n_otps=config.n_otps,
            users=config.users,
            chain_profile=config.chain_profile,
            schedule=config.schedule,
            name=config.name,
        )
    rng = random.Random(config.rng_seed)
    transcript = Transcript()
    ledger = Ledger(PROFILES[config.chain_profile])

    registry = DidRegistry()
    idp_keypair = generate_keypair(rng)
    idp_did = create_did(registry, DEFAULT_SCHEME)
    idp = IdentityProvider(idp_did, idp_keypair, registry)
    provider = ServiceProvider(
        "provider", ledger, idp.public_key, revocations_source=lambda: idp.revocations
    )
    provider.deploy()
    ledger.seal_block()
    transcript.log("setup", None, "provider", "registry contract deployed")

    slots = [
        _UserSlot(
            user=User(f"user{i}"),
            authenticator=Authenticator(f"user{i}-authenticator", rng),
            channel=SecureChannel(f"user{i}", "provider"),
        )
        for i in range(config.users)
    ]

    result = RunResult(exit_status=0, transcript=transcript, config=config)
    fail = False

    for action in config.schedule:
        if action.kind == "seal":
            ledger.seal_block()
            result.actions.append({"action": "seal", "summary": f"seal -> height {ledger.height}"})
            continue

        assert action.user is not None
        slot = slots[action.user]
        name = slot.user.name

        if action.kind == "bootstrap":
            res = run_bootstrap(
                slot.user, slot.authenticator, idp, provider, ledger,
                config.n_otps, rng, transcript=transcript, channel=slot.channel,
            )
            slot.wallet = res.wallet
            ok = res.ok
            fail = fail or not ok
            result.actions.append({
                "action": "bootstrap", "user": name, "ok": ok,
                "summary": f"bootstrap {name} -> {'ok' if ok else 'FAILED: ' + res.reason}",
            })
        elif action.kind == "auth":
            if slot.wallet is None:
                raise ScenarioParseError(action.line_no, f"auth before bootstrap for {name}")
            outcome = run_authentication(
                slot.user, slot.authenticator, slot.wallet, provider, ledger,
                transcript=transcript, channel=slot.channel,
            )
            ok = outcome.granted
            fail = fail or not ok
            result.actions.append({
                "action": "auth", "user": name, "outcome": outcome.kind,
                "summary": f"auth {name} -> {outcome.kind}"
                + (f" ({outcome.reason})" if not ok else ""),
            })
        elif action.kind == "reinit":
            if slot.wallet is None:
                raise ScenarioParseError(action.line_no, f"reinit before bootstrap for {name}")
            mode = REINIT_MODES[action.arg or "fresh"]
            res = reinitialize(
                slot.user, slot.authenticator, provider, ledger,
                mode=mode, n=config.n_otps, rng=rng, old_wallet=slot.wallet,
                identity_provider=idp, transcript=transcript, channel=slot.channel,
            )
            if res.ok:
                slot.wallet = res.wallet
            fail = fail or not res.ok
            result.actions.append({
                "action": "reinit", "user": name, "mode": mode, "ok": res.ok,
                "summary": f"reinit {name} ({mode}) -> {'ok' if res.ok else 'FAILED'}",
            })
        elif action.kind == "attack":
            entry, violated = _run_attack(action, slot, provider, ledger, rng, transcript)
            fail = fail or violated
            result.actions.append(entry)
        else:  # unreachable after parsing
            raise AssertionError(action.kind)

        if fail:
            result.exit_status = 1
            fail = False

    result.report = emit_cost_report(config)
    result.registry_size = provider.contract.size if provider.contract else 0
    result.chain_height = ledger.height
    result.chain_dump = ledger.dump_lines()
    return result


def _run_attack(
    action: Action,
    slot: _UserSlot,
    provider: ServiceProvider,
    ledger: Ledger,
    rng: random.Random,
    transcript: Transcript,
) -> tuple[dict, bool]:
    """Run one scheduled attack and check its expected outcome; returns the
    action record and whether an expectation was violated."""
    assert slot.wallet is not None, "attack scheduled before bootstrap"
    name = slot.user.name
    kind = action.arg or ""

    if kind == "stolen_client":
        out = attacks.attack_stolen_client_secrets(
            slot.wallet, provider, ledger, transcript=transcript
        )
        violated = out.authenticated or not out.detected
        tx_hex = out.evidence.tx_id.hex() if out.evidence else "none"
        summary = (
            f"attack stolen_client on {name} -> authenticated={out.authenticated} "
            f"detected={out.detected} evidence tx_id={tx_hex}"
        )
    elif kind == "stolen_authenticator":
        assert slot.authenticator.state is not None
        out = attacks.attack_stolen_authenticator(
            slot.authenticator.state.seed, provider, ledger
        )
        violated = out.authenticated or out.steps_reached != 0
        summary = (
            f"attack stolen_authenticator on {name} -> authenticated={out.authenticated} "
            f"steps_reached={out.steps_reached}"
        )
    elif kind == "replay":
        out = attacks.attack_replay_eavesdropper(list(slot.channel.records), provider, ledger)
        violated = out.authenticated
        summary = (
            f"attack replay on {name} -> authenticated={out.authenticated} "
            f"detected={out.detected}"
        )
    elif kind.startswith("delay:"):
        blocks = int(kind.split(":", 1)[1])
        out = attacks.attack_ledger_delay(
            blocks, slot.user, slot.authenticator, slot.wallet, provider, ledger,
            transcript=transcript,
        )
        if blocks < provider.abandon_after_blocks:
            violated = not out.authenticated  # liveness: delayed but granted
        else:
            violated = out.authenticated or out.detected  # no grant, no false alarm
        summary = (
            f"attack delay({blocks}) on {name} -> authenticated={out.authenticated} "
            f"detected={out.detected}"
        )
    elif kind == "malware_demo":
        lines = attacks.demo_malware_in_client(
            slot.user, slot.authenticator, slot.wallet, provider, ledger, rng
        )
        for line in lines:
            transcript.log("attack", None, "narrator", line)
        return {
            "action": "attack", "kind": kind, "user": name,
            "summary": f"attack malware_demo on {name} -> narrative only",
        }, False
    else:  # unreachable after parsing
        raise AssertionError(kind)

    return {
        "action": "attack", "kind": kind, "user": name,
        "authenticated": out.authenticated, "detected": out.detected,
        "evidence_tx_id": out.evidence.tx_id.hex() if out.evidence else None,
        "summary": summary,
    }, violated


# ---------------------------------------------------------------------------
# Bundled scenarios
# ---------------------------------------------------------------------------


def bundled_scenario_names() -> list[str]:
    root = resources.files("chainotp").joinpath("scenarios")
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".scn"))


def load_bundled_scenario(name: str) -> ScenarioConfig:
    path = resources.files("chainotp").joinpath(f"scenarios/{name}.scn")
    return parse_scenario(path.read_text("ascii"))
