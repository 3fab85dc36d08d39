"""Key authority: user registry, issuance, rotation and revocation.

Keystore layout::

    <root>/registry.json
    <root>/master.scmk                     current epoch only
    <root>/pk-epoch-<n>.scpk               one per epoch
    <root>/keys/epoch-<n>/<name>.scsk      current epoch only

Adding or revoking a user re-randomizes the master key (epoch + 1) and
re-issues keys to every remaining active user.  Keys from older epochs are
deleted; envelopes sealed under an older public key are therefore unreadable
with the keys the authority hands out.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import re
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from . import abe
from .envelope import (
    deserialize_master_key,
    deserialize_public_key,
    deserialize_secret_key,
    serialize_master_key,
    serialize_public_key,
    serialize_secret_key,
)
from .errors import InvalidAttribute, KeystoreUnavailable, RegistryError
from .groups import generate_context
from .policy import validate_attributes

log = logging.getLogger(__name__)

REGISTRY_FILE = "registry.json"
MASTER_FILE = "master.scmk"
REGISTRY_VERSION = 1

_NAME_RE = re.compile(r"^[A-Za-z0-9_.-]{1,64}$")

ACTIVE = "active"
REVOKED = "revoked"


def fingerprint(key_bytes: bytes) -> str:
    return base64.b64encode(hashlib.sha256(key_bytes).digest()).decode("ascii")


def atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class UserRecord:
    user_id: int
    name: str
    attributes: tuple[str, ...]
    key_epoch: int | None = None
    status: str = ACTIVE
    fingerprint: str | None = None

    def to_json(self) -> dict:
        return {
            "id": self.user_id,
            "name": self.name,
            "attributes": list(self.attributes),
            "key_epoch": self.key_epoch,
            "status": self.status,
            "fingerprint": self.fingerprint,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "UserRecord":
        return cls(
            user_id=int(obj["id"]),
            name=obj["name"],
            attributes=tuple(obj["attributes"]),
            key_epoch=obj.get("key_epoch"),
            status=obj.get("status", ACTIVE),
            fingerprint=obj.get("fingerprint"),
        )


@dataclass
class Registry:
    root: Path
    epoch: int
    public_key: abe.PublicKey = field(repr=False)
    master_key: abe.MasterKey = field(repr=False)
    users: list[UserRecord] = field(default_factory=list)
    security_level: str = "128-bit"
    rng: object = field(default=None, repr=False)

    # -- construction -------------------------------------------------------

    @classmethod
    def create(cls, root, security_level: str = "128-bit", rng=None, force: bool = False) -> "Registry":
        root = Path(root)
        if (root / REGISTRY_FILE).exists() and not force:
            raise RegistryError(f"a keystore already exists at {root}")
        ctx = generate_context(security_level)
        pk, mk = abe.setup(ctx, rng, epoch=0)
        reg = cls(root=root, epoch=0, public_key=pk, master_key=mk, security_level=security_level, rng=rng)
        reg._persist({})
        return reg

    @classmethod
    def load(cls, root, rng=None) -> "Registry":
        root = Path(root)
        try:
            meta = json.loads((root / REGISTRY_FILE).read_text())
        except FileNotFoundError:
            raise KeystoreUnavailable(f"no keystore at {root}") from None
        except json.JSONDecodeError as exc:
            raise KeystoreUnavailable(f"corrupt registry: {exc}") from None
        if meta.get("version") != REGISTRY_VERSION:
            raise KeystoreUnavailable(f"unsupported registry version {meta.get('version')!r}")
        epoch = int(meta["epoch"])
        mk = deserialize_master_key((root / MASTER_FILE).read_bytes())
        pk = deserialize_public_key((root / cls.public_key_name(epoch)).read_bytes())
        if mk.epoch != epoch or pk.epoch != epoch:
            raise KeystoreUnavailable("keystore files disagree on the current epoch")
        users = [UserRecord.from_json(u) for u in meta["users"]]
        return cls(
            root=root,
            epoch=epoch,
            public_key=pk,
            master_key=mk,
            users=users,
            security_level=meta.get("security_level", "128-bit"),
            rng=rng,
        )

    # -- paths ----------------------------------------------------------------

    @staticmethod
    def public_key_name(epoch: int) -> str:
        return f"pk-epoch-{epoch}.scpk"

    def public_key_path(self, epoch: int | None = None) -> Path:
        return self.root / self.public_key_name(self.epoch if epoch is None else epoch)

    def key_path(self, name: str, epoch: int | None = None) -> Path:
        return self.root / "keys" / f"epoch-{self.epoch if epoch is None else epoch}" / f"{name}.scsk"

    # -- queries --------------------------------------------------------------

    def find(self, ident) -> UserRecord:
        for rec in self.users:
            if rec.user_id == ident or rec.name == ident or str(rec.user_id) == str(ident):
                return rec
        raise RegistryError(f"unknown user {ident!r}")

    def active_users(self) -> list[UserRecord]:
        return [u for u in self.users if u.status == ACTIVE]

    def load_user_key(self, ident) -> abe.UserSecretKey:
        rec = self.find(ident)
        if rec.status != ACTIVE:
            raise RegistryError(f"user {rec.name!r} is revoked")
        return deserialize_secret_key(self.key_path(rec.name).read_bytes())

    # -- mutations ------------------------------------------------------------

    def register_user(self, name: str, attributes) -> tuple[int, abe.UserSecretKey]:
        """Rotate, re-issue every active key, then issue the newcomer's key."""
        if not _NAME_RE.match(name or ""):
            raise RegistryError(f"invalid user name {name!r}")
        if any(u.name == name for u in self.users):
            raise RegistryError(f"duplicate user name {name!r}")
        try:
            attrs = tuple(sorted(validate_attributes(attributes)))
        except InvalidAttribute as exc:
            raise RegistryError(str(exc)) from None
        user_id = max((u.user_id for u in self.users), default=0) + 1
        record = UserRecord(user_id=user_id, name=name, attributes=attrs)
        issued = self._rotate(extra=[record])
        self.users.append(record)
        self._persist(issued)
        log.info("registered %s (id %d) at epoch %d", name, user_id, self.epoch)
        return user_id, issued[name][0]

    def revoke_user(self, ident) -> "Registry":
        rec = self.find(ident)
        if rec.status != ACTIVE:
            raise RegistryError(f"user {rec.name!r} is already revoked")
        rec.status = REVOKED
        rec.key_epoch = None
        rec.fingerprint = None
        issued = self._rotate()
        self._persist(issued)
        log.info("revoked %s at epoch %d", rec.name, self.epoch)
        return self

    def _rotate(self, extra=()) -> dict:
        ctx = self.master_key.ctx
        new_epoch = self.epoch + 1
        pk, mk = abe.setup(ctx, self.rng, epoch=new_epoch)
        issued = {}
        for rec in list(self.active_users()) + list(extra):
            sk = abe.keygen(mk, rec.attributes, self.rng)
            data = serialize_secret_key(sk)
            issued[rec.name] = (sk, data)
            rec.key_epoch = new_epoch
            rec.fingerprint = fingerprint(data)
        self.epoch, self.public_key, self.master_key = new_epoch, pk, mk
        return issued

    def _persist(self, issued: dict) -> None:
        # Keys and public material first; registry.json last commits the epoch.
        epoch_dir = self.root / "keys" / f"epoch-{self.epoch}"
        for name, (_, data) in issued.items():
            atomic_write(epoch_dir / f"{name}.scsk", data)
        atomic_write(self.public_key_path(), serialize_public_key(self.public_key))
        atomic_write(self.root / MASTER_FILE, serialize_master_key(self.master_key))
        meta = {
            "version": REGISTRY_VERSION,
            "security_level": self.security_level,
            "epoch": self.epoch,
            "users": [u.to_json() for u in self.users],
        }
        atomic_write(self.root / REGISTRY_FILE, (json.dumps(meta, indent=2) + "\n").encode())
        keys_dir = self.root / "keys"
        if keys_dir.is_dir():
            for old in keys_dir.iterdir():
                if old.is_dir() and old.name != f"epoch-{self.epoch}":
                    shutil.rmtree(old)
