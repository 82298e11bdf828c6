"""Multi-tenant accounts and isolated per-user file storage.

Layout on disk: one directory per workspace id under the storage root, plus
a single ``catalog.json`` holding accounts, quotas, and file metadata.
Writes go to a temp file and rename into place; catalog updates are
serialized under one lock so accounting never drifts.
"""

from __future__ import annotations

import hashlib
import json
import posixpath
import secrets
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from .errors import (
    AuthError,
    ConflictError,
    NotFoundError,
    PathSecurityError,
    QuotaError,
    ValidationError,
)

DEFAULT_QUOTA_BYTES = 2 * 1024**3
MIN_PASSWORD_LENGTH = 8

FILE_KINDS = (
    "image",
    "annotation",
    "record",
    "labelmap",
    "config",
    "checkpoint",
    "export",
    "other",
)

_EXTENSION_KINDS = {
    ".png": "image",
    ".jpg": "image",
    ".jpeg": "image",
    ".xml": "annotation",
    ".csv": "annotation",
    ".record": "record",
    ".tfrecord": "record",
    ".pbtxt": "labelmap",
    ".config": "config",
    ".ckpt": "checkpoint",
    ".zip": "export",
}


def infer_kind(rel_path: str) -> str:
    name = rel_path.rsplit("/", 1)[-1].lower()
    if "labelmap" in name:
        return "labelmap"
    dot = name.rfind(".")
    if dot < 0:
        return "other"
    return _EXTENSION_KINDS.get(name[dot:], "other")


def normalize_rel_path(rel_path: str) -> str:
    """Normalize and reject anything that could escape the workspace root."""
    if not rel_path or "\x00" in rel_path:
        raise PathSecurityError(f"invalid path {rel_path!r}")
    candidate = rel_path.replace("\\", "/")
    if candidate.startswith("/") or (len(candidate) > 1 and candidate[1] == ":"):
        raise PathSecurityError(f"absolute path not allowed: {rel_path!r}")
    normalized = posixpath.normpath(candidate)
    if normalized in (".", "") or normalized.startswith("../") or normalized == "..":
        raise PathSecurityError(f"path escapes workspace root: {rel_path!r}")
    for segment in normalized.split("/"):
        if segment == "..":
            raise PathSecurityError(f"path escapes workspace root: {rel_path!r}")
    return normalized


def _digest(content: bytes) -> str:
    return hashlib.sha256(content).hexdigest()


@dataclass
class UserAccount:
    user_id: str
    display_name: str
    credential_hash: str  # salt$hexdigest, never serialized outward
    created_at: float


@dataclass
class Workspace:
    workspace_id: str
    owner: str
    quota_bytes: int
    used_bytes: int = 0


@dataclass(frozen=True)
class StoredFile:
    rel_path: str
    size_bytes: int
    checksum: str
    kind: str


@dataclass
class _Session:
    token: str
    user_id: str
    expires_at: float


class WorkspaceStore:
    """Accounts, sessions, and per-workspace file trees."""

    def __init__(
        self,
        root: str | Path,
        default_quota_bytes: int = DEFAULT_QUOTA_BYTES,
        token_ttl_seconds: float = 24 * 3600,
        pbkdf2_iterations: int = 60_000,
    ):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.default_quota_bytes = default_quota_bytes
        self.token_ttl_seconds = token_ttl_seconds
        self.pbkdf2_iterations = pbkdf2_iterations
        self._lock = threading.RLock()
        self._accounts: dict[str, UserAccount] = {}
        self._by_name: dict[str, str] = {}
        self._workspaces: dict[str, Workspace] = {}
        self._workspace_by_owner: dict[str, str] = {}
        self._files: dict[str, dict[str, StoredFile]] = {}
        self._sessions: dict[str, _Session] = {}
        self._catalog_path = self.root / "catalog.json"
        self._load_catalog()

    # -- persistence -------------------------------------------------

    def _load_catalog(self) -> None:
        if not self._catalog_path.exists():
            return
        data = json.loads(self._catalog_path.read_text("utf-8"))
        for raw in data.get("accounts", []):
            account = UserAccount(**raw)
            self._accounts[account.user_id] = account
            self._by_name[account.display_name] = account.user_id
        for raw in data.get("workspaces", []):
            ws = Workspace(**raw)
            self._workspaces[ws.workspace_id] = ws
            self._workspace_by_owner[ws.owner] = ws.workspace_id
        for workspace_id, files in data.get("files", {}).items():
            self._files[workspace_id] = {
                rel: StoredFile(**raw) for rel, raw in files.items()
            }

    def _save_catalog(self) -> None:
        data = {
            "accounts": [vars(a) for a in self._accounts.values()],
            "workspaces": [vars(w) for w in self._workspaces.values()],
            "files": {
                workspace_id: {rel: vars(f) for rel, f in files.items()}
                for workspace_id, files in self._files.items()
            },
        }
        tmp = self._catalog_path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(data, sort_keys=True), "utf-8")
        tmp.replace(self._catalog_path)

    # -- accounts and sessions ----------------------------------------

    def _hash_password(self, password: str, salt: str) -> str:
        digest = hashlib.pbkdf2_hmac(
            "sha256", password.encode(), bytes.fromhex(salt), self.pbkdf2_iterations
        )
        return digest.hex()

    def create_account(
        self, display_name: str, password: str
    ) -> tuple[UserAccount, Workspace]:
        if not display_name:
            raise ValidationError("display_name must be non-empty")
        if len(password) < MIN_PASSWORD_LENGTH:
            raise ValidationError(
                f"password must be at least {MIN_PASSWORD_LENGTH} characters"
            )
        with self._lock:
            if display_name in self._by_name:
                raise ConflictError(f"display_name '{display_name}' already taken")
            salt = secrets.token_hex(16)
            account = UserAccount(
                user_id=secrets.token_hex(16),
                display_name=display_name,
                credential_hash=f"{salt}${self._hash_password(password, salt)}",
                created_at=time.time(),
            )
            workspace = Workspace(
                workspace_id=secrets.token_hex(16),
                owner=account.user_id,
                quota_bytes=self.default_quota_bytes,
            )
            self._accounts[account.user_id] = account
            self._by_name[display_name] = account.user_id
            self._workspaces[workspace.workspace_id] = workspace
            self._workspace_by_owner[account.user_id] = workspace.workspace_id
            self._files[workspace.workspace_id] = {}
            (self.root / workspace.workspace_id).mkdir(parents=True, exist_ok=True)
            self._save_catalog()
            return account, workspace

    def authenticate(self, display_name: str, password: str) -> str:
        # same error for unknown user and wrong password: no existence leak
        with self._lock:
            user_id = self._by_name.get(display_name)
            if user_id is not None:
                account = self._accounts[user_id]
                salt, _, expected = account.credential_hash.partition("$")
                if secrets.compare_digest(
                    self._hash_password(password, salt), expected
                ):
                    token = secrets.token_urlsafe(32)
                    self._sessions[token] = _Session(
                        token, user_id, time.time() + self.token_ttl_seconds
                    )
                    return token
        raise AuthError("invalid credentials")

    def resolve_token(self, token: str) -> str:
        with self._lock:
            session = self._sessions.get(token)
            if session is None or session.expires_at < time.time():
                self._sessions.pop(token, None)
                raise AuthError("invalid or expired token")
            return session.user_id

    def workspace_for_user(self, user_id: str) -> Workspace:
        with self._lock:
            workspace_id = self._workspace_by_owner.get(user_id)
            if workspace_id is None:
                raise NotFoundError("no workspace for user")
            return self._workspaces[workspace_id]

    def get_workspace(self, workspace_id: str) -> Workspace:
        with self._lock:
            ws = self._workspaces.get(workspace_id)
            if ws is None:
                raise NotFoundError("workspace not found")
            return ws

    # -- files ---------------------------------------------------------

    def _file_table(self, workspace_id: str) -> dict[str, StoredFile]:
        if workspace_id not in self._workspaces:
            raise NotFoundError("workspace not found")
        return self._files.setdefault(workspace_id, {})

    def _abs_path(self, workspace_id: str, rel_path: str) -> Path:
        return self.root / workspace_id / rel_path

    def put_file(
        self, workspace_id: str, rel_path: str, content: bytes, kind: str | None = None
    ) -> StoredFile:
        rel = normalize_rel_path(rel_path)
        if kind is not None and kind not in FILE_KINDS:
            raise ValidationError(f"unknown file kind '{kind}'")
        with self._lock:
            files = self._file_table(workspace_id)
            ws = self._workspaces[workspace_id]
            previous = files.get(rel)
            previous_size = previous.size_bytes if previous else 0
            if ws.used_bytes - previous_size + len(content) > ws.quota_bytes:
                raise QuotaError(
                    f"quota exceeded: {ws.used_bytes - previous_size + len(content)}"
                    f" > {ws.quota_bytes} bytes"
                )
            target = self._abs_path(workspace_id, rel)
            target.parent.mkdir(parents=True, exist_ok=True)
            tmp = target.with_name(target.name + ".tmp")
            tmp.write_bytes(content)
            tmp.replace(target)
            stored = StoredFile(
                rel_path=rel,
                size_bytes=len(content),
                checksum=_digest(content),
                kind=kind or infer_kind(rel),
            )
            files[rel] = stored
            ws.used_bytes = ws.used_bytes - previous_size + len(content)
            self._save_catalog()
            return stored

    def list_files(self, workspace_id: str, prefix: str | None = None) -> list[StoredFile]:
        with self._lock:
            files = self._file_table(workspace_id)
            selected = [
                f
                for rel, f in files.items()
                if prefix is None or rel.startswith(prefix)
            ]
            return sorted(selected, key=lambda f: f.rel_path)

    def stat_file(self, workspace_id: str, rel_path: str) -> StoredFile:
        rel = normalize_rel_path(rel_path)
        with self._lock:
            stored = self._file_table(workspace_id).get(rel)
            if stored is None:
                raise NotFoundError(f"no such file: {rel}")
            return stored

    def get_file(self, workspace_id: str, rel_path: str) -> bytes:
        rel = normalize_rel_path(rel_path)
        with self._lock:
            stored = self._file_table(workspace_id).get(rel)
            if stored is None:
                raise NotFoundError(f"no such file: {rel}")
            return self._abs_path(workspace_id, rel).read_bytes()

    def delete_file(self, workspace_id: str, rel_path: str) -> None:
        rel = normalize_rel_path(rel_path)
        with self._lock:
            files = self._file_table(workspace_id)
            stored = files.pop(rel, None)
            if stored is None:
                raise NotFoundError(f"no such file: {rel}")
            ws = self._workspaces[workspace_id]
            ws.used_bytes -= stored.size_bytes
            target = self._abs_path(workspace_id, rel)
            if target.exists():
                target.unlink()
            self._save_catalog()

    def file_paths(self, workspace_id: str) -> set[str]:
        with self._lock:
            return set(self._file_table(workspace_id))
