/**
 * Client-side keystore: the same PIN-locked file the desktop tools use,
 * loaded into the browser. The private key is decrypted only inside sign
 * calls and never leaves this module; the lockout counter mirrors the file
 * semantics and persists in localStorage keyed by certificate fingerprint,
 * since the browser cannot write the keystore file back.
 */

import {
  aesGcmDecrypt,
  b64decode,
  b64encode,
  ed25519Sign,
  formatTs,
  sha256hex,
  utf8,
  scrypt,
} from "./crypto.js";
import { XElement, canonicalBytes, canonicalize, el, parseXml, requireChild } from "./xmlmini.js";

export const MAX_PIN_FAILURES = 3;
const ALGORITHM_ID = "ed25519";
const CANONICALIZATION_ID = "sda-c14n-1";
const SCRYPT = { N: 16384, r: 8, p: 1 };

export class KeystoreError extends Error {
  constructor(public code: string, message?: string) {
    super(message ?? code);
  }
}

export interface ViewBinding {
  stylesheetId: string;
  viewDigest: string;
}

interface LockoutState {
  failures: number;
  locked: boolean;
}

export class KeystoreHandle {
  private session: { pin: string; key: Uint8Array } | null = null;

  private constructor(
    public readonly certificateEl: XElement,
    public readonly fingerprint: string,
    public readonly role: string,
    public readonly subject: string,
    private readonly salt: Uint8Array,
    private readonly encrypted: Uint8Array,
    private lockout: LockoutState,
  ) {}

  static async load(keystoreXml: string): Promise<KeystoreHandle> {
    const root = parseXml(keystoreXml);
    if (root.name !== "keystore") throw new KeystoreError("MALFORMED_KEYSTORE");
    const certificate = requireChild(root, "certificate");
    const fingerprint = await sha256hex(canonicalBytes(certificate));
    const fileState: LockoutState = {
      failures: Number(root.attrs["failures"] ?? "0"),
      locked: root.attrs["locked"] === "true",
    };
    const stored = loadLockout(fingerprint);
    const lockout =
      stored && (stored.locked || stored.failures >= fileState.failures) ? stored : fileState;
    return new KeystoreHandle(
      certificate,
      fingerprint,
      certificate.attrs["role"] ?? "",
      certificate.attrs["subject"] ?? "",
      b64decode(requireChild(root, "pin-salt").text),
      b64decode(requireChild(root, "encrypted-private-key").text),
      lockout,
    );
  }

  get locked(): boolean {
    return this.lockout.locked;
  }

  get failures(): number {
    return this.lockout.failures;
  }

  private async unlock(pin: string): Promise<Uint8Array> {
    if (this.lockout.locked) throw new KeystoreError("KEYSTORE_LOCKED");
    const key =
      this.session && this.session.pin === pin
        ? this.session.key
        : await scrypt(utf8(pin), this.salt, SCRYPT.N, SCRYPT.r, SCRYPT.p, 32);
    const nonce = this.encrypted.subarray(0, 12);
    const ciphertext = this.encrypted.subarray(12);
    let seed: Uint8Array;
    try {
      seed = await aesGcmDecrypt(key, nonce, ciphertext);
    } catch {
      this.session = null;
      this.lockout.failures += 1;
      if (this.lockout.failures >= MAX_PIN_FAILURES) this.lockout.locked = true;
      saveLockout(this.fingerprint, this.lockout);
      throw new KeystoreError(
        this.lockout.locked ? "LOCKED_AFTER_THIS_ATTEMPT" : "WRONG_PIN",
      );
    }
    if (this.lockout.failures !== 0) {
      this.lockout.failures = 0;
      saveLockout(this.fingerprint, this.lockout);
    }
    this.session = { pin, key };
    return seed;
  }

  /** Sign content bytes; returns the `<signature>` element. */
  async sign(
    pin: string,
    content: Uint8Array,
    signedAt: number,
    view?: ViewBinding,
  ): Promise<XElement> {
    const seed = await this.unlock(pin);
    const attrs = {
      algorithm: ALGORITHM_ID,
      canonicalization: CANONICALIZATION_ID,
      "content-digest": await sha256hex(content),
      "signed-at": formatTs(signedAt),
      "view-digest": view?.viewDigest ?? "",
      "view-stylesheet": view?.stylesheetId ?? "",
    };
    const signedInfo = canonicalBytes(el("signed-info", attrs));
    const signature = await ed25519Sign(seed, signedInfo);
    seed.fill(0);
    return el(
      "signature",
      { ...attrs, signer: this.fingerprint },
      b64encode(signature),
    );
  }

  certificateXml(): string {
    return canonicalize(this.certificateEl);
  }
}

function lockoutKey(fingerprint: string): string {
  return `sda-lockout-${fingerprint}`;
}

function loadLockout(fingerprint: string): LockoutState | null {
  try {
    const raw = localStorage.getItem(lockoutKey(fingerprint));
    return raw ? (JSON.parse(raw) as LockoutState) : null;
  } catch {
    return null;
  }
}

function saveLockout(fingerprint: string, state: LockoutState): void {
  try {
    localStorage.setItem(lockoutKey(fingerprint), JSON.stringify(state));
  } catch {
    // storage unavailable: lockout still enforced in memory
  }
}
