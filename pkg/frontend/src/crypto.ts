/**
 * Browser-side primitives matching the platform: SHA-256 digests, scrypt
 * (RFC 7914) key derivation for keystore PINs, AES-GCM keystore decryption
 * and Ed25519 signatures, all on WebCrypto except the scrypt core.
 */

export function b64encode(bytes: Uint8Array): string {
  let binary = "";
  for (const b of bytes) binary += String.fromCharCode(b);
  return btoa(binary);
}

export function b64decode(text: string): Uint8Array {
  const binary = atob(text);
  const out = new Uint8Array(binary.length);
  for (let i = 0; i < binary.length; i++) out[i] = binary.charCodeAt(i);
  return out;
}

export function utf8(text: string): Uint8Array {
  return new TextEncoder().encode(text);
}

export function hex(bytes: Uint8Array): string {
  return Array.from(bytes, (b) => b.toString(16).padStart(2, "0")).join("");
}

export async function sha256hex(data: Uint8Array): Promise<string> {
  const digest = await crypto.subtle.digest("SHA-256", data as BufferSource);
  return hex(new Uint8Array(digest));
}

export function formatTs(epochSeconds: number): string {
  return new Date(epochSeconds * 1000).toISOString().replace(/\.\d{3}Z$/, "Z");
}

export function parseTs(text: string): number {
  const ms = Date.parse(text);
  if (Number.isNaN(ms)) throw new Error(`bad timestamp ${text}`);
  return Math.floor(ms / 1000);
}

// ---------------------------------------------------------------------------
// scrypt (RFC 7914)
// ---------------------------------------------------------------------------

async function pbkdf2Sha256(password: Uint8Array, salt: Uint8Array, dkLen: number): Promise<Uint8Array> {
  const key = await crypto.subtle.importKey("raw", password as BufferSource, "PBKDF2", false, ["deriveBits"]);
  const bits = await crypto.subtle.deriveBits(
    { name: "PBKDF2", salt: salt as BufferSource, iterations: 1, hash: "SHA-256" },
    key,
    dkLen * 8,
  );
  return new Uint8Array(bits);
}

function salsa208(block: Uint32Array): void {
  const r = (v: number, n: number) => (v << n) | (v >>> (32 - n));
  let x0 = block[0]!, x1 = block[1]!, x2 = block[2]!, x3 = block[3]!;
  let x4 = block[4]!, x5 = block[5]!, x6 = block[6]!, x7 = block[7]!;
  let x8 = block[8]!, x9 = block[9]!, x10 = block[10]!, x11 = block[11]!;
  let x12 = block[12]!, x13 = block[13]!, x14 = block[14]!, x15 = block[15]!;
  for (let round = 0; round < 8; round += 2) {
    x4 ^= r((x0 + x12) | 0, 7); x8 ^= r((x4 + x0) | 0, 9);
    x12 ^= r((x8 + x4) | 0, 13); x0 ^= r((x12 + x8) | 0, 18);
    x9 ^= r((x5 + x1) | 0, 7); x13 ^= r((x9 + x5) | 0, 9);
    x1 ^= r((x13 + x9) | 0, 13); x5 ^= r((x1 + x13) | 0, 18);
    x14 ^= r((x10 + x6) | 0, 7); x2 ^= r((x14 + x10) | 0, 9);
    x6 ^= r((x2 + x14) | 0, 13); x10 ^= r((x6 + x2) | 0, 18);
    x3 ^= r((x15 + x11) | 0, 7); x7 ^= r((x3 + x15) | 0, 9);
    x11 ^= r((x7 + x3) | 0, 13); x15 ^= r((x11 + x7) | 0, 18);
    x1 ^= r((x0 + x3) | 0, 7); x2 ^= r((x1 + x0) | 0, 9);
    x3 ^= r((x2 + x1) | 0, 13); x0 ^= r((x3 + x2) | 0, 18);
    x6 ^= r((x5 + x4) | 0, 7); x7 ^= r((x6 + x5) | 0, 9);
    x4 ^= r((x7 + x6) | 0, 13); x5 ^= r((x4 + x7) | 0, 18);
    x11 ^= r((x10 + x9) | 0, 7); x8 ^= r((x11 + x10) | 0, 9);
    x9 ^= r((x8 + x11) | 0, 13); x10 ^= r((x9 + x8) | 0, 18);
    x12 ^= r((x15 + x14) | 0, 7); x13 ^= r((x12 + x15) | 0, 9);
    x14 ^= r((x13 + x12) | 0, 13); x15 ^= r((x14 + x13) | 0, 18);
  }
  block[0] = (block[0]! + x0) | 0; block[1] = (block[1]! + x1) | 0;
  block[2] = (block[2]! + x2) | 0; block[3] = (block[3]! + x3) | 0;
  block[4] = (block[4]! + x4) | 0; block[5] = (block[5]! + x5) | 0;
  block[6] = (block[6]! + x6) | 0; block[7] = (block[7]! + x7) | 0;
  block[8] = (block[8]! + x8) | 0; block[9] = (block[9]! + x9) | 0;
  block[10] = (block[10]! + x10) | 0; block[11] = (block[11]! + x11) | 0;
  block[12] = (block[12]! + x12) | 0; block[13] = (block[13]! + x13) | 0;
  block[14] = (block[14]! + x14) | 0; block[15] = (block[15]! + x15) | 0;
}

function blockMix(input: Uint32Array, output: Uint32Array, r: number): void {
  // input/output: 2r blocks of 16 words each
  const x = new Uint32Array(16);
  x.set(input.subarray((2 * r - 1) * 16, 2 * r * 16));
  for (let i = 0; i < 2 * r; i++) {
    for (let k = 0; k < 16; k++) x[k] = x[k]! ^ input[i * 16 + k]!;
    salsa208(x);
    // even blocks to the front half, odd blocks to the back half
    const dest = i % 2 === 0 ? (i / 2) * 16 : (r + (i - 1) / 2) * 16;
    output.set(x, dest);
  }
}

export async function scrypt(
  password: Uint8Array,
  salt: Uint8Array,
  N: number,
  r: number,
  p: number,
  dkLen: number,
): Promise<Uint8Array> {
  const blockWords = 32 * r; // 128*r bytes
  const b = await pbkdf2Sha256(password, salt, p * 128 * r);
  const bWords = new Uint32Array(b.buffer, b.byteOffset, b.byteLength / 4);
  const v = new Uint32Array(N * blockWords);
  const x = new Uint32Array(blockWords);
  const y = new Uint32Array(blockWords);
  for (let chunk = 0; chunk < p; chunk++) {
    x.set(bWords.subarray(chunk * blockWords, (chunk + 1) * blockWords));
    for (let i = 0; i < N; i += 2) {
      v.set(x, i * blockWords);
      blockMix(x, y, r);
      v.set(y, (i + 1) * blockWords);
      blockMix(y, x, r);
    }
    for (let i = 0; i < N; i += 2) {
      let j = (x[(2 * r - 1) * 16]! >>> 0) % N;
      for (let k = 0; k < blockWords; k++) x[k] = x[k]! ^ v[j * blockWords + k]!;
      blockMix(x, y, r);
      j = (y[(2 * r - 1) * 16]! >>> 0) % N;
      for (let k = 0; k < blockWords; k++) y[k] = y[k]! ^ v[j * blockWords + k]!;
      blockMix(y, x, r);
    }
    bWords.set(x, chunk * blockWords);
  }
  return pbkdf2Sha256(password, new Uint8Array(bWords.buffer, bWords.byteOffset, bWords.byteLength), dkLen);
}

// ---------------------------------------------------------------------------
// AES-GCM and Ed25519
// ---------------------------------------------------------------------------

export async function aesGcmDecrypt(
  key: Uint8Array,
  nonce: Uint8Array,
  ciphertext: Uint8Array,
): Promise<Uint8Array> {
  const cryptoKey = await crypto.subtle.importKey("raw", key as BufferSource, "AES-GCM", false, ["decrypt"]);
  const plain = await crypto.subtle.decrypt(
    { name: "AES-GCM", iv: nonce as BufferSource },
    cryptoKey,
    ciphertext as BufferSource,
  );
  return new Uint8Array(plain);
}

const PKCS8_ED25519_PREFIX = new Uint8Array([
  0x30, 0x2e, 0x02, 0x01, 0x00, 0x30, 0x05, 0x06, 0x03, 0x2b, 0x65, 0x70, 0x04, 0x22, 0x04, 0x20,
]);

export async function ed25519Sign(seed: Uint8Array, message: Uint8Array): Promise<Uint8Array> {
  const pkcs8 = new Uint8Array(PKCS8_ED25519_PREFIX.length + seed.length);
  pkcs8.set(PKCS8_ED25519_PREFIX);
  pkcs8.set(seed, PKCS8_ED25519_PREFIX.length);
  const key = await crypto.subtle.importKey("pkcs8", pkcs8 as BufferSource, "Ed25519", false, ["sign"]);
  pkcs8.fill(0);
  const signature = await crypto.subtle.sign("Ed25519", key, message as BufferSource);
  return new Uint8Array(signature);
}

export async function ed25519Verify(
  publicKey: Uint8Array,
  signature: Uint8Array,
  message: Uint8Array,
): Promise<boolean> {
  const key = await crypto.subtle.importKey("raw", publicKey as BufferSource, "Ed25519", false, ["verify"]);
  return crypto.subtle.verify("Ed25519", key, signature as BufferSource, message as BufferSource);
}
