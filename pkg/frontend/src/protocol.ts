/**
 * Binary frame codec for the kernel's client link.
 *
 * Frame layout (big-endian):
 *   magic 0x52 0x4B | version u8 | type u8 | seq u32 | len u32 | payload
 *
 * Over the WebSocket bridge every binary message carries exactly one
 * frame, so decodeFrame is strict: leftover bytes are a protocol error.
 */

export const MAGIC_0 = 0x52;
export const MAGIC_1 = 0x4b;
export const PROTOCOL_VERSION = 1;
export const HEADER_LEN = 12;
export const MAX_PAYLOAD = 1 << 20;

export enum MsgType {
  Hello = 1,
  Welcome = 2,
  Subscribe = 3,
  Unsubscribe = 4,
  TelemetryImage = 5,
  TelemetryState = 6,
  TelemetryCustom = 7,
  Command = 8,
  CommandAck = 9,
  Heartbeat = 10,
  Error = 11,
  Bye = 12,
}

export interface WireFrame {
  msgType: number;
  seq: number;
  payload: Uint8Array;
  version: number;
}

export class ProtocolError extends Error {}

export function encodeFrame(msgType: number, seq: number, payload: Uint8Array): Uint8Array {
  if (payload.length > MAX_PAYLOAD) {
    throw new ProtocolError(`payload of ${payload.length} bytes exceeds 1 MiB`);
  }
  const out = new Uint8Array(HEADER_LEN + payload.length);
  const view = new DataView(out.buffer);
  view.setUint8(0, MAGIC_0);
  view.setUint8(1, MAGIC_1);
  view.setUint8(2, PROTOCOL_VERSION);
  view.setUint8(3, msgType);
  view.setUint32(4, seq >>> 0, false);
  view.setUint32(8, payload.length, false);
  out.set(payload, HEADER_LEN);
  return out;
}

export function encodeJsonFrame(msgType: number, seq: number, body: unknown): Uint8Array {
  return encodeFrame(msgType, seq, new TextEncoder().encode(JSON.stringify(body)));
}

/** Decode exactly one frame; a WS binary message must contain no more. */
export function decodeFrame(data: ArrayBuffer | Uint8Array): WireFrame {
  const bytes = data instanceof Uint8Array ? data : new Uint8Array(data);
  if (bytes.length < HEADER_LEN) {
    throw new ProtocolError(`message of ${bytes.length} bytes is shorter than a header`);
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  if (view.getUint8(0) !== MAGIC_0 || view.getUint8(1) !== MAGIC_1) {
    throw new ProtocolError("bad frame magic");
  }
  const version = view.getUint8(2);
  if (version !== PROTOCOL_VERSION) {
    throw new ProtocolError(`unsupported protocol version ${version}`);
  }
  const msgType = view.getUint8(3);
  const seq = view.getUint32(4, false);
  const length = view.getUint32(8, false);
  if (length > MAX_PAYLOAD) {
    throw new ProtocolError(`declared payload of ${length} bytes exceeds 1 MiB`);
  }
  if (HEADER_LEN + length !== bytes.length) {
    throw new ProtocolError(
      `message length ${bytes.length} does not match one frame of ${HEADER_LEN + length}`,
    );
  }
  return { msgType, seq, payload: bytes.slice(HEADER_LEN), version };
}

export function decodeJsonPayload(frame: WireFrame): Record<string, unknown> {
  return JSON.parse(new TextDecoder().decode(frame.payload)) as Record<string, unknown>;
}

export interface ImageFrame {
  width: number;
  height: number;
  format: number;
  timestamp: number;
  pixels: Uint8Array;
}

const IMAGE_HEADER_LEN = 13; // width u16 | height u16 | format u8 | timestamp f64

export function decodeImagePayload(payload: Uint8Array): ImageFrame {
  if (payload.length < IMAGE_HEADER_LEN) {
    throw new ProtocolError("image payload shorter than its header");
  }
  const view = new DataView(payload.buffer, payload.byteOffset, payload.byteLength);
  const width = view.getUint16(0, false);
  const height = view.getUint16(2, false);
  const format = view.getUint8(4);
  const timestamp = view.getFloat64(5, false);
  const pixels = payload.slice(IMAGE_HEADER_LEN);
  if (pixels.length !== width * height) {
    throw new ProtocolError(
      `pixel buffer of ${pixels.length} bytes does not match ${width}x${height}`,
    );
  }
  return { width, height, format, timestamp, pixels };
}
