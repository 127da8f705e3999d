/**
 * WebSocket client for the kernel bridge.
 *
 * Handles the HELLO/WELCOME handshake, subscribes to the image, state,
 * and custom streams, keeps the link alive with heartbeats, tracks every
 * COMMAND until its ACK (or a visible timeout marker after 2 s), and
 * reconnects automatically after a drop.
 */

import {
  MsgType,
  ProtocolError,
  decodeFrame,
  decodeImagePayload,
  decodeJsonPayload,
  encodeFrame,
  encodeJsonFrame,
} from "./protocol.js";
import { ConsoleState, type RobotSnapshot } from "./state.js";

/** The subset of the WebSocket API the client needs; `ws` matches it too. */
export interface SocketLike {
  binaryType: string;
  send(data: Uint8Array): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ConsoleClientOptions {
  url: string;
  socketFactory?: SocketFactory;
  ackTimeoutMs?: number;
  heartbeatMs?: number;
  reconnectMs?: number;
  joyRateMs?: number;
  now?: () => number;
  onChange?: () => void;
}

const DEFAULT_ACK_TIMEOUT_MS = 2000;
const DEFAULT_HEARTBEAT_MS = 5000; // server evicts silent clients after 10 s
const DEFAULT_RECONNECT_MS = 1000;
const DEFAULT_JOY_RATE_MS = 100; // virtual joypad emits at 10 Hz while held

export class ConsoleClient {
  readonly state = new ConsoleState();
  private readonly url: string;
  private readonly makeSocket: SocketFactory;
  private readonly ackTimeoutMs: number;
  private readonly heartbeatMs: number;
  private readonly reconnectMs: number;
  private readonly joyRateMs: number;
  private readonly now: () => number;
  private readonly onChange: () => void;

  private socket: SocketLike | null = null;
  private seq = 0;
  private closedByUser = false;
  private heartbeatTimer: ReturnType<typeof setInterval> | null = null;
  private reconnectTimer: ReturnType<typeof setTimeout> | null = null;
  private joyTimer: ReturnType<typeof setInterval> | null = null;

  constructor(options: ConsoleClientOptions) {
    this.url = options.url;
    this.makeSocket = options.socketFactory ?? ((url) => new WebSocket(url) as unknown as SocketLike);
    this.ackTimeoutMs = options.ackTimeoutMs ?? DEFAULT_ACK_TIMEOUT_MS;
    this.heartbeatMs = options.heartbeatMs ?? DEFAULT_HEARTBEAT_MS;
    this.reconnectMs = options.reconnectMs ?? DEFAULT_RECONNECT_MS;
    this.joyRateMs = options.joyRateMs ?? DEFAULT_JOY_RATE_MS;
    this.now = options.now ?? (() => Date.now());
    this.onChange = options.onChange ?? (() => {});
  }

  connect(): void {
    this.closedByUser = false;
    this.openSocket();
  }

  disconnect(): void {
    this.closedByUser = true;
    this.stopJoy();
    this.teardownSocket();
    this.state.resetLink();
    this.onChange();
  }

  private openSocket(): void {
    this.teardownSocket();
    let socket: SocketLike;
    try {
      socket = this.makeSocket(this.url);
    } catch (err) {
      this.state.lastError = String(err);
      this.scheduleReconnect();
      return;
    }
    socket.binaryType = "arraybuffer";
    this.socket = socket;
    this.state.setConnection("handshaking");
    this.onChange();

    socket.onopen = () => {
      this.sendFrame(encodeJsonFrame(MsgType.Hello, this.nextSeq(), { name: "web-console" }));
    };
    socket.onmessage = (ev) => this.handleMessage(ev.data);
    socket.onerror = () => {
      this.state.lastError = "socket error";
    };
    socket.onclose = () => {
      this.socket = null;
      this.stopHeartbeat();
      this.state.resetLink();
      this.onChange();
      this.scheduleReconnect();
    };
  }

  private teardownSocket(): void {
    this.stopHeartbeat();
    if (this.reconnectTimer !== null) {
      clearTimeout(this.reconnectTimer);
      this.reconnectTimer = null;
    }
    if (this.socket !== null) {
      const socket = this.socket;
      this.socket = null;
      socket.onclose = null;
      try {
        socket.close();
      } catch {
        /* already closed */
      }
    }
  }

  private scheduleReconnect(): void {
    if (this.closedByUser || this.reconnectTimer !== null) {
      return;
    }
    this.reconnectTimer = setTimeout(() => {
      this.reconnectTimer = null;
      if (!this.closedByUser) {
        this.openSocket();
      }
    }, this.reconnectMs);
  }

  private handleMessage(data: unknown): void {
    if (typeof data === "string") {
      this.state.lastError = "unexpected text message";
      return;
    }
    let frame;
    try {
      frame = decodeFrame(data as ArrayBuffer);
    } catch (err) {
      if (err instanceof ProtocolError) {
        this.state.lastError = err.message;
        return;
      }
      throw err;
    }
    switch (frame.msgType) {
      case MsgType.Welcome: {
        this.state.setConnection("live");
        this.sendFrame(
          encodeJsonFrame(MsgType.Subscribe, this.nextSeq(), {
            streams: ["image", "state", "custom"],
          }),
        );
        this.startHeartbeat();
        break;
      }
      case MsgType.TelemetryImage:
        this.state.acceptFrame(decodeImagePayload(frame.payload));
        break;
      case MsgType.TelemetryState:
        this.state.acceptState(decodeJsonPayload(frame) as unknown as RobotSnapshot);
        break;
      case MsgType.TelemetryCustom: {
        const body = decodeJsonPayload(frame);
        this.state.acceptCustom(String(body.label), String(body.data), this.now());
        break;
      }
      case MsgType.CommandAck: {
        const body = decodeJsonPayload(frame);
        this.state.ackCommand(Number(body.seq), Boolean(body.accepted));
        break;
      }
      case MsgType.Error: {
        const body = decodeJsonPayload(frame);
        this.state.lastError = String(body.error ?? "server error");
        break;
      }
      case MsgType.Bye:
        this.teardownSocket();
        this.state.resetLink();
        break;
      default:
        this.state.lastError = `unexpected frame type ${frame.msgType}`;
    }
    this.onChange();
  }

  /** Send one command object (must have a `cmd` field); live link only. */
  sendCommand(body: Record<string, unknown>): number | null {
    if (!this.state.live || this.socket === null) {
      return null;
    }
    const seq = this.nextSeq();
    this.sendFrame(encodeJsonFrame(MsgType.Command, seq, body));
    this.state.logCommand(seq, String(body.cmd), this.now());
    setTimeout(() => {
      this.state.timeoutCommand(seq);
      this.onChange();
    }, this.ackTimeoutMs);
    this.onChange();
    return seq;
  }

  /** Virtual joypad: emit `joy` commands at a fixed rate while held. */
  startJoy(vx: number, vy: number, vtheta: number): void {
    this.stopJoy();
    const emit = () => this.sendCommand({ cmd: "joy", vx, vy, vtheta });
    emit();
    this.joyTimer = setInterval(emit, this.joyRateMs);
  }

  stopJoy(): void {
    if (this.joyTimer !== null) {
      clearInterval(this.joyTimer);
      this.joyTimer = null;
      this.sendCommand({ cmd: "joy", vx: 0, vy: 0, vtheta: 0 });
    }
  }

  private startHeartbeat(): void {
    this.stopHeartbeat();
    this.heartbeatTimer = setInterval(() => {
      this.sendFrame(encodeFrame(MsgType.Heartbeat, this.nextSeq(), new Uint8Array(0)));
    }, this.heartbeatMs);
  }

  private stopHeartbeat(): void {
    if (this.heartbeatTimer !== null) {
      clearInterval(this.heartbeatTimer);
      this.heartbeatTimer = null;
    }
  }

  private sendFrame(frame: Uint8Array): void {
    if (this.socket !== null) {
      try {
        this.socket.send(frame);
      } catch (err) {
        this.state.lastError = String(err);
      }
    }
  }

  private nextSeq(): number {
    const seq = this.seq;
    this.seq = (this.seq + 1) >>> 0;
    return seq;
  }
}
