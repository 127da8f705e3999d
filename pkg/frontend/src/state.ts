/**
 * Console state store: connection phase, latest telemetry, command log.
 *
 * The displayed image timestamp is kept monotone (late frames are
 * discarded) and commands are only sendable while the link is live.
 */

import type { ImageFrame } from "./protocol.js";

export type Connection = "disconnected" | "handshaking" | "live";

export interface RobotSnapshot {
  joints: Record<string, number>;
  torso: { position: number; target: number };
  head: { pan: number; tilt: number; pan_target: number; tilt_target: number };
  base: { x: number; y: number; theta: number };
  mode: string;
  laser: { active: boolean; angle: number };
  drops: number;
  time: number;
}

export type CommandStatus = "pending" | "acked" | "timeout";

export interface CommandLogEntry {
  seq: number;
  cmd: string;
  sentAt: number;
  status: CommandStatus;
  accepted?: boolean;
}

export interface CustomMessage {
  label: string;
  data: string;
  receivedAt: number;
}

const COMMAND_LOG_LIMIT = 50;
const CUSTOM_LOG_LIMIT = 10;

export class ConsoleState {
  connection: Connection = "disconnected";
  latestFrame: ImageFrame | null = null;
  latestState: RobotSnapshot | null = null;
  commandLog: CommandLogEntry[] = [];
  customLog: CustomMessage[] = [];
  dropCounter = 0;
  lastError = "";
  framesReceived = 0;

  get live(): boolean {
    return this.connection === "live";
  }

  setConnection(connection: Connection): void {
    this.connection = connection;
  }

  /** Returns false (and keeps the old frame) if the timestamp regressed. */
  acceptFrame(frame: ImageFrame): boolean {
    if (this.latestFrame !== null && frame.timestamp < this.latestFrame.timestamp) {
      return false;
    }
    this.latestFrame = frame;
    this.framesReceived += 1;
    return true;
  }

  acceptState(snapshot: RobotSnapshot): void {
    this.latestState = snapshot;
    this.dropCounter = snapshot.drops ?? 0;
  }

  acceptCustom(label: string, data: string, now: number): void {
    this.customLog.push({ label, data, receivedAt: now });
    if (this.customLog.length > CUSTOM_LOG_LIMIT) {
      this.customLog.shift();
    }
  }

  logCommand(seq: number, cmd: string, now: number): CommandLogEntry {
    const entry: CommandLogEntry = { seq, cmd, sentAt: now, status: "pending" };
    this.commandLog.push(entry);
    if (this.commandLog.length > COMMAND_LOG_LIMIT) {
      this.commandLog.shift();
    }
    return entry;
  }

  ackCommand(seq: number, accepted: boolean): void {
    const entry = this.commandLog.find((e) => e.seq === seq);
    if (entry !== undefined && entry.status === "pending") {
      entry.status = "acked";
      entry.accepted = accepted;
    }
  }

  /** Visible timeout marker for a command that never got its ACK. */
  timeoutCommand(seq: number): void {
    const entry = this.commandLog.find((e) => e.seq === seq);
    if (entry !== undefined && entry.status === "pending") {
      entry.status = "timeout";
    }
  }

  resetLink(): void {
    this.connection = "disconnected";
    // telemetry and logs survive so the operator keeps context across drops
  }
}
