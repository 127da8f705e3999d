/**
 * End-to-end: a real kernel process, a real WebSocket, the real console
 * client. Asserts the connect handshake, the render rate from the 10 Hz
 * stream, the torso slider effect on displayed state, and stream
 * resumption after a dropped link.
 */

import { spawn, type ChildProcessWithoutNullStreams } from "node:child_process";
import { mkdtempSync, writeFileSync, mkdirSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import WebSocket from "ws";

import { ConsoleClient, type SocketLike } from "../src/client.js";
import { startRenderLoop, type RenderSurface } from "../src/render.js";

const E2E_TIMEOUT = 60_000;

let proc: ChildProcessWithoutNullStreams;
let wsUrl: string;
let lastSocket: WebSocket | null = null;

const socketFactory = (url: string): SocketLike => {
  const socket = new WebSocket(url);
  lastSocket = socket;
  return socket as unknown as SocketLike;
};

class CountingSurface implements RenderSurface {
  renders = 0;
  putGray8(): void {
    this.renders += 1;
  }
  overlay(): void {}
}

function waitFor(predicate: () => boolean, timeoutMs: number, what: string): Promise<void> {
  return new Promise((resolve, reject) => {
    const started = Date.now();
    const poll = setInterval(() => {
      if (predicate()) {
        clearInterval(poll);
        resolve();
      } else if (Date.now() - started > timeoutMs) {
        clearInterval(poll);
        reject(new Error(`timed out waiting for ${what}`));
      }
    }, 10);
  });
}

beforeAll(async () => {
  const workdir = mkdtempSync(join(tmpdir(), "console-e2e-"));
  const scriptsDir = join(workdir, "scripts");
  mkdirSync(scriptsDir);
  // startup script translating console commands into robot API calls
  writeFileSync(
    join(scriptsDir, "main.py"),
    [
      "import json",
      "def _on_cmd(cmd, args_text):",
      "    args = json.loads(args_text)",
      "    if cmd == 'tuck':",
      "        robot.tuckBothArms()",
      "    elif cmd == 'torso':",
      "        robot.moveTorsoBy(float(args.get('delta', 0.0)))",
      "    elif cmd == 'mannequin':",
      "        robot.setToMannequinMode(bool(args.get('on', True)))",
      "robot.onRemoteCommand = _on_cmd",
      "",
    ].join("\n"),
  );
  writeFileSync(
    join(workdir, "svc.conf"),
    [
      "shell_port = 0",
      "client_port = 0",
      "ws_port = 0",
      "bus_port = 0",
      `log_file = ${join(workdir, "svc.log")}`,
      `data_dir = ${join(workdir, "data")}`,
      `scripts_dir = ${scriptsDir}`,
      "",
    ].join("\n"),
  );

  proc = spawn("python3", ["-m", "ride_kernel", "--config", join(workdir, "svc.conf")]);
  const port = await new Promise<number>((resolve, reject) => {
    let buffer = "";
    const onData = (chunk: Buffer) => {
      buffer += chunk.toString();
      const match = /'ws': (\d+)/.exec(buffer);
      if (match !== null) {
        proc.stdout.off("data", onData);
        resolve(Number(match[1]));
      }
    };
    proc.stdout.on("data", onData);
    proc.on("exit", (code) => reject(new Error(`kernel exited early (${code}): ${buffer}`)));
    setTimeout(() => reject(new Error(`kernel never reported ports: ${buffer}`)), 15_000);
  });
  wsUrl = `ws://127.0.0.1:${port}`;
}, E2E_TIMEOUT);

afterAll(async () => {
  if (proc !== undefined && proc.exitCode === null) {
    proc.kill("SIGINT");
    await new Promise((resolve) => proc.on("exit", resolve));
  }
});

describe("console against a running kernel", () => {
  it(
    "connects, renders at >= 8 fps, applies the torso slider, and survives a drop",
    async () => {
      const client = new ConsoleClient({ url: wsUrl, socketFactory, reconnectMs: 200 });
      client.connect();
      await waitFor(() => client.state.live, 2000, "live connection within 2 s");

      // render loop on its own ~40 Hz schedule, fed by the 10 Hz stream
      const surface = new CountingSurface();
      const stop = startRenderLoop(client.state, surface, (cb) => {
        setTimeout(cb, 25);
      });
      await waitFor(() => client.state.latestFrame !== null, 2000, "first camera frame");
      const rateStart = Date.now();
      const rendersBefore = surface.renders;
      await new Promise((resolve) => setTimeout(resolve, 2000));
      const elapsed = (Date.now() - rateStart) / 1000;
      const fps = (surface.renders - rendersBefore) / elapsed;
      expect(fps).toBeGreaterThanOrEqual(8);

      // torso slider: displayed target moves by the commanded delta within 1 s
      await waitFor(() => client.state.latestState !== null, 2000, "first state frame");
      const targetBefore = client.state.latestState!.torso.target;
      const seq = client.sendCommand({ cmd: "torso", delta: 0.02 });
      expect(seq).not.toBeNull();
      await waitFor(
        () =>
          client.state.latestState !== null &&
          Math.abs(client.state.latestState.torso.target - (targetBefore + 0.02)) < 1e-9,
        1000,
        "torso target to rise by the commanded delta",
      );
      // and the command shows as acknowledged-accepted in the log
      await waitFor(
        () => client.state.commandLog.find((e) => e.seq === seq)?.status === "acked",
        2000,
        "command ack",
      );
      expect(client.state.commandLog.find((e) => e.seq === seq)?.accepted).toBe(true);

      // drop the link out from under the client: it reconnects and resumes
      const framesBefore = client.state.framesReceived;
      lastSocket!.close();
      await waitFor(() => !client.state.live, 2000, "drop detection");
      await waitFor(() => client.state.live, 5000, "automatic reconnect");
      await waitFor(
        () => client.state.framesReceived > framesBefore + 5,
        5000,
        "stream to resume after reconnect",
      );

      stop();
      client.disconnect();
    },
    E2E_TIMEOUT,
  );
});
