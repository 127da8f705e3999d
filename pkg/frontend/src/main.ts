/** Browser entry point: wires the client, canvas, and operator controls. */

import { ConsoleClient } from "./client.js";
import { CanvasSurface, startRenderLoop } from "./render.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

function defaultUrl(): string {
  const host = location.hostname || "127.0.0.1";
  return `ws://${host}:27017`;
}

function main(): void {
  const urlInput = el<HTMLInputElement>("ws-url");
  urlInput.value = defaultUrl();

  const surface = new CanvasSurface(el<HTMLCanvasElement>("camera"));
  let stopLoop: () => void = () => {};

  function makeClient(url: string): ConsoleClient {
    const c = new ConsoleClient({ url, onChange: refresh });
    c.connect();
    stopLoop();
    stopLoop = startRenderLoop(c.state, surface, (cb) => requestAnimationFrame(cb));
    return c;
  }

  let client = makeClient(urlInput.value);

  el<HTMLButtonElement>("connect").onclick = () => {
    client.disconnect();
    client = makeClient(urlInput.value);
  };

  // operator controls -> COMMAND frames
  el<HTMLButtonElement>("tuck").onclick = () => client.sendCommand({ cmd: "tuck" });
  el<HTMLButtonElement>("mannequin-on").onclick = () =>
    client.sendCommand({ cmd: "mannequin", on: true });
  el<HTMLButtonElement>("mannequin-off").onclick = () =>
    client.sendCommand({ cmd: "mannequin", on: false });
  el<HTMLButtonElement>("joy-on").onclick = () => client.sendCommand({ cmd: "joy_on" });
  el<HTMLButtonElement>("joy-off").onclick = () => client.sendCommand({ cmd: "joy_off" });

  const torsoDelta = el<HTMLInputElement>("torso-delta");
  const torsoValue = el<HTMLSpanElement>("torso-value");
  torsoDelta.oninput = () => {
    torsoValue.textContent = Number(torsoDelta.value).toFixed(2);
  };
  el<HTMLButtonElement>("torso-apply").onclick = () =>
    client.sendCommand({ cmd: "torso", delta: Number(torsoDelta.value) });

  el<HTMLButtonElement>("look-apply").onclick = () =>
    client.sendCommand({
      cmd: "look",
      x: Number(el<HTMLInputElement>("look-x").value),
      y: Number(el<HTMLInputElement>("look-y").value),
      z: Number(el<HTMLInputElement>("look-z").value),
    });

  // virtual joypad: hold to drive, release to stop
  const JOY_SPEED = 0.2;
  const pads: Array<[string, number, number, number]> = [
    ["pad-fwd", JOY_SPEED, 0, 0],
    ["pad-back", -JOY_SPEED, 0, 0],
    ["pad-left", 0, JOY_SPEED, 0],
    ["pad-right", 0, -JOY_SPEED, 0],
    ["pad-ccw", 0, 0, 0.5],
    ["pad-cw", 0, 0, -0.5],
  ];
  for (const [id, vx, vy, vtheta] of pads) {
    const button = el<HTMLButtonElement>(id);
    button.onpointerdown = () => client.startJoy(vx, vy, vtheta);
    button.onpointerup = () => client.stopJoy();
    button.onpointerleave = () => client.stopJoy();
  }

  const commandBox = el<HTMLInputElement>("command-box");
  el<HTMLButtonElement>("command-send").onclick = sendFreeForm;
  commandBox.onkeydown = (ev) => {
    if (ev.key === "Enter") {
      sendFreeForm();
    }
  };
  function sendFreeForm(): void {
    try {
      const body = JSON.parse(commandBox.value) as Record<string, unknown>;
      if (typeof body.cmd !== "string") {
        throw new Error('missing "cmd" field');
      }
      client.sendCommand(body);
      commandBox.value = "";
    } catch (err) {
      el<HTMLSpanElement>("status-error").textContent = `bad command: ${err}`;
    }
  }

  function refresh(): void {
    const s = client.state;
    el<HTMLSpanElement>("status-conn").textContent = s.connection;
    el<HTMLSpanElement>("status-error").textContent = s.lastError;
    el<HTMLSpanElement>("status-drops").textContent = String(s.dropCounter);
    const st = s.latestState;
    if (st !== null) {
      el<HTMLSpanElement>("state-mode").textContent = st.mode;
      el<HTMLSpanElement>("state-torso").textContent =
        `${st.torso.position.toFixed(3)} m (target ${st.torso.target.toFixed(3)})`;
      el<HTMLSpanElement>("state-head").textContent =
        `pan ${st.head.pan.toFixed(2)} tilt ${st.head.tilt.toFixed(2)}`;
      el<HTMLSpanElement>("state-base").textContent =
        `x ${st.base.x.toFixed(2)} y ${st.base.y.toFixed(2)} th ${st.base.theta.toFixed(2)}`;
      el<HTMLSpanElement>("state-laser").textContent = st.laser.active
        ? `active @ ${st.laser.angle.toFixed(2)} rad`
        : "off";
    }
    const log = client.state.commandLog
      .slice(-8)
      .map((e) => {
        const mark = e.status === "pending" ? "..." : e.status === "timeout" ? "TIMEOUT" : e.accepted ? "ok" : "refused";
        return `#${e.seq} ${e.cmd} ${mark}`;
      })
      .join("\n");
    el<HTMLPreElement>("command-log").textContent = log;
  }

  refresh();
}

main();
