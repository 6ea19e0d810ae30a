// @vitest-environment happy-dom
// End-to-end check against the real teleop service: the console drives a
// reachable end-effector target until the displayed error falls below
// 0.5 mm within 5 simulated seconds, and e-stop disables the motion
// controls within one snapshot.
import { ChildProcess, spawn } from "node:child_process";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import WebSocket from "ws";

import { OperatorConsole } from "../src/console.js";
import { Snapshot } from "../src/protocol.js";
import { UiSession } from "../src/session.js";

const PORT = 8931;
const TOKEN = "ui-test-token";
const TIME_SCALE = 2.0;

let service: ChildProcess;

async function waitForService(timeoutMs = 60000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    const ok = await new Promise<boolean>((resolve) => {
      const probe = new WebSocket(`ws://127.0.0.1:${PORT}`);
      probe.on("open", () => { probe.close(); resolve(true); });
      probe.on("error", () => resolve(false));
    });
    if (ok) return;
    await new Promise((r) => setTimeout(r, 500));
  }
  throw new Error("teleop service did not come up");
}

beforeAll(async () => {
  service = spawn("python3", ["-m", "needlebot.cli", "serve",
                              "--port", String(PORT), "--token", TOKEN,
                              "--time-scale", String(TIME_SCALE)],
                  { stdio: "ignore" });
  await waitForService();
}, 90000);

afterAll(() => {
  service?.kill("SIGKILL");
});

interface Client {
  session: UiSession;
  ui: OperatorConsole;
  socket: WebSocket;
  nextSnapshot(): Promise<Snapshot>;
  close(): void;
}

async function connect(): Promise<Client> {
  const socket = new WebSocket(`ws://127.0.0.1:${PORT}`);
  await new Promise<void>((resolve, reject) => {
    socket.on("open", () => resolve());
    socket.on("error", reject);
  });
  socket.send(JSON.stringify({ v: 1, type: "hello", token: TOKEN,
                               client_id: "vitest" }));
  const session = new UiSession();
  session.attach({ send: (text) => socket.send(text) });
  const root = document.createElement("div");
  document.body.appendChild(root);
  const ui = new OperatorConsole(root, session);
  const waiters: ((s: Snapshot) => void)[] = [];
  socket.on("message", (data) => {
    const evt = session.handleFrame(String(data));
    ui.update();
    if (evt?.kind === "snapshot") {
      while (waiters.length) waiters.shift()!(evt.snapshot);
    }
  });
  const heartbeat = setInterval(
    () => socket.send(JSON.stringify({ v: 1, type: "ping" })), 150);
  return {
    session, ui, socket,
    nextSnapshot: () => new Promise<Snapshot>((resolve) => waiters.push(resolve)),
    close: () => { clearInterval(heartbeat); socket.close(); },
  };
}

async function commandAndAwaitAck(client: Client, action: object): Promise<void> {
  const seq = client.session.command(action as never);
  expect(seq).not.toBeNull();
  const deadline = Date.now() + 5000;
  while (client.session.pending !== null) {
    if (Date.now() > deadline) throw new Error("ack never arrived");
    await new Promise((r) => setTimeout(r, 20));
  }
  expect(client.session.lastRejection).toBeNull();
}

describe("console against the live service", () => {
  it("drives a reachable target below 0.5 mm within 5 s and e-stops cleanly",
      async () => {
    const client = await connect();
    try {
      let snap = await client.nextSnapshot();
      expect(client.session.role).toBe("operator");

      await commandAndAwaitAck(client, { kind: "set_mode", mode: "ee_target" });
      while (snap.mode !== "ee_target") snap = await client.nextSnapshot();

      // a target a few millimeters from the current tip, through the widget
      const tip = snap.tip_measured.position;
      const z = snap.tip_measured.z_axis;
      client.ui.seedHomeTip(tip);
      const t = client.ui.refs.targetInputs;
      t.px.value = String(tip[0] + 0.004);
      t.py.value = String(tip[1] - 0.003);
      t.pz.value = String(tip[2] + 0.002);
      t.zx.value = String(z[0]);
      t.zy.value = String(z[1]);
      t.zz.value = String(z[2]);
      client.ui.submitTarget();
      expect(client.ui.refs.targetWarning.textContent).toBe("");

      const startSim = snap.sim_time;
      let displayed = Infinity;
      while (true) {
        snap = await client.nextSnapshot();
        if (snap.e_pos_mm !== null && snap.e_pos_mm < 0.5) {
          displayed = snap.e_pos_mm;
          break;
        }
        expect(snap.sim_time - startSim).toBeLessThan(5.0);
      }
      expect(displayed).toBeLessThan(0.5);
      expect(client.ui.refs.errorReadout.textContent).toMatch(/^0\.\d+ mm/);
      expect(snap.sim_time - startSim).toBeLessThan(5.0);

      // e-stop: motion controls disabled within one snapshot of the mode flip
      await commandAndAwaitAck(client, { kind: "estop" });
      while (snap.mode !== "estopped") snap = await client.nextSnapshot();
      expect(client.ui.refs.banner.dataset.state).toBe("estopped");
      for (const b of client.ui.refs.jogButtons) expect(b.disabled).toBe(true);
      expect(client.ui.refs.targetSubmit.disabled).toBe(true);
      expect(client.ui.refs.insertButton.disabled).toBe(true);

      await commandAndAwaitAck(client, { kind: "reset" });
      while (snap.mode !== "idle") snap = await client.nextSnapshot();
      expect(client.ui.refs.banner.dataset.state).toBe("ok");
    } finally {
      client.close();
    }
  }, 60000);
});
