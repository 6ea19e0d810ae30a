// @vitest-environment happy-dom
import { beforeEach, describe, expect, it } from "vitest";

import { OperatorConsole } from "../src/console.js";
import { Snapshot } from "../src/protocol.js";
import { UiSession } from "../src/session.js";

function makeSnapshot(overrides: Partial<Snapshot> = {}): Snapshot {
  return {
    v: 1, type: "snapshot", sim_time: 5.0, mode: "ee_target",
    joints_est: [0, 0, 0, 0, -0.4, 0.7, -0.5, 0],
    q_set: [0, 0, 0, 0, -0.4, 0.7, -0.5, 0],
    motors: [0, 0, 0, 0, 0, 0, 0, 0],
    tip_true: { position: [0.18, -0.05, -0.03], z_axis: [0.8, -0.57, 0.18] },
    tip_measured: { position: [0.18, -0.05, -0.03], z_axis: [0.8, -0.57, 0.18] },
    target: { position: [0.18, -0.05, -0.03], z_axis: [0.8, -0.57, 0.18] },
    e_pos_mm: 0.27, e_ori_deg: 0.71,
    clutch_a: { temperature_c: 85.0, engaged: true },
    clutch_b: { temperature_c: 30.0, engaged: false },
    needle_depth_m: 0.075, inserting: true, watchdog: "ok", hold: false,
    ...overrides,
  } as Snapshot;
}

function setup() {
  let now = 0;
  const sent: string[] = [];
  const session = new UiSession(() => now);
  session.attach({ send: (t) => sent.push(t) });
  session.role = "operator";
  const root = document.createElement("div");
  document.body.appendChild(root);
  const ui = new OperatorConsole(root, session);
  const feed = (snap: Snapshot) => {
    session.handleFrame(JSON.stringify(snap));
    ui.update();
  };
  return { session, sent, ui, root, feed, tick: (ms: number) => { now += ms; } };
}

beforeEach(() => {
  document.body.innerHTML = "";
});

describe("operator console rendering", () => {
  it("shows the tracking error readout in mm and deg", () => {
    const { feed, ui } = setup();
    feed(makeSnapshot());
    expect(ui.refs.errorReadout.textContent).toBe("0.27 mm / 0.71 deg");
  });

  it("renders clutch gauges with the engaged zone at 80 C and above", () => {
    const { feed, ui } = setup();
    feed(makeSnapshot());
    expect(ui.refs.clutchGauges.a.dataset.zone).toBe("engaged");
    expect(ui.refs.clutchGauges.a.textContent).toContain("ENGAGED");
    expect(ui.refs.clutchGauges.b.dataset.zone).toBe("released");
  });

  it("shows joint values and insertion progress", () => {
    const { feed, ui } = setup();
    feed(makeSnapshot());
    expect(ui.refs.jointCells[4].textContent).toContain("-0.4000 rad");
    expect(ui.refs.insertionLabel.textContent).toContain("75.0 mm");
    expect(ui.refs.insertionLabel.textContent).toContain("inserting");
  });

  it("disables all motion controls and banners when e-stopped", () => {
    const { feed, ui } = setup();
    feed(makeSnapshot({ mode: "estopped" }));
    expect(ui.refs.banner.dataset.state).toBe("estopped");
    for (const b of ui.refs.jogButtons) expect(b.disabled).toBe(true);
    expect(ui.refs.targetSubmit.disabled).toBe(true);
    expect(ui.refs.insertButton.disabled).toBe(true);
    for (const [, b] of ui.refs.modeButtons) expect(b.disabled).toBe(true);
    expect(ui.refs.resetButton.disabled).toBe(false); // the way back out
  });

  it("shows the stale banner when telemetry stops", () => {
    const { feed, ui, tick } = setup();
    feed(makeSnapshot());
    expect(ui.refs.banner.dataset.state).toBe("ok");
    tick(600);
    ui.update();
    expect(ui.refs.banner.dataset.state).toBe("stale");
    expect(ui.refs.targetSubmit.disabled).toBe(true);
  });

  it("disconnected session shows the reconnect view with entry disabled", () => {
    const { feed, ui, session } = setup();
    feed(makeSnapshot());
    session.detach();
    ui.update();
    expect(ui.refs.banner.dataset.state).toBe("disconnected");
    expect(ui.refs.estopButton.disabled).toBe(true);
  });
});

describe("target submission", () => {
  function fill(ui: OperatorConsole, position: number[], z: number[]) {
    const t = ui.refs.targetInputs;
    [t.px.value, t.py.value, t.pz.value] = position.map(String);
    [t.zx.value, t.zy.value, t.zz.value] = z.map(String);
  }

  it("sends a valid target exactly once per click", () => {
    const { feed, ui, sent } = setup();
    feed(makeSnapshot());
    fill(ui, [0.184, -0.05, -0.03], [0.8, -0.57, 0.18]);
    ui.submitTarget();
    const commands = sent.filter((t) => JSON.parse(t).type === "command");
    expect(commands.length).toBe(1);
    expect(JSON.parse(commands[0]).action.kind).toBe("set_ee_target");
    // double click while the ack is outstanding: no duplicate
    ui.submitTarget();
    expect(sent.filter((t) => JSON.parse(t).type === "command").length).toBe(1);
  });

  it("warns inline before sending when the target is beyond limits", () => {
    const { feed, ui, sent } = setup();
    feed(makeSnapshot());
    fill(ui, [0.184 + 0.4, -0.05, -0.03], [0.8, -0.57, 0.18]);
    ui.submitTarget();
    expect(sent.filter((t) => JSON.parse(t).type === "command").length).toBe(0);
    expect(ui.refs.targetWarning.textContent).toContain("step limit");
  });

  it("shows the ack-timeout retry prompt without resending", () => {
    const { feed, ui, sent, tick } = setup();
    feed(makeSnapshot());
    fill(ui, [0.184, -0.05, -0.03], [0.8, -0.57, 0.18]);
    ui.submitTarget();
    tick(1100);
    ui.update();
    expect(ui.refs.targetWarning.textContent).toContain("retry");
    expect(sent.filter((t) => JSON.parse(t).type === "command").length).toBe(1);
  });

  it("displays rejection reasons verbatim", () => {
    const { feed, ui, session, sent } = setup();
    feed(makeSnapshot({ mode: "insertion" }));
    const seq = session.command({ kind: "insert", depth: 0.06 })!;
    session.handleFrame(JSON.stringify(
      { v: 1, type: "reject", seq, accepted: false, reason: "no_grasp" }));
    ui.update();
    expect(ui.refs.targetWarning.textContent).toContain("no_grasp");
    expect(sent.length).toBeGreaterThan(0);
  });
});
