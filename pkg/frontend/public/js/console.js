// Operator console: joint jog panel, end-effector target entry, clutch and
// insertion controls, error readouts, and a projected sketch of the arm.
// Plain DOM, no framework; every control funnels through UiSession.
import { chainPoints, project } from "./kinematics.js";
const JOG_STEP_REVOLUTE = 0.02; // rad per click
const JOG_STEP_PRISMATIC = 0.005; // m per click
// client-side mirror of the service's target gate
const MAX_TARGET_JUMP_M = 0.05;
const WORKSPACE_HALF_WIDTH_M = 0.25;
const CLUTCH_ACTIVE_C = 80.0;
const JOINT_KINDS = ["p", "p", "p", "r", "r", "r", "r", "p"];
function el(tag, parent, cls, text) {
    const node = document.createElement(tag);
    if (cls)
        node.className = cls;
    if (text !== undefined)
        node.textContent = text;
    parent.appendChild(node);
    return node;
}
export class OperatorConsole {
    session;
    refs;
    chain;
    constructor(root, session, chain = null) {
        this.session = session;
        this.chain = chain;
        this.refs = this.build(root);
        this.update();
    }
    send(action) {
        const seq = this.session.command(action);
        if (seq === null)
            return; // disconnected or a command is already pending
        this.update();
    }
    build(root) {
        root.innerHTML = "";
        const banner = el("div", root, "banner");
        const grid = el("div", root, "grid");
        // mode selector
        const modePanel = el("section", grid, "panel modes");
        el("h2", modePanel, undefined, "Mode");
        const modeButtons = new Map();
        for (const mode of ["idle", "joint_jog", "ee_target", "insertion"]) {
            const b = el("button", modePanel, "mode-btn", mode);
            b.dataset.mode = mode;
            b.addEventListener("click", () => this.send({ kind: "set_mode", mode }));
            modeButtons.set(mode, b);
        }
        // joint table with jog buttons
        const jointPanel = el("section", grid, "panel joints");
        el("h2", jointPanel, undefined, "Joints");
        const jointCells = [];
        const jogButtons = [];
        for (let i = 0; i < 8; i++) {
            const row = el("div", jointPanel, "joint-row");
            el("span", row, "joint-name", `q${i + 1}`);
            const minus = el("button", row, "jog", "-");
            const value = el("span", row, "joint-value", "0");
            const plus = el("button", row, "jog", "+");
            const step = JOINT_KINDS[i] === "r" ? JOG_STEP_REVOLUTE : JOG_STEP_PRISMATIC;
            minus.addEventListener("click", () => this.send({ kind: "jog_joint", joint: i, delta: -step }));
            plus.addEventListener("click", () => this.send({ kind: "jog_joint", joint: i, delta: step }));
            jointCells.push(value);
            jogButtons.push(minus, plus);
        }
        // tip pose + error readouts
        const tipPanel = el("section", grid, "panel tip");
        el("h2", tipPanel, undefined, "Tip");
        const tipReadout = el("div", tipPanel, "tip-readout");
        const errorReadout = el("div", tipPanel, "error-readout");
        // end-effector target entry: position plus needle direction only
        // (needle roll is not an input; the controller ignores tool-axis roll)
        const targetPanel = el("section", grid, "panel target");
        el("h2", targetPanel, undefined, "EE target");
        const mk = (label) => {
            const wrap = el("label", targetPanel, "target-field", label + " ");
            const input = el("input", wrap);
            input.type = "number";
            input.step = "0.001";
            return input;
        };
        const targetInputs = { px: mk("px (m)"), py: mk("py (m)"), pz: mk("pz (m)"),
            zx: mk("zx"), zy: mk("zy"), zz: mk("zz") };
        const targetWarning = el("div", targetPanel, "target-warning");
        const targetSubmit = el("button", targetPanel, "submit-target", "Send target");
        targetSubmit.addEventListener("click", () => this.submitTarget());
        // clutches + insertion
        const clutchPanel = el("section", grid, "panel clutch");
        el("h2", clutchPanel, undefined, "Needle clutches");
        const gaugeA = el("div", clutchPanel, "gauge", "A");
        const gaugeB = el("div", clutchPanel, "gauge", "B");
        const clutchButtons = [];
        for (const which of ["a", "b"]) {
            for (const engage of [true, false]) {
                const b = el("button", clutchPanel, "clutch-btn", `${which.toUpperCase()} ${engage ? "engage" : "release"}`);
                b.addEventListener("click", () => this.send({ kind: "clutch", which, engage }));
                clutchButtons.push(b);
            }
        }
        const insertWrap = el("div", clutchPanel, "insert-wrap");
        const insertDepth = el("input", insertWrap);
        insertDepth.type = "number";
        insertDepth.step = "1";
        insertDepth.value = "100";
        const insertButton = el("button", insertWrap, "insert-btn", "Insert (mm)");
        insertButton.addEventListener("click", () => {
            const depth = Number(insertDepth.value) * 1e-3;
            this.send({ kind: "insert", depth });
        });
        const abortButton = el("button", insertWrap, "abort-btn", "Abort");
        abortButton.addEventListener("click", () => this.send({ kind: "abort" }));
        const insertionLabel = el("div", clutchPanel, "insertion-label");
        const insertionOuter = el("div", clutchPanel, "insertion-outer");
        const insertionBar = el("div", insertionOuter, "insertion-bar");
        // safety
        const safetyPanel = el("section", grid, "panel safety");
        el("h2", safetyPanel, undefined, "Safety");
        const watchdogLabel = el("div", safetyPanel, "watchdog");
        const estopButton = el("button", safetyPanel, "estop", "E-STOP");
        estopButton.addEventListener("click", () => this.send({ kind: "estop" }));
        const resetButton = el("button", safetyPanel, "reset", "Reset");
        resetButton.addEventListener("click", () => this.send({ kind: "reset" }));
        // arm sketch
        const sketchPanel = el("section", grid, "panel sketch");
        el("h2", sketchPanel, undefined, "Arm");
        const sketch = document.createElementNS("http://www.w3.org/2000/svg", "svg");
        sketch.setAttribute("viewBox", "-0.1 -0.35 0.7 0.7");
        sketch.setAttribute("width", "280");
        sketch.setAttribute("height", "280");
        sketchPanel.appendChild(sketch);
        return { root, banner, modeButtons, jogButtons, jointCells, tipReadout,
            errorReadout, targetInputs, targetWarning, targetSubmit,
            clutchGauges: { a: gaugeA, b: gaugeB }, clutchButtons,
            insertionBar, insertionLabel, insertDepth, insertButton,
            watchdogLabel, estopButton, resetButton, sketch };
    }
    /** Client-side validation mirroring the service gate; returns the
     * rejection text shown inline, or null when the target may be sent. */
    validateTarget(position, zAxis) {
        const snap = this.session.snapshot;
        if (!snap)
            return "no telemetry yet";
        if (position.some((v) => !Number.isFinite(v)) || zAxis.some((v) => !Number.isFinite(v))) {
            return "target fields must be numbers";
        }
        const norm = Math.hypot(zAxis[0], zAxis[1], zAxis[2]);
        if (norm < 1e-6)
            return "needle direction must be nonzero";
        const tip = snap.tip_measured.position;
        const jump = Math.hypot(position[0] - tip[0], position[1] - tip[1], position[2] - tip[2]);
        if (jump > MAX_TARGET_JUMP_M) {
            return `target ${(jump * 1e3).toFixed(1)} mm from tip exceeds the ` +
                `${(MAX_TARGET_JUMP_M * 1e3).toFixed(0)} mm step limit`;
        }
        for (let i = 0; i < 3; i++) {
            if (Math.abs(position[i] - this.homeTip[i]) > WORKSPACE_HALF_WIDTH_M) {
                return "target outside the base-travel workspace";
            }
        }
        return null;
    }
    homeTip = [0.18, -0.05, -0.03];
    seedHomeTip(tip) {
        this.homeTip = [...tip];
    }
    submitTarget() {
        const t = this.refs.targetInputs;
        const position = [Number(t.px.value), Number(t.py.value), Number(t.pz.value)];
        const zAxis = [Number(t.zx.value), Number(t.zy.value), Number(t.zz.value)];
        const problem = this.validateTarget(position, zAxis);
        if (problem !== null) {
            this.refs.targetWarning.textContent = problem;
            return;
        }
        this.refs.targetWarning.textContent = "";
        this.send({ kind: "set_ee_target", position, z_axis: zAxis });
    }
    /** Re-render everything from the session's latest snapshot. */
    update() {
        const refs = this.refs;
        const session = this.session;
        const snap = session.snapshot;
        const timedOut = session.checkTimeout();
        if (!session.connected) {
            refs.banner.textContent = "DISCONNECTED - reconnecting...";
            refs.banner.dataset.state = "disconnected";
        }
        else if (snap === null || session.isStale()) {
            refs.banner.textContent = "STALE DATA - no fresh telemetry";
            refs.banner.dataset.state = "stale";
        }
        else if (snap.mode === "estopped") {
            refs.banner.textContent = "E-STOPPED - motion disabled until reset";
            refs.banner.dataset.state = "estopped";
        }
        else if (snap.watchdog === "tripped") {
            refs.banner.textContent = "WATCHDOG TRIPPED - reset required";
            refs.banner.dataset.state = "watchdog";
        }
        else if (snap.hold) {
            refs.banner.textContent = "HOLD - operator link quiet";
            refs.banner.dataset.state = "hold";
        }
        else {
            refs.banner.textContent = session.role === "observer"
                ? "observing (read-only)" : "";
            refs.banner.dataset.state = "ok";
        }
        const estopped = snap?.mode === "estopped";
        const interactive = session.connected && snap !== null && !session.isStale()
            && session.role !== "observer";
        const motionAllowed = interactive && !estopped;
        for (const [mode, button] of refs.modeButtons) {
            button.disabled = !motionAllowed;
            button.dataset.active = String(snap?.mode === mode);
        }
        for (const b of refs.jogButtons) {
            b.disabled = !motionAllowed || snap?.mode !== "joint_jog";
        }
        refs.targetSubmit.disabled = !motionAllowed || snap?.mode !== "ee_target"
            || session.pending !== null;
        refs.insertButton.disabled = !motionAllowed || snap?.mode !== "insertion";
        for (const b of refs.clutchButtons)
            b.disabled = !motionAllowed;
        refs.estopButton.disabled = !interactive;
        refs.resetButton.disabled = !interactive;
        if (timedOut !== null) {
            refs.targetWarning.textContent =
                `no acknowledgement for command #${timedOut.seq} - press again to retry`;
        }
        else if (session.lastRejection !== null) {
            refs.targetWarning.textContent = `rejected: ${session.lastRejection}`;
        }
        if (snap === null)
            return;
        for (let i = 0; i < 8; i++) {
            const value = snap.joints_est[i];
            const unit = JOINT_KINDS[i] === "r" ? "rad" : "m";
            refs.jointCells[i].textContent = `${value.toFixed(4)} ${unit}`;
        }
        const p = snap.tip_measured.position;
        const z = snap.tip_measured.z_axis;
        refs.tipReadout.textContent =
            `p = [${p.map((v) => (v * 1e3).toFixed(1)).join(", ")}] mm, ` +
                `needle = [${z.map((v) => v.toFixed(3)).join(", ")}]`;
        refs.errorReadout.textContent = snap.e_pos_mm === null
            ? "no active target"
            : `${snap.e_pos_mm.toFixed(2)} mm / ${snap.e_ori_deg.toFixed(2)} deg`;
        for (const which of ["a", "b"]) {
            const gauge = refs.clutchGauges[which];
            const view = which === "a" ? snap.clutch_a : snap.clutch_b;
            gauge.textContent = `${which.toUpperCase()}: ${view.temperature_c.toFixed(1)} C ` +
                `${view.engaged ? "ENGAGED" : "released"}`;
            gauge.dataset.zone = view.temperature_c >= CLUTCH_ACTIVE_C ? "engaged"
                : (view.engaged ? "holding" : "released");
        }
        refs.insertionLabel.textContent =
            `depth ${(snap.needle_depth_m * 1e3).toFixed(1)} mm` +
                (snap.inserting ? " (inserting...)" : "");
        refs.insertionBar.style.width =
            `${Math.min(snap.needle_depth_m / 0.3, 1.0) * 100}%`;
        refs.watchdogLabel.textContent = `watchdog: ${snap.watchdog}`;
        refs.watchdogLabel.dataset.state = snap.watchdog;
        this.renderSketch(snap);
    }
    renderSketch(snap) {
        if (this.chain === null)
            return;
        const { origins, needleAxis } = chainPoints(this.chain, snap.joints_est);
        const pts = origins.map(project);
        const tip = pts[pts.length - 1];
        const axis2d = project(needleAxis);
        const svgNS = "http://www.w3.org/2000/svg";
        this.refs.sketch.innerHTML = "";
        const poly = document.createElementNS(svgNS, "polyline");
        poly.setAttribute("points", pts.map(([x, y]) => `${x.toFixed(4)},${(-y).toFixed(4)}`).join(" "));
        poly.setAttribute("fill", "none");
        poly.setAttribute("stroke", "#2b6cb0");
        poly.setAttribute("stroke-width", "0.008");
        this.refs.sketch.appendChild(poly);
        const needle = document.createElementNS(svgNS, "line");
        needle.setAttribute("x1", `${tip[0]}`);
        needle.setAttribute("y1", `${-tip[1]}`);
        needle.setAttribute("x2", `${tip[0] + 0.08 * axis2d[0]}`);
        needle.setAttribute("y2", `${-(tip[1] + 0.08 * axis2d[1])}`);
        needle.setAttribute("stroke", "#c53030");
        needle.setAttribute("stroke-width", "0.005");
        this.refs.sketch.appendChild(needle);
    }
}
//# sourceMappingURL=console.js.map