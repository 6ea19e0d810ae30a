// Message types for the teleop service's JSON-over-WebSocket protocol
// (see PROTOCOL.md in the repository root). One JSON object per frame,
// schema version `v: 1` on every message.
export const PROTOCOL_VERSION = 1;
export const MODES = ["idle", "joint_jog", "ee_target", "insertion", "estopped"];
export function helloFrame(token, clientId) {
    return JSON.stringify({ v: PROTOCOL_VERSION, type: "hello", token, client_id: clientId });
}
export function commandFrame(seq, action) {
    return JSON.stringify({ v: PROTOCOL_VERSION, type: "command", seq, action });
}
export function pingFrame() {
    return JSON.stringify({ v: PROTOCOL_VERSION, type: "ping" });
}
export function parseServerMessage(raw) {
    let msg;
    try {
        msg = JSON.parse(raw);
    }
    catch {
        return null;
    }
    if (typeof msg !== "object" || msg === null)
        return null;
    const m = msg;
    if (m["v"] !== PROTOCOL_VERSION || typeof m["type"] !== "string")
        return null;
    switch (m["type"]) {
        case "snapshot":
            if (!Array.isArray(m["joints_est"]) || typeof m["sim_time"] !== "number"
                || !MODES.includes(m["mode"]))
                return null;
            return m;
        case "welcome":
            return m;
        case "ack":
        case "reject":
            if (typeof m["seq"] !== "number")
                return null;
            return m;
        case "error":
        case "pong":
            return m;
        default:
            return null;
    }
}
//# sourceMappingURL=protocol.js.map