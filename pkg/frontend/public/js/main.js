// Browser entry: connect to the teleop service, keep the session fresh,
// reconnect with exponential backoff, and drive the console at the
// snapshot rate.
import { OperatorConsole } from "./console.js";
import { helloFrame, pingFrame } from "./protocol.js";
import { UiSession, reconnectDelayMs } from "./session.js";
const params = new URLSearchParams(window.location.search);
const url = params.get("ws") ?? "ws://127.0.0.1:8765";
const token = params.get("token") ?? "change-me";
async function loadChain() {
    try {
        const res = await fetch("chain.json");
        return (await res.json());
    }
    catch {
        return null;
    }
}
async function start() {
    const chain = await loadChain();
    const session = new UiSession();
    const root = document.getElementById("console");
    const ui = new OperatorConsole(root, session, chain);
    let attempt = 0;
    let heartbeat;
    const connect = () => {
        const socket = new WebSocket(url);
        socket.onopen = () => {
            attempt = 0;
            socket.send(helloFrame(token, "browser-console"));
            session.attach({ send: (text) => socket.send(text) });
            // a quiet operator gets motion-held by the service; stay audible
            heartbeat = window.setInterval(() => socket.send(pingFrame()), 250);
        };
        socket.onmessage = (event) => {
            const evt = session.handleFrame(String(event.data));
            if (evt?.kind === "snapshot" && session.snapshot) {
                ui.update();
            }
            else if (evt !== null) {
                ui.update();
            }
        };
        socket.onclose = () => {
            session.detach();
            if (heartbeat !== undefined)
                window.clearInterval(heartbeat);
            ui.update();
            window.setTimeout(connect, reconnectDelayMs(attempt++));
        };
        socket.onerror = () => socket.close();
    };
    connect();
    window.setInterval(() => ui.update(), 250); // staleness/timeout sweep
}
start();
//# sourceMappingURL=main.js.map