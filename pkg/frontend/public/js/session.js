// Operator session state machine, independent of any real socket so the
// logic is unit-testable: sequence numbering, one-pending-command rule,
// ack/timeout bookkeeping, stale-snapshot detection.
import { commandFrame, parseServerMessage, } from "./protocol.js";
export const STALE_AFTER_MS = 500;
export const ACK_TIMEOUT_MS = 1000;
export class UiSession {
    clock;
    role = "unknown";
    snapshot = null;
    lastSnapshotAt = -Infinity;
    pending = null;
    lastRejection = null;
    seq = 0;
    transport = null;
    constructor(clock = () => Date.now()) {
        this.clock = clock;
    }
    attach(transport) {
        this.transport = transport;
    }
    detach() {
        this.transport = null;
        this.pending = null;
        this.role = "unknown";
    }
    get connected() {
        return this.transport !== null;
    }
    /** Snapshot older than the staleness budget: show the banner. */
    isStale() {
        return this.snapshot === null
            || this.clock() - this.lastSnapshotAt > STALE_AFTER_MS;
    }
    /** Mode as last published by the service; the UI never guesses ahead. */
    get mode() {
        return this.snapshot?.mode ?? "unknown";
    }
    /**
     * Send one command. Exactly one command may be in flight: repeated calls
     * (double clicks) while waiting for the ack are refused, and a timed-out
     * command is surfaced for an explicit retry, never silently resent.
     */
    command(action) {
        if (this.transport === null || this.pending !== null)
            return null;
        const seq = ++this.seq;
        this.pending = { seq, action, sentAt: this.clock() };
        this.transport.send(commandFrame(seq, action));
        return seq;
    }
    /** Expire a pending command that outlived the ack budget. */
    checkTimeout() {
        if (this.pending !== null
            && this.clock() - this.pending.sentAt > ACK_TIMEOUT_MS) {
            const stale = this.pending;
            this.pending = null;
            return { kind: "timeout", seq: stale.seq, action: stale.action };
        }
        return null;
    }
    handleFrame(raw) {
        const msg = parseServerMessage(raw);
        if (msg === null)
            return null;
        switch (msg.type) {
            case "snapshot": {
                const snap = msg;
                if (this.snapshot !== null && snap.sim_time < this.snapshot.sim_time) {
                    return null; // never regress to an older snapshot
                }
                this.snapshot = snap;
                this.lastSnapshotAt = this.clock();
                return { kind: "snapshot", snapshot: snap };
            }
            case "welcome": {
                const w = msg;
                this.role = w.role;
                return { kind: "welcome", role: w.role };
            }
            case "ack":
            case "reject": {
                const ack = msg;
                if (this.pending === null || ack.seq !== this.pending.seq)
                    return null;
                const action = this.pending.action;
                this.pending = null;
                if (ack.accepted) {
                    this.lastRejection = null;
                    return { kind: "ack", seq: ack.seq, action };
                }
                this.lastRejection = ack.reason ?? "rejected";
                return { kind: "reject", seq: ack.seq, action, reason: this.lastRejection };
            }
            case "error":
                return { kind: "error", reason: msg.reason };
            default:
                return null;
        }
    }
}
/** Exponential backoff for reconnect attempts (capped). */
export function reconnectDelayMs(attempt) {
    return Math.min(250 * 2 ** Math.max(attempt, 0), 8000);
}
//# sourceMappingURL=session.js.map