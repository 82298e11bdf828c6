/** Loss-chart state fed from the job event stream.
 *
 * Points mirror the persisted event log exactly: entries are keyed by
 * sequence number, duplicates are dropped, and a gap is reported instead of
 * being papered over, so a reconnecting stream can resume from
 * `nextExpectedSeq` and the chart provably matches the log. */
export class ChartState {
    points = new Map();
    seen = new Set();
    nextExpectedSeq = 0;
    duplicates = 0;
    gaps = 0;
    checkpoints = [];
    terminal = null;
    accept(message) {
        const { seq, event } = message;
        if (this.seen.has(seq)) {
            this.duplicates += 1;
            return;
        }
        if (seq > this.nextExpectedSeq) {
            this.gaps += 1; // stream must resume from nextExpectedSeq instead
            return;
        }
        this.seen.add(seq);
        this.nextExpectedSeq = Math.max(this.nextExpectedSeq, seq + 1);
        if (event.type === "progress") {
            this.points.set(seq, { seq, step: event.step, loss: event.loss });
        }
        else if (event.type === "checkpoint") {
            this.checkpoints.push(event.step);
        }
        else if (event.type === "completed" || event.type === "error") {
            this.terminal = event;
        }
    }
    /** Progress points in sequence order. */
    series() {
        return [...this.points.values()].sort((a, b) => a.seq - b.seq);
    }
    get pointCount() {
        return this.points.size;
    }
}
/** Minimal polyline renderer onto a canvas 2d context. */
export function drawLossChart(ctx, state, width, height) {
    ctx.clearRect(0, 0, width, height);
    const series = state.series();
    if (series.length === 0) {
        return;
    }
    const maxStep = Math.max(1, ...series.map((p) => p.step));
    const maxLoss = Math.max(...series.map((p) => p.loss), 1e-9);
    ctx.strokeStyle = "#4ea1ff";
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    series.forEach((point, index) => {
        const x = (point.step / maxStep) * (width - 10) + 5;
        const y = height - 5 - (point.loss / maxLoss) * (height - 10);
        if (index === 0) {
            ctx.moveTo(x, y);
        }
        else {
            ctx.lineTo(x, y);
        }
    });
    ctx.stroke();
}
