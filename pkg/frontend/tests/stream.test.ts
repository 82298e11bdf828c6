import assert from "node:assert/strict";
import test from "node:test";

import { ChartState } from "../src/chart.js";
import { EventStreamClient, type FetchLike } from "../src/stream.js";
import type { StreamMessage, TrainerEvent } from "../src/types.js";

/** Simulated training event log: progress every 2 steps, checkpoints, done. */
function eventLog(steps = 40, checkpointEvery = 10): TrainerEvent[] {
  const events: TrainerEvent[] = [];
  for (let step = 0; step <= steps; step += 2) {
    events.push({ type: "progress", step, loss: 10 * Math.exp(-step / 8) });
    if (step > 0 && step % checkpointEvery === 0) {
      events.push({ type: "checkpoint", step, path: `ckpt-${step}.ckpt` });
    }
  }
  events.push({ type: "completed", final_step: steps });
  return events;
}

function sseBytes(messages: StreamMessage[], withHeartbeats = false): Uint8Array {
  const encoder = new TextEncoder();
  let text = "";
  for (const [index, message] of messages.entries()) {
    if (withHeartbeats && index % 3 === 0) {
      text += ": heartbeat\n\n";
    }
    text += `data: ${JSON.stringify(message)}\n\n`;
  }
  return encoder.encode(text);
}

function streamFrom(chunks: Uint8Array[]): ReadableStream<Uint8Array> {
  let index = 0;
  return new ReadableStream({
    pull(controller) {
      if (index < chunks.length) {
        controller.enqueue(chunks[index++]);
      } else {
        controller.close();
      }
    },
  });
}

/** Fake server: serves the log from `from_seq`, optionally dropping the
 * connection after `dropAfter` messages on the first N attempts. */
function fakeFetch(log: TrainerEvent[], dropAfter: number, dropTimes: number): {
  fetchImpl: FetchLike;
  calls: string[];
} {
  const calls: string[] = [];
  let drops = 0;
  const fetchImpl: FetchLike = async (url) => {
    calls.push(url);
    const fromSeq = Number(new URL(url, "http://x").searchParams.get("from_seq"));
    let messages = log
      .map((event, seq) => ({ seq, event }))
      .slice(fromSeq);
    if (drops < dropTimes) {
      drops += 1;
      messages = messages.slice(0, dropAfter); // connection dies mid-stream
    }
    // split into awkward chunk boundaries to exercise the line parser
    const bytes = sseBytes(messages, true);
    const chunks: Uint8Array[] = [];
    for (let i = 0; i < bytes.length; i += 7) {
      chunks.push(bytes.slice(i, i + 7));
    }
    return { ok: true, status: 200, body: streamFrom(chunks) };
  };
  return { fetchImpl, calls };
}

test("clean stream delivers every event once, in order", async () => {
  const log = eventLog();
  const { fetchImpl } = fakeFetch(log, 0, 0);
  const received: StreamMessage[] = [];
  const client = new EventStreamClient("", "tok", "job1", 0, {
    fetchImpl,
    retryDelayMs: 1,
  });
  const reconnects = await client.run((m) => received.push(m));
  assert.equal(reconnects, 0);
  assert.deepEqual(
    received.map((m) => m.seq),
    log.map((_, i) => i),
  );
});

test("forced reconnection resumes with no gaps or duplicates", async () => {
  const log = eventLog();
  const { fetchImpl, calls } = fakeFetch(log, 5, 2); // drop twice mid-stream
  const chart = new ChartState();
  const client = new EventStreamClient("", "tok", "job1", 0, {
    fetchImpl,
    retryDelayMs: 1,
  });
  const reconnects = await client.run((m) => chart.accept(m));
  assert.equal(reconnects, 2);
  assert.equal(calls.length, 3);
  assert.match(calls[1], /from_seq=5/);
  assert.match(calls[2], /from_seq=10/);

  // the chart series equals exactly the log's progress events
  const expected = log
    .map((event, seq) => ({ seq, event }))
    .filter((m) => m.event.type === "progress")
    .map((m) => ({
      seq: m.seq,
      step: (m.event as { step: number }).step,
      loss: (m.event as { loss: number }).loss,
    }));
  assert.deepEqual(chart.series(), expected);
  assert.equal(chart.duplicates, 0);
  assert.equal(chart.gaps, 0);
  assert.equal(chart.terminal?.type, "completed");
});

test("mid-history subscription only sees the tail", async () => {
  const log = eventLog();
  const { fetchImpl } = fakeFetch(log, 0, 0);
  const received: StreamMessage[] = [];
  const client = new EventStreamClient("", "tok", "job1", 7, {
    fetchImpl,
    retryDelayMs: 1,
  });
  await client.run((m) => received.push(m));
  assert.equal(received[0].seq, 7);
  assert.equal(received.length, log.length - 7);
});

test("server failure surfaces after retry budget", async () => {
  const fetchImpl: FetchLike = async () => ({ ok: false, status: 500, body: null });
  const client = new EventStreamClient("", "tok", "job1", 0, {
    fetchImpl,
    maxRetries: 2,
    retryDelayMs: 1,
  });
  await assert.rejects(client.run(() => {}), /stream request failed/);
});
