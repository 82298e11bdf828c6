/** Job event-stream client.
 *
 * The server pushes `data: {"seq": N, "event": {...}}` lines over a
 * long-lived HTTP response (comment lines are heartbeats). EventSource
 * cannot send the bearer token header, so this parses the stream from
 * fetch() directly. On any drop it reconnects with `from_seq` set to the
 * next sequence it has not delivered: no duplicates, no gaps. */

import type { StreamMessage } from "./types.js";

export type FetchLike = (
  url: string,
  init: { headers: Record<string, string>; signal?: AbortSignal },
) => Promise<{ ok: boolean; status: number; body: ReadableStream<Uint8Array> | null }>;

export interface StreamOptions {
  fetchImpl?: FetchLike;
  maxRetries?: number;
  retryDelayMs?: number;
}

export class EventStreamClient {
  private nextSeq: number;
  private aborted = false;
  private controller: AbortController | null = null;

  constructor(
    private readonly baseUrl: string,
    private readonly token: string,
    private readonly jobId: string,
    fromSeq = 0,
    private readonly options: StreamOptions = {},
  ) {
    this.nextSeq = fromSeq;
  }

  close(): void {
    this.aborted = true;
    this.controller?.abort();
  }

  /** Deliver messages to `onMessage` until the stream ends (terminal event
   * followed by server close) or `close()` is called. Resolves with the
   * number of reconnects performed. */
  async run(
    onMessage: (message: StreamMessage) => void,
    onStateChange?: (state: "connected" | "reconnecting" | "closed") => void,
  ): Promise<number> {
    const fetchImpl: FetchLike = this.options.fetchImpl ?? (fetch as unknown as FetchLike);
    const maxRetries = this.options.maxRetries ?? 20;
    const retryDelay = this.options.retryDelayMs ?? 500;
    let reconnects = 0;

    for (let attempt = 0; !this.aborted; attempt++) {
      const url =
        `${this.baseUrl}/api/jobs/${this.jobId}/events?from_seq=${this.nextSeq}`;
      this.controller = new AbortController();
      let sawTerminal = false;
      try {
        const response = await fetchImpl(url, {
          headers: { Authorization: `Bearer ${this.token}` },
          signal: this.controller.signal,
        });
        if (!response.ok || response.body === null) {
          throw new Error(`stream request failed: ${response.status}`);
        }
        onStateChange?.("connected");
        sawTerminal = await this.consume(response.body, onMessage);
      } catch (error) {
        if (this.aborted) {
          break;
        }
        if (attempt >= maxRetries) {
          throw error;
        }
      }
      if (sawTerminal || this.aborted) {
        break;
      }
      reconnects += 1;
      onStateChange?.("reconnecting");
      await new Promise((resolve) => setTimeout(resolve, retryDelay));
    }
    onStateChange?.("closed");
    return reconnects;
  }

  private async consume(
    body: ReadableStream<Uint8Array>,
    onMessage: (message: StreamMessage) => void,
  ): Promise<boolean> {
    const reader = body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    let sawTerminal = false;
    while (true) {
      const { done, value } = await reader.read();
      if (done) {
        break;
      }
      buffer += decoder.decode(value, { stream: true });
      let newline;
      while ((newline = buffer.indexOf("\n")) >= 0) {
        const line = buffer.slice(0, newline).trimEnd();
        buffer = buffer.slice(newline + 1);
        if (!line.startsWith("data: ")) {
          continue; // heartbeat comment or blank separator
        }
        const message = JSON.parse(line.slice("data: ".length)) as StreamMessage;
        if (message.seq < this.nextSeq) {
          continue; // replayed duplicate after resume
        }
        this.nextSeq = message.seq + 1;
        if (message.event.type === "completed" || message.event.type === "error") {
          sawTerminal = true;
        }
        onMessage(message);
      }
    }
    return sawTerminal;
  }
}
