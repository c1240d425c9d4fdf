/** Line-delimited JSON protocol: one request object per stdin line, one
 * response object per stdout line, ids preserved. A malformed or failing
 * request produces an error response; the loop itself never dies.
 */
import * as readline from "node:readline";
import { Readable, Writable } from "node:stream";

export interface ExtractRequest {
  id: number;
  kind: "extract";
  text: string;
}

export interface ClassifyRequest {
  id: number;
  kind: "classify";
  title: string;
  abstract: string;
  labels: string[];
}

export type Request = ExtractRequest | ClassifyRequest;

export interface EntityOut {
  start: number;
  end: number;
  label: string;
  text: string;
  score: number;
}

export type Handler = (request: Request) => Record<string, unknown>;

export function serveProtocol(
  handler: Handler,
  input: Readable = process.stdin,
  output: Writable = process.stdout,
): Promise<void> {
  const lines = readline.createInterface({ input, terminal: false });
  const write = (doc: Record<string, unknown>) => {
    output.write(JSON.stringify(doc) + "\n");
  };
  return new Promise((resolve) => {
    lines.on("line", (line) => {
      const trimmed = line.trim();
      if (!trimmed) return;
      let id: unknown = null;
      try {
        const request = JSON.parse(trimmed);
        id = request?.id ?? null;
        if (typeof request?.id !== "number") {
          throw new Error("request must carry a numeric id");
        }
        if (request.kind !== "extract" && request.kind !== "classify") {
          throw new Error(`unknown request kind ${JSON.stringify(request.kind)}`);
        }
        write({ id: request.id, ...handler(request as Request) });
      } catch (error) {
        write({ id, error: error instanceof Error ? error.message : String(error) });
      }
    });
    lines.on("close", resolve);
  });
}
