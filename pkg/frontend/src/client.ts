/**
 * Thin typed client over the graphwright /v1 HTTP service.
 *
 * Deliberately dumb: no client-side validation of actions or graphs, so
 * the server stays the single source of truth. Responses are checked
 * against the wire schema and returned with their wire field names.
 * Connection failures retry only for idempotent verbs (GET/DELETE);
 * a step is never auto-retried because it is not idempotent.
 */

export interface Diagnostic {
  code: string;
  message: string;
  node_id?: string;
  port?: string;
  param?: string;
  hint?: Record<string, unknown>;
}

export interface StepOutcome {
  accepted: boolean;
  diagnostics: Diagnostic[];
  graph_digest: string;
  step_index: number;
  terminated: boolean;
}

export interface ValidateOutcome {
  executable: boolean;
  diagnostics: Diagnostic[];
}

export interface RewardBreakdown {
  r_f: number;
  r_c: number;
  recall_term: number;
  final: number;
}

export interface WorkflowDocument {
  schema_id?: string;
  nodes: Array<{ id: string; type: string; params: Record<string, unknown> }>;
  edges: Array<{ src: string; dst: string }>;
}

/** Live handle on one server-side construction episode. */
export interface ClientSession {
  readonly baseUrl: string;
  readonly sessionId: string;
  /** index of the most recent step; -1 before the first one */
  lastStepIndex: number;
  terminated: boolean;
}

export class ConnectionError extends Error {
  constructor(message: string, readonly cause?: unknown) {
    super(message);
    this.name = "ConnectionError";
  }
}

export class ProtocolError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ProtocolError";
  }
}

export class DomainRejection extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
    readonly diagnostics: Diagnostic[] = [],
  ) {
    super(message);
    this.name = "DomainRejection";
  }
}

export interface ClientOptions {
  baseUrl?: string;
  timeoutMs?: number;
  retryAttempts?: number;
  retryDelayMs?: number;
}

const DEFAULT_URL = "http://127.0.0.1:8640";

function expectField<T>(doc: Record<string, unknown>, key: string, kind: string): T {
  const value = doc[key];
  if (typeof value !== kind) {
    throw new ProtocolError(`response field ${key} should be ${kind}, got ${typeof value}`);
  }
  return value as T;
}

function expectDiagnostics(doc: Record<string, unknown>): Diagnostic[] {
  const raw = doc["diagnostics"];
  if (!Array.isArray(raw)) {
    throw new ProtocolError("response field diagnostics should be an array");
  }
  return raw as Diagnostic[];
}

export class GraphwrightClient {
  readonly baseUrl: string;
  private readonly timeoutMs: number;
  private readonly retryAttempts: number;
  private readonly retryDelayMs: number;

  constructor(options: ClientOptions = {}) {
    this.baseUrl = (
      options.baseUrl ??
      (typeof process !== "undefined" ? process.env.GRAPHWRIGHT_URL : undefined) ??
      DEFAULT_URL
    ).replace(/\/$/, "");
    this.timeoutMs = options.timeoutMs ?? 10_000;
    this.retryAttempts = options.retryAttempts ?? 3;
    this.retryDelayMs = options.retryDelayMs ?? 250;
  }

  private async request(
    method: "GET" | "POST" | "DELETE",
    path: string,
    body?: unknown,
  ): Promise<Record<string, unknown>> {
    const idempotent = method !== "POST";
    const attempts = idempotent ? this.retryAttempts : 1;
    let lastFailure: unknown;
    for (let attempt = 1; attempt <= attempts; attempt++) {
      const controller = new AbortController();
      const timer = setTimeout(() => controller.abort(), this.timeoutMs);
      let response: Response;
      try {
        response = await fetch(`${this.baseUrl}${path}`, {
          method,
          signal: controller.signal,
          headers: body === undefined ? undefined : { "content-type": "application/json" },
          body: body === undefined ? undefined : JSON.stringify(body),
        });
      } catch (failure) {
        lastFailure = failure;
        clearTimeout(timer);
        if (attempt < attempts) {
          await new Promise((resolve) => setTimeout(resolve, this.retryDelayMs * attempt));
          continue;
        }
        throw new ConnectionError(`${method} ${path} failed: ${failure}`, failure);
      }
      clearTimeout(timer);

      let doc: unknown;
      try {
        doc = await response.json();
      } catch {
        throw new ProtocolError(`${method} ${path}: response body is not JSON`);
      }
      if (typeof doc !== "object" || doc === null) {
        throw new ProtocolError(`${method} ${path}: response body is not an object`);
      }
      const record = doc as Record<string, unknown>;
      if (!response.ok) {
        const code = typeof record.code === "string" ? record.code : "error";
        const message = typeof record.message === "string" ? record.message : response.statusText;
        const diagnostics = Array.isArray(record.diagnostics)
          ? (record.diagnostics as Diagnostic[])
          : [];
        throw new DomainRejection(response.status, code, message, diagnostics);
      }
      return record;
    }
    throw new ConnectionError(`${method} ${path} failed: ${lastFailure}`, lastFailure);
  }

  async openSession(query: string, schemaId: string): Promise<ClientSession> {
    const doc = await this.request("POST", "/v1/sessions", {
      query,
      schema_id: schemaId,
    });
    return {
      baseUrl: this.baseUrl,
      sessionId: expectField<string>(doc, "session_id", "string"),
      lastStepIndex: -1,
      terminated: false,
    };
  }

  async step(session: ClientSession, actionText: string): Promise<StepOutcome> {
    const doc = await this.request(
      "POST",
      `/v1/sessions/${session.sessionId}/step`,
      { action_text: actionText },
    );
    const outcome: StepOutcome = {
      accepted: expectField<boolean>(doc, "accepted", "boolean"),
      diagnostics: expectDiagnostics(doc),
      graph_digest: expectField<string>(doc, "graph_digest", "string"),
      step_index: expectField<number>(doc, "step_index", "number"),
      terminated: expectField<boolean>(doc, "terminated", "boolean"),
    };
    if (outcome.step_index <= session.lastStepIndex) {
      throw new ProtocolError(
        `step_index went backwards: ${outcome.step_index} after ${session.lastStepIndex}`,
      );
    }
    session.lastStepIndex = outcome.step_index;
    session.terminated = outcome.terminated;
    return outcome;
  }

  async getGraph(session: ClientSession): Promise<WorkflowDocument> {
    const doc = await this.request("GET", `/v1/sessions/${session.sessionId}/graph`);
    if (!Array.isArray(doc.nodes) || !Array.isArray(doc.edges)) {
      throw new ProtocolError("graph response misses nodes/edges");
    }
    return doc as unknown as WorkflowDocument;
  }

  async validate(workflow: WorkflowDocument): Promise<ValidateOutcome> {
    const doc = await this.request("POST", "/v1/validate", { workflow });
    return {
      executable: expectField<boolean>(doc, "executable", "boolean"),
      diagnostics: expectDiagnostics(doc),
    };
  }

  async reward(trace: string, target: WorkflowDocument): Promise<RewardBreakdown> {
    const doc = await this.request("POST", "/v1/reward", { trace, target });
    return {
      r_f: expectField<number>(doc, "r_f", "number"),
      r_c: expectField<number>(doc, "r_c", "number"),
      recall_term: expectField<number>(doc, "recall_term", "number"),
      final: expectField<number>(doc, "final", "number"),
    };
  }

  async getSchema(schemaId: string): Promise<Record<string, unknown>> {
    return this.request("GET", `/v1/schemas/${schemaId}`);
  }

  async close(session: ClientSession): Promise<void> {
    await this.request("DELETE", `/v1/sessions/${session.sessionId}`);
  }
}
