// Typed client for the tutor session service. All proof knowledge lives on
// the server; this file only moves JSON around.

export interface FeedbackVector {
  soundness: "correct" | "incorrect" | "buggy" | "unknown";
  granularity: "appropriate" | "too_small" | "too_big" | "not_applicable";
  relevance: "relevant" | "irrelevant" | "unknown";
  buggy_message?: string;
}

export interface StepOutcome {
  feedback: FeedbackVector;
  messages: string[];
  proof_complete: boolean;
  interpretations: number;
}

export interface HintPayload {
  category: number | null;
  category_name: string;
  text: string;
}

export interface LabelledFormula {
  label: string;
  formula: string;
}

export interface OpenSequent {
  label: string;
  hypotheses: LabelledFormula[];
  goal: string;
  marked: boolean;
}

export interface TranscriptItem {
  kind: "step" | "hint";
  text: string;
  feedback?: FeedbackVector;
  messages?: string[];
  category?: number | null;
  category_name?: string;
}

export interface SessionState {
  session_id: string;
  exercise: string;
  open_sequents: OpenSequent[];
  marked: number | null;
  proof_complete: boolean;
  interpretations: number;
  transcript: TranscriptItem[];
}

export interface ExerciseInfo {
  id: string;
  theory: string;
  goal: string;
  depth: number;
  strategy: string;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class TutorApi {
  constructor(
    private readonly base: string = "",
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(this.base + path, {
      headers: { "Content-Type": "application/json" },
      ...init,
    });
    const body = await response.json().catch(() => ({}));
    if (!response.ok) {
      const detail =
        typeof body === "object" && body !== null && "detail" in body
          ? String((body as { detail: unknown }).detail)
          : response.statusText;
      throw new ApiError(response.status, detail);
    }
    return body as T;
  }

  listExercises(): Promise<ExerciseInfo[]> {
    return this.request("/exercises");
  }

  async createSession(exercise: string): Promise<SessionState> {
    const created = await this.request<{ session_id: string; state: SessionState }>(
      "/sessions",
      { method: "POST", body: JSON.stringify({ exercise }) },
    );
    return created.state;
  }

  getSession(sessionId: string): Promise<SessionState> {
    return this.request(`/sessions/${sessionId}`);
  }

  submitStep(sessionId: string, text: string): Promise<StepOutcome> {
    return this.request(`/sessions/${sessionId}/steps`, {
      method: "POST",
      body: JSON.stringify({ text }),
    });
  }

  requestHint(sessionId: string): Promise<HintPayload> {
    return this.request(`/sessions/${sessionId}/hint`, { method: "POST" });
  }
}
