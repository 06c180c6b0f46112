// DOM wiring for the tutoring page. Verdicts come only from the service:
// the client never guesses, and a reload rebuilds the identical view from
// GET /sessions/{id}.

import { ApiError, TutorApi } from "./api.js";
import { appendHint, deriveView, type HintCard, type SessionView } from "./view.js";

const PALETTE: [string, string][] = [
  ["∈", " in "],
  ["⊂", " subset "],
  ["⊃", " supset "],
  ["∘", " ∘ "],
  ["∧", " /\\ "],
  ["∨", " \\/ "],
  ["⇒", " -> "],
  ["∀", "forall "],
  ["∃", "exists "],
];

interface Els {
  exercisePicker: HTMLSelectElement;
  startButton: HTMLButtonElement;
  tasks: HTMLElement;
  transcript: HTMLElement;
  hints: HTMLElement;
  input: HTMLInputElement;
  submitButton: HTMLButtonElement;
  hintButton: HTMLButtonElement;
  banner: HTMLElement;
  palette: HTMLElement;
  error: HTMLElement;
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export class App {
  private api: TutorApi;
  private els: Els;
  private sessionId: string | null = null;
  private hintCards: HintCard[] = [];
  private busy = false;

  constructor(api?: TutorApi) {
    this.api = api ?? new TutorApi("");
    this.els = {
      exercisePicker: el("exercise-picker"),
      startButton: el("start-button"),
      tasks: el("tasks"),
      transcript: el("transcript"),
      hints: el("hints"),
      input: el("step-input"),
      submitButton: el("submit-button"),
      hintButton: el("hint-button"),
      banner: el("banner"),
      palette: el("palette"),
      error: el("error"),
    };
  }

  async start() {
    this.buildPalette();
    this.els.startButton.addEventListener("click", () => void this.newSession());
    this.els.submitButton.addEventListener("click", () => void this.submit());
    this.els.input.addEventListener("keydown", (e) => {
      if (e.key === "Enter") void this.submit();
    });
    this.els.hintButton.addEventListener("click", () => void this.hint());
    try {
      const exercises = await this.api.listExercises();
      this.els.exercisePicker.innerHTML = "";
      for (const ex of exercises) {
        const option = document.createElement("option");
        option.value = ex.id;
        option.textContent = `${ex.id} — ${ex.goal}`;
        this.els.exercisePicker.appendChild(option);
      }
    } catch (e) {
      this.showError(e);
      return;
    }
    const remembered = window.location.hash.replace(/^#/, "");
    if (remembered) {
      try {
        const state = await this.api.getSession(remembered);
        this.sessionId = state.session_id;
        this.render(deriveView(state));
        return;
      } catch {
        window.location.hash = "";
      }
    }
  }

  private buildPalette() {
    for (const [symbol, insert] of PALETTE) {
      const button = document.createElement("button");
      button.type = "button";
      button.className = "palette-key";
      button.textContent = symbol;
      button.addEventListener("click", () => {
        const input = this.els.input;
        const at = input.selectionStart ?? input.value.length;
        input.value = input.value.slice(0, at) + insert + input.value.slice(at);
        input.focus();
      });
      this.els.palette.appendChild(button);
    }
  }

  private async newSession() {
    try {
      const state = await this.api.createSession(this.els.exercisePicker.value);
      this.sessionId = state.session_id;
      this.hintCards = [];
      window.location.hash = state.session_id;
      this.render(deriveView(state));
      this.clearError();
    } catch (e) {
      this.showError(e);
    }
  }

  private async submit() {
    const text = this.els.input.value.trim();
    if (!this.sessionId || !text || this.busy) return;
    this.busy = true;
    try {
      const outcome = await this.api.submitStep(this.sessionId, text);
      // input is kept on errors so the student can edit it
      if (outcome.feedback.soundness === "correct") {
        this.els.input.value = "";
      }
      await this.refresh();
      this.clearError();
    } catch (e) {
      this.showError(e);
    } finally {
      this.busy = false;
    }
  }

  private async hint() {
    if (!this.sessionId || this.busy) return;
    this.busy = true;
    try {
      const payload = await this.api.requestHint(this.sessionId);
      this.hintCards = appendHint(this.hintCards, payload).hints;
      await this.refresh();
      this.clearError();
    } catch (e) {
      this.showError(e);
    } finally {
      this.busy = false;
    }
  }

  private async refresh() {
    if (!this.sessionId) return;
    const state = await this.api.getSession(this.sessionId);
    this.render(deriveView(state));
  }

  render(view: SessionView) {
    this.els.banner.textContent = view.proofComplete
      ? "✓ proof complete"
      : view.interpretations > 1
        ? `${view.interpretations} possible readings of your proof`
        : "";
    this.els.banner.className = view.proofComplete ? "banner done" : "banner";
    this.els.hintButton.disabled = view.hintDisabled;
    this.els.submitButton.disabled = view.proofComplete;

    this.els.tasks.innerHTML = "";
    for (const task of view.tasks) {
      const card = document.createElement("div");
      card.className = task.marked ? "task marked" : "task";
      const head = document.createElement("div");
      head.className = "task-label";
      head.textContent = task.marked ? `${task.label} (current)` : task.label;
      card.appendChild(head);
      for (const hyp of task.hypotheses) {
        const line = document.createElement("div");
        line.className = "hyp";
        line.textContent = hyp;
        card.appendChild(line);
      }
      const goal = document.createElement("div");
      goal.className = "goal";
      goal.textContent = `⊢ ${task.goal}`;
      card.appendChild(goal);
      this.els.tasks.appendChild(card);
    }

    this.els.transcript.innerHTML = "";
    for (const item of view.transcript) {
      const row = document.createElement("div");
      row.className = `bubble ${item.kind}`;
      const text = document.createElement("div");
      text.className = "bubble-text";
      text.textContent = item.kind === "hint" ? `💡 ${item.text}` : item.text;
      row.appendChild(text);
      for (const badge of item.badges) {
        const chip = document.createElement("span");
        chip.className = `badge ${badge.color}`;
        chip.textContent = badge.value;
        row.appendChild(chip);
      }
      for (const message of item.messages) {
        const note = document.createElement("div");
        note.className = "note";
        note.textContent = message;
        row.appendChild(note);
      }
      this.els.transcript.appendChild(row);
    }
    this.els.transcript.scrollTop = this.els.transcript.scrollHeight;

    this.els.hints.innerHTML = "";
    for (const hint of view.hints) {
      const card = document.createElement("div");
      card.className = "hint-card";
      const label = document.createElement("div");
      label.className = "hint-label";
      label.textContent = hint.categoryLabel;
      const body = document.createElement("div");
      body.textContent = hint.text;
      card.appendChild(label);
      card.appendChild(body);
      this.els.hints.appendChild(card);
    }
  }

  private showError(e: unknown) {
    const message = e instanceof ApiError ? `${e.status}: ${e.message}` : String(e);
    this.els.error.textContent = message;
  }

  private clearError() {
    this.els.error.textContent = "";
  }
}

if (typeof document !== "undefined" && document.getElementById("step-input")) {
  void new App().start();
}
