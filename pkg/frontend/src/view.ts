// Pure derivation of what the page shows from service responses.
// Mirrors the service's feedback policy exactly: the soundness badge is
// always shown, granularity/relevance badges only when the service sent a
// violation message for them.

import type {
  FeedbackVector,
  HintPayload,
  SessionState,
  TranscriptItem,
} from "./api.js";

export type BadgeColor = "green" | "red" | "amber" | "gray";

export interface Badge {
  dimension: "soundness" | "granularity" | "relevance";
  value: string;
  color: BadgeColor;
}

export interface TranscriptCard {
  kind: "step" | "hint";
  text: string;
  badges: Badge[];
  messages: string[];
  categoryLabel?: string;
}

export interface HintCard {
  position: number;
  categoryLabel: string;
  text: string;
}

export interface SessionView {
  sessionId: string;
  exercise: string;
  tasks: { label: string; hypotheses: string[]; goal: string; marked: boolean }[];
  transcript: TranscriptCard[];
  hints: HintCard[];
  proofComplete: boolean;
  interpretations: number;
  hintDisabled: boolean;
}

const SOUNDNESS_COLORS: Record<string, BadgeColor> = {
  correct: "green",
  incorrect: "red",
  buggy: "red",
  unknown: "gray",
};

export function badgesFor(feedback: FeedbackVector): Badge[] {
  const badges: Badge[] = [
    {
      dimension: "soundness",
      value: feedback.soundness,
      color: SOUNDNESS_COLORS[feedback.soundness] ?? "gray",
    },
  ];
  // the service only flags violations; anything else stays silent
  if (feedback.granularity === "too_big" || feedback.granularity === "too_small") {
    badges.push({ dimension: "granularity", value: feedback.granularity, color: "amber" });
  }
  if (feedback.relevance === "irrelevant") {
    badges.push({ dimension: "relevance", value: feedback.relevance, color: "amber" });
  }
  return badges;
}

export function hintLabel(category: number | null | undefined, name?: string): string {
  if (category === null || category === undefined) {
    return name ? name : "hint";
  }
  return name ? `${category} · ${name}` : `category ${category}`;
}

function transcriptCard(item: TranscriptItem): TranscriptCard {
  if (item.kind === "hint") {
    return {
      kind: "hint",
      text: item.text,
      badges: [],
      messages: [],
      categoryLabel: hintLabel(item.category, item.category_name),
    };
  }
  return {
    kind: "step",
    text: item.text,
    badges: item.feedback ? badgesFor(item.feedback) : [],
    messages: item.messages ?? [],
  };
}

export function deriveView(state: SessionState): SessionView {
  const transcript = state.transcript.map(transcriptCard);
  const hints: HintCard[] = [];
  for (const item of state.transcript) {
    if (item.kind === "hint") {
      hints.push({
        position: hints.length,
        categoryLabel: hintLabel(item.category, item.category_name),
        text: item.text,
      });
    }
  }
  return {
    sessionId: state.session_id,
    exercise: state.exercise,
    tasks: state.open_sequents.map((s) => ({
      label: s.label,
      hypotheses: s.hypotheses.map((h) =>
        h.label ? `${h.label}: ${h.formula}` : h.formula,
      ),
      goal: s.goal,
      marked: s.marked,
    })),
    transcript,
    hints,
    proofComplete: state.proof_complete,
    interpretations: state.interpretations,
    hintDisabled: state.proof_complete,
  };
}

export interface HintAppendResult {
  hints: HintCard[];
  monotone: boolean;
}

export function appendHint(hints: HintCard[], payload: HintPayload): HintAppendResult {
  const card: HintCard = {
    position: hints.length,
    categoryLabel: hintLabel(payload.category, payload.category_name),
    text: payload.text,
  };
  const prev = hints[hints.length - 1];
  const prevCat = prev ? parseInt(prev.categoryLabel, 10) : Number.NEGATIVE_INFINITY;
  const thisCat = payload.category ?? Number.NEGATIVE_INFINITY;
  const monotone =
    !prev || Number.isNaN(prevCat) || thisCat >= prevCat || payload.category === null;
  return { hints: [...hints, card], monotone };
}
