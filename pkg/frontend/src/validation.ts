// Client-side mirrors of the server's action rules, so rule violations are
// caught before any request leaves the browser.

export interface DistanceCheck {
  ok: boolean;
  distance?: number;
  message?: string;
}

export interface AnswerCheck {
  ok: boolean;
  answer?: string;
  message?: string;
}

export function validateDistance(raw: string): DistanceCheck {
  const trimmed = raw.trim();
  if (!/^\d+$/.test(trimmed)) {
    return { ok: false, message: "distance must be a whole number of meters" };
  }
  const distance = Number(trimmed);
  if (distance < 1 || distance > 10) {
    return { ok: false, message: "distance must be between 1 and 10" };
  }
  return { ok: true, distance };
}

export function validateAnswer(raw: string): AnswerCheck {
  const answer = raw.trim();
  if (!answer) {
    return { ok: false, message: "provide an answer before stopping" };
  }
  return { ok: true, answer };
}
