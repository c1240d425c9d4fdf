/** Entity label set; must equal the host pipeline's enum exactly. */
export const LABELS = ["Data", "Method", "Process", "Material", "Location"] as const;

export type Label = (typeof LABELS)[number];

/** BIO tag inventory: O plus B-/I- per label, O fixed at index 0. */
export const TAGS: string[] = ["O"];
for (const label of LABELS) {
  TAGS.push(`B-${label}`);
  TAGS.push(`I-${label}`);
}

export const TAG_INDEX = new Map<string, number>(TAGS.map((t, i) => [t, i]));

export function assertLabelSet(labels: readonly string[]): void {
  if (labels.length !== LABELS.length || labels.some((l, i) => l !== LABELS[i])) {
    throw new Error(
      `label set must equal [${LABELS.join(", ")}] exactly, got [${labels.join(", ")}]`,
    );
  }
}
