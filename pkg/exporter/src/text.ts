/**
 * Key normalization and tokenization, mirrored from the engine so that both
 * producers of a dense-feature file agree on keys byte for byte. Any change
 * here must be matched on the engine side, and vice versa.
 */

// ASCII whitespace only; \s would also swallow unicode spaces the engine
// leaves alone.
const WS_RE = /[ \t\n\r\f\v]+/g;

// The 32 ASCII punctuation characters, the engine's edge-strip set.
const PUNCT = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";

/** Canonical lookup key: NFC, lowercased, ASCII whitespace collapsed. */
export function normalizeKey(text: string): string {
  const lowered = text.normalize("NFC").toLowerCase();
  return lowered.replace(WS_RE, " ").trim();
}

/**
 * Lowercase, split on whitespace, strip edge punctuation per token.
 *
 * Deliberately no NFC here: the engine tokenizer leaves code points as they
 * arrive, and token keys must match its output exactly.
 */
export function tokenize(text: string): string[] {
  const tokens: string[] = [];
  for (const word of text.toLowerCase().split(WS_RE)) {
    const tok = stripEdges(word);
    if (tok) tokens.push(tok);
  }
  return tokens;
}

function stripEdges(word: string): string {
  let start = 0;
  let end = word.length;
  while (start < end && PUNCT.includes(word[start])) start++;
  while (end > start && PUNCT.includes(word[end - 1])) end--;
  return word.slice(start, end);
}
