import { readFileSync } from 'node:fs';

/**
 * Reads the engine's JSONL corpus and yields every distinct text that
 * grounding will embed: per-turn utterances (history joined with single
 * spaces, the engine's rule), persona entries, and knowledge entries.
 * First-seen order is preserved so exports are deterministic.
 */
export function distinctCorpusTexts(corpusPath: string): string[] {
  const seen = new Set<string>();
  const texts: string[] = [];
  const push = (text: string) => {
    if (!seen.has(text)) {
      seen.add(text);
      texts.push(text);
    }
  };

  const lines = readFileSync(corpusPath, 'utf-8').split('\n');
  lines.forEach((line, index) => {
    const trimmed = line.trim();
    if (!trimmed) return;
    let dialog: any;
    try {
      dialog = JSON.parse(trimmed);
    } catch (err: any) {
      throw new Error(`${corpusPath} line ${index + 1}: ${err.message}`);
    }
    const { dialog_id, persona, knowledge, turns } = dialog;
    if (!dialog_id || !Array.isArray(persona) || !Array.isArray(knowledge) || !Array.isArray(turns)) {
      throw new Error(`${corpusPath} line ${index + 1}: not a corpus dialog object`);
    }
    for (const turn of turns) {
      if (!Array.isArray(turn.utterance_history) || turn.utterance_history.length === 0) {
        throw new Error(`${corpusPath} dialog ${dialog_id}: turn without utterance_history`);
      }
      push(turn.utterance_history.join(' '));
    }
    persona.forEach(push);
    knowledge.forEach(push);
  });
  return texts;
}
