import { mkdtempSync, writeFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';

/** A corpus with exactly 20 distinct texts: 2 dialogs x (2 utterances +
 * 5 personas + 3 knowledge entries). */
export function writeFixtureCorpus(): { dir: string; corpusPath: string; distinctTexts: number } {
  const dir = mkdtempSync(join(tmpdir(), 'ncli-export-test-'));
  const dialogs = ['alpha', 'beta'].map((name) => ({
    dialog_id: name,
    persona: Array.from({ length: 5 }, (_, i) => `${name} persona ${i} enjoys something`),
    knowledge: Array.from({ length: 3 }, (_, j) => `${name} knowledge ${j} about the landmark`),
    turns: Array.from({ length: 2 }, (_, t) => ({
      utterance_history: [`${name} question ${t} about the landmark`],
      answer: `${name} answer ${t}`,
      persona_labels: [t === 0, false, false, false, t === 1],
      knowledge_label: t,
    })),
  }));
  const corpusPath = join(dir, 'corpus.jsonl');
  writeFileSync(corpusPath, dialogs.map((d) => JSON.stringify(d)).join('\n') + '\n');
  return { dir, corpusPath, distinctTexts: 20 };
}
