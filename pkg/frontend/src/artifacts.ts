// Artifact browsing: a path tree plus preview-kind detection (images render
// inline, CSVs as tables, everything textual as plain text).

export type PreviewKind = 'image' | 'csv' | 'text' | 'binary';

const IMAGE_EXT = new Set(['png', 'jpg', 'jpeg', 'gif', 'svg', 'webp']);
const TEXT_EXT = new Set(['txt', 'md', 'json', 'jsonl', 'log', 'py', 'yaml', 'yml', 'html']);

export function previewKind(path: string): PreviewKind {
  const ext = path.split('.').pop()?.toLowerCase() ?? '';
  if (IMAGE_EXT.has(ext)) return 'image';
  if (ext === 'csv' || ext === 'tsv') return 'csv';
  if (TEXT_EXT.has(ext)) return 'text';
  return 'binary';
}

/** Minimal CSV parsing: quoted fields, embedded commas and quotes. */
export function parseCsv(text: string): string[][] {
  const rows: string[][] = [];
  let row: string[] = [];
  let field = '';
  let quoted = false;
  for (let i = 0; i < text.length; i += 1) {
    const ch = text[i];
    if (quoted) {
      if (ch === '"') {
        if (text[i + 1] === '"') {
          field += '"';
          i += 1;
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
    } else if (ch === '"') {
      quoted = true;
    } else if (ch === ',') {
      row.push(field);
      field = '';
    } else if (ch === '\n') {
      row.push(field);
      rows.push(row);
      row = [];
      field = '';
    } else if (ch !== '\r') {
      field += ch;
    }
  }
  if (field.length > 0 || row.length > 0) {
    row.push(field);
    rows.push(row);
  }
  return rows.filter((r) => !(r.length === 1 && r[0] === ''));
}

export interface TreeNode {
  name: string;
  path: string;
  children: TreeNode[];
  isFile: boolean;
}

export function buildTree(paths: string[]): TreeNode {
  const root: TreeNode = { name: '', path: '', children: [], isFile: false };
  for (const path of [...paths].sort()) {
    const parts = path.split('/');
    let node = root;
    let prefix = '';
    for (let i = 0; i < parts.length; i += 1) {
      prefix = prefix ? `${prefix}/${parts[i]}` : parts[i];
      const isFile = i === parts.length - 1;
      let child = node.children.find((c) => c.name === parts[i]);
      if (!child) {
        child = { name: parts[i], path: prefix, children: [], isFile };
        node.children.push(child);
      }
      node = child;
    }
  }
  return root;
}
