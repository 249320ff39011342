import { FormatError, ParsedGraph } from "./types.js";
import { NpyArray } from "./npz.js";

/** Cora/Citeseer "content" + "cites" text format.
 *
 * content: <paper_id> <w_0> ... <w_{d-1}> <label_name>, one paper per line,
 * binary bag-of-words features. cites: <cited> <citing> pairs; links that
 * reference papers absent from the content file are dropped and counted.
 * Label names map to indices in sorted order, so exports are reproducible.
 */
export function parseLinqs(content: string, cites: string): ParsedGraph {
	const ids: string[] = [];
	const rows: string[][] = [];
	const labelNames: string[] = [];
	for (const line of content.split("\n")) {
		const trimmed = line.trim();
		if (!trimmed) continue;
		const parts = trimmed.split(/\s+/);
		if (parts.length < 3) throw new FormatError(`short content line: ${trimmed.slice(0, 60)}`);
		ids.push(parts[0]);
		rows.push(parts.slice(1, -1));
		labelNames.push(parts[parts.length - 1]);
	}
	const n = ids.length;
	if (n === 0) throw new FormatError("content file has no rows");
	const d = rows[0].length;
	const features = new Float32Array(n * d);
	for (let i = 0; i < n; i++) {
		if (rows[i].length !== d) {
			throw new FormatError(`row ${i} has ${rows[i].length} features, expected ${d}`);
		}
		for (let j = 0; j < d; j++) features[i * d + j] = Number(rows[i][j]);
	}
	const classes = [...new Set(labelNames)].sort();
	const classIndex = new Map(classes.map((c, i) => [c, i]));
	const labels = new Uint32Array(n);
	for (let i = 0; i < n; i++) labels[i] = classIndex.get(labelNames[i])!;

	const nodeIndex = new Map(ids.map((id, i) => [id, i]));
	const links: Array<[number, number]> = [];
	let dropped = 0;
	for (const line of cites.split("\n")) {
		const trimmed = line.trim();
		if (!trimmed) continue;
		const [a, b] = trimmed.split(/\s+/);
		const u = nodeIndex.get(a);
		const v = nodeIndex.get(b);
		if (u === undefined || v === undefined) {
			dropped++;
			continue;
		}
		links.push([u, v]);
	}
	return {
		features, numNodes: n, numFeatures: d, labels,
		numClasses: classes.length, links, droppedLinks: dropped,
		sourceLinks: links.length + dropped,
	};
}

/** PubMed-Diabetes tab format.
 *
 * NODE.paper.tab: two header lines, then
 *   <id>\tlabel=<1|2|3>\tw-term=<tfidf>...\tsummary=...
 * The second header line declares the attribute vocabulary order, which
 * fixes the feature index of each term. cites.tab: two header lines, then
 *   <edge_id>\tpaper:<id>\t|\tpaper:<id>
 */
export function parsePubmed(nodes: string, cites: string): ParsedGraph {
	const lines = nodes.split("\n");
	if (lines.length < 3) throw new FormatError("truncated PubMed node file");
	const vocabFields = lines[1].trim().split("\t");
	const termIndex = new Map<string, number>();
	for (const field of vocabFields) {
		// fields look like "numeric:w-term:0.0"; keep declaration order
		const m = /^[^:]+:(w-[^:]+):/.exec(field.trim());
		if (m) termIndex.set(m[1], termIndex.size);
	}
	if (termIndex.size === 0) throw new FormatError("PubMed vocabulary header not found");
	const d = termIndex.size;

	const ids: string[] = [];
	const labelList: number[] = [];
	const rowEntries: Array<Array<[number, number]>> = [];
	for (const line of lines.slice(2)) {
		const trimmed = line.trim();
		if (!trimmed) continue;
		const parts = trimmed.split("\t");
		const id = parts[0];
		let label = -1;
		const entries: Array<[number, number]> = [];
		for (const part of parts.slice(1)) {
			if (part.startsWith("label=")) {
				label = Number(part.slice(6)) - 1; // labels are 1-based
			} else if (part.startsWith("w-")) {
				const eq = part.indexOf("=");
				const idx = termIndex.get(part.slice(0, eq));
				if (idx !== undefined) entries.push([idx, Number(part.slice(eq + 1))]);
			}
		}
		if (label < 0) throw new FormatError(`node ${id} has no label field`);
		ids.push(id);
		labelList.push(label);
		rowEntries.push(entries);
	}
	const n = ids.length;
	const features = new Float32Array(n * d);
	for (let i = 0; i < n; i++) {
		for (const [j, value] of rowEntries[i]) features[i * d + j] = value;
	}
	const labels = Uint32Array.from(labelList);
	const numClasses = Math.max(...labelList) + 1;

	const nodeIndex = new Map(ids.map((id, i) => [id, i]));
	const links: Array<[number, number]> = [];
	let dropped = 0;
	for (const line of cites.split("\n").slice(2)) {
		const trimmed = line.trim();
		if (!trimmed) continue;
		const refs = [...trimmed.matchAll(/paper:(\S+)/g)].map((m) => m[1]);
		if (refs.length !== 2) continue;
		const u = nodeIndex.get(refs[0]);
		const v = nodeIndex.get(refs[1]);
		if (u === undefined || v === undefined) {
			dropped++;
			continue;
		}
		links.push([u, v]);
	}
	return {
		features, numNodes: n, numFeatures: d, labels, numClasses, links,
		droppedLinks: dropped, sourceLinks: links.length + dropped,
	};
}

/** gnn-benchmark .npz format: CSR adjacency + CSR attributes + labels. */
export function parseNpzGraph(arrays: Map<string, NpyArray>): ParsedGraph {
	const need = (key: string): NpyArray => {
		const arr = arrays.get(key);
		if (!arr) throw new FormatError(`npz is missing ${key}`);
		return arr;
	};
	const adjShape = toNumbers(need("adj_shape").data);
	const n = adjShape[0];
	const adjIndptr = toNumbers(need("adj_indptr").data);
	const adjIndices = toNumbers(need("adj_indices").data);
	const links: Array<[number, number]> = [];
	for (let i = 0; i < n; i++) {
		for (let p = adjIndptr[i]; p < adjIndptr[i + 1]; p++) {
			links.push([i, adjIndices[p]]);
		}
	}

	const attrShape = toNumbers(need("attr_shape").data);
	const d = attrShape[1];
	const attrIndptr = toNumbers(need("attr_indptr").data);
	const attrIndices = toNumbers(need("attr_indices").data);
	const attrData = need("attr_data").data;
	const features = new Float32Array(n * d);
	for (let i = 0; i < n; i++) {
		for (let p = attrIndptr[i]; p < attrIndptr[i + 1]; p++) {
			features[i * d + attrIndices[p]] = Number(attrData[p]);
		}
	}
	const labelsRaw = toNumbers(need("labels").data);
	const labels = Uint32Array.from(labelsRaw);
	const numClasses = Math.max(...labelsRaw) + 1;
	return {
		features, numNodes: n, numFeatures: d, labels, numClasses, links,
		droppedLinks: 0, sourceLinks: Math.floor(links.length / 2),
	};
}

function toNumbers(data: NpyArray["data"]): number[] {
	const out = new Array<number>(data.length);
	for (let i = 0; i < data.length; i++) out[i] = Number(data[i]);
	return out;
}
